"""Uniform radial grids, 3D radial quadrature and the radial Laplacian.

Nodes sit at cell centres ``r_i = (i - 1/2) h`` with ``h = r_max / n``, so the
origin is never stored.  Cell faces sit at ``i h``.  Every operator here uses
the same pair of ingredients:

* node weight ``h`` (midpoint rule), so that
  ``integrate_3d(f) = 4 pi sum_i h f_i r_i^2``;
* face coefficient ``a_{i+1/2} = r_i r_{i+1}`` standing in for ``rho^2`` at the
  face between nodes ``i`` and ``i+1``.

With that face coefficient the conservative Laplacian is exact on constants
and on ``r^2`` at every node including the first, and the discrete kinetic
energy ``4 pi sum_i a_{i+1/2} (f_{i+1} - f_i)^2 / h`` is exactly the
quadratic form of ``-laplacian_radial``.  The ghost value beyond the last
node is 0 (homogeneous Dirichlet at ``r_max + h/2``); the ghost below the
first node is the even reflection ``f_0 = f_1``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GridMismatchError, InvalidParameterError

FOUR_PI = 4.0 * np.pi
MIN_NODES = 16


@dataclass(frozen=True)
class RadialGrid:
    """Uniform cell-centred discretisation of ``[0, r_max]``."""

    r_max: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise InvalidParameterError(f"r_max must be positive, got {self.r_max}")
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise InvalidParameterError(f"n must be an integer >= {MIN_NODES}, got {self.n}")
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "n", int(self.n))

    @cached_property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        r = (np.arange(1, self.n + 1) - 0.5) * self.h
        r.setflags(write=False)
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w.setflags(write=False)
        return w

    @cached_property
    def volume_weights(self) -> np.ndarray:
        """``w_i r_i^2``: the radial measure of node ``i`` without the 4 pi."""
        v = self.weights * self.nodes**2
        v.setflags(write=False)
        return v

    @cached_property
    def face_coefficients(self) -> np.ndarray:
        """``a_{i+1/2} = r_i r_{i+1}`` for ``i = 1..n`` (last face uses the ghost node)."""
        r = self.nodes
        a = r * (r + self.h)
        a.setflags(write=False)
        return a

    def field(self, values) -> "RadialField":
        return RadialField(self, values)

    def evaluate(self, func: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        """Sample ``func`` at the nodes."""
        return RadialField(self, func(np.asarray(self.nodes)))

    def zeros(self) -> "RadialField":
        return RadialField(self, np.zeros(self.n))


def make_grid(r_max: float, n: int) -> RadialGrid:
    """Build a uniform grid with ``n`` cell-centred nodes on ``[0, r_max]``."""
    return RadialGrid(r_max, n)



@dataclass(frozen=True, eq=False)
class RadialField:
    """Real values sampled on the nodes of a :class:`RadialGrid`.

    Instances are immutable; arithmetic returns new fields and refuses to mix
    grids.
    """

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise InvalidParameterError(
                f"expected {self.grid.n} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def __len__(self):
        return self.grid.n

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def _other(self, other):
        if isinstance(other, RadialField):
            require_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return RadialField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RadialField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return RadialField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return RadialField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return RadialField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return RadialField(self.grid, -self.values)

    def __abs__(self):
        return RadialField(self.grid, np.abs(self.values))

    def __pow__(self, p):
        return RadialField(self.grid, self.values**p)

    def map(self, func) -> "RadialField":
        return RadialField(self.grid, func(self.values))

    def value_at_origin(self) -> float:
        """Even quadratic extrapolation ``(9 f_1 - f_2) / 8`` to ``r = 0``."""
        v = self.values
        return float((9.0 * v[0] - v[1]) / 8.0)

    def interpolate(self, r) -> np.ndarray:
        """Piecewise-linear evaluation with even reflection at 0 and zero beyond the ghost node."""
        return _linear_resample(self, np.asarray(r, dtype=float))

    def to_csv(self, path=None) -> str:
        """Write ``r,value`` rows at 17 significant digits; returns the text."""
        return write_fields_csv({"value": self}, path)

    @classmethod
    def from_csv(cls, source) -> "RadialField":
        grid, columns = read_fields_csv(source)
        if "value" not in columns:
            raise InvalidParameterError("CSV lacks a 'value' column")
        return cls(grid, columns["value"])


def require_same_grid(*fields: RadialField) -> RadialGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(
                f"fields live on different grids: {grid} vs {f.grid}"
            )
    return grid


def _linear_resample(f: RadialField, x: np.ndarray) -> np.ndarray:
    g = f.grid
    xp = np.concatenate(([-g.nodes[0]], g.nodes, [g.r_max + 0.5 * g.h]))
    fp = np.concatenate(([f.values[0]], f.values, [0.0]))
    return np.interp(np.abs(x), xp, fp, right=0.0)


def integrate_3d(f: RadialField) -> float:
    """Return ``int_{R^3} f dx = 4 pi sum_i w_i f_i r_i^2`` for a radial field."""
    return float(FOUR_PI * np.dot(f.grid.volume_weights, f.values))


def inner_3d(f: RadialField, g: RadialField) -> float:
    require_same_grid(f, g)
    return float(FOUR_PI * np.dot(f.grid.volume_weights, f.values * g.values))


def norm_3d(f: RadialField) -> float:
    return float(np.sqrt(inner_3d(f, f)))


def forward_differences(f: RadialField) -> np.ndarray:
    """``(f_{i+1} - f_i) / h`` at the faces ``i h``, ``i = 1..n``, ghost ``f_{n+1} = 0``."""
    v = f.values
    nxt = np.append(v[1:], 0.0)
    return (nxt - v) / f.grid.h


def dirichlet_form(f: RadialField, g: RadialField) -> float:
    """Discrete ``int grad f . grad g dx`` matching :func:`laplacian_radial`."""
    grid = require_same_grid(f, g)
    return float(
        FOUR_PI * grid.h * np.dot(grid.face_coefficients, forward_differences(f) * forward_differences(g))
    )


def laplacian_radial(f: RadialField) -> RadialField:
    """Second-order conservative stencil for ``f'' + (2/r) f'``.

    Row ``i`` reads ``[a_{i+1/2}(f_{i+1}-f_i) - a_{i-1/2}(f_i-f_{i-1})] / (h^2 r_i^2)``;
    near the origin this reduces to ``3 (f_2 - f_1) / h^2``.
    """
    g = f.grid
    flux = g.face_coefficients * forward_differences(f) * g.h  # a_{i+1/2}(f_{i+1}-f_i)
    div = flux - np.concatenate(([0.0], flux[:-1]))
    return RadialField(g, div / (g.h**2 * g.nodes**2))


def laplacian_matrix(grid: RadialGrid):
    """Sparse (CSC) matrix of :func:`laplacian_radial`."""
    import scipy.sparse as sp

    a = grid.face_coefficients
    denom = grid.h**2 * grid.nodes**2
    main = -a.copy()
    main[1:] -= a[:-1]
    upper = a[:-1] / denom[:-1]
    lower = a[:-1] / denom[1:]
    return sp.diags([lower, main / denom, upper], [-1, 0, 1], format="csc")


# --------------------------------------------------------------------------
# CSV persistence
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_fields_csv(columns: dict, path=None) -> str:
    """Serialise one or more fields sharing a grid as CSV (first column ``r``)."""
    fields = list(columns.values())
    grid = require_same_grid(*fields)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r", *columns.keys()])
    for i, r in enumerate(grid.nodes):
        writer.writerow([_fmt(r)] + [_fmt(f.values[i]) for f in fields])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_fields_csv(source):
    """Inverse of :func:`write_fields_csv`; returns ``(grid, {name: values})``.

    ``source`` is a path or CSV text.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [row for row in rows[1:] if row]
    if not header or header[0] != "r":
        raise InvalidParameterError("CSV header must start with 'r'")
    data = np.array(body, dtype=float)
    r = data[:, 0]
    n = len(r)
    grid = RadialGrid(float(f"{2.0 * n * r[0]:.12g}"), n)
    if not np.allclose(grid.nodes, r, rtol=0, atol=1e-9 * grid.r_max):
        raise InvalidParameterError("CSV radii are not a uniform cell-centred grid")
    return grid, {name: data[:, k + 1] for k, name in enumerate(header[1:])}
