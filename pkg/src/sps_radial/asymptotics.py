"""Far-field laws of radial steady states.

For ``-Delta Q + Q = epsilon V Q + f(Q) Q`` with ``V = I_2 * Q^2`` the
potential outside the bulk of the density is ``V = alpha/r + O(r^-2)``,
``alpha = (1/4 pi) int Q^2``, and the profile obeys

    Q(r) ~ c r^{-(1 - epsilon alpha / 2)} e^{-r},   c in (0, inf).

:func:`decay_fit` checks this by compensating the computed profile with the
closed-form exponent and measuring how flat the result is.  The sign
convention is the equation-side one above: ``epsilon = +1`` is attractive.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .energy import ModelParams
from .errors import DomainError, InvalidParameterError
from .radial_core import RadialField, integrate_3d, require_same_grid

DRIFT_THRESHOLD = 0.02
# relative allowance for rounding when testing monotonicity
MONOTONE_RTOL = 1e-10


def alpha_mass(Q: RadialField) -> float:
    """``(1/4 pi) int Q^2 dx``."""
    return integrate_3d(Q * Q) / (4.0 * math.pi)


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar nonlinearity ``f`` with declared small-argument order ``beta``: ``f(t)/t^beta -> 0``."""

    func: Callable[[np.ndarray], np.ndarray]
    beta: float
    name: str = "custom"

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta}")

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))


def slater(C_S: float) -> Nonlinearity:
    """``f(t) = -C_S t``, the Slater correction in this sign convention."""
    return Nonlinearity(lambda t: -C_S * t, beta=0.5, name="slater")


def effective_w(
    Q: RadialField, V: RadialField, p: ModelParams, f: Optional[Nonlinearity] = None
) -> RadialField:
    """``W = 1 - epsilon V - f(Q)``; the Slater nonlinearity of ``p`` by default."""
    grid = require_same_grid(Q, V)
    f = f if f is not None else slater(p.C_S)
    return RadialField(grid, 1.0 - p.epsilon * V.values - f(Q.values))


def _tail_slice(grid, window):
    lo, hi = window if window is not None else (0.5 * grid.r_max, grid.r_max)
    r = grid.nodes
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 3:
        raise InvalidParameterError(f"window {window} holds fewer than 3 nodes")
    return sel


@dataclass(frozen=True)
class ExpansionReport:
    """Bounds on ``(V - alpha/r) r^2`` and ``(V' + alpha/r^2) r^3`` over a tail window."""

    alpha: float
    window: tuple
    value_bound: float
    derivative_bound: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "window": list(self.window),
            "value_bound": self.value_bound,
            "derivative_bound": self.derivative_bound,
        }


def potential_expansion_check(V: RadialField, alpha: float, window=None) -> ExpansionReport:
    """Remainders of the ``alpha/r`` expansion of ``V`` and of ``V'`` over the tail (default ``[r_max/2, r_max]``).

    The derivative is taken at faces from adjacent nodes; the last node is
    excluded since its outer neighbour is the boundary ghost.
    """
    grid = V.grid
    sel = _tail_slice(grid, window)
    r, v = grid.nodes, V.values
    value = np.abs((v - alpha / r) * r**2)[sel]

    rf = r[:-1] + 0.5 * grid.h
    dv = np.diff(v) / grid.h
    sel_f = sel[:-1] & sel[1:]
    deriv = np.abs((dv + alpha / rf**2) * rf**3)[sel_f]
    lo, hi = window if window is not None else (0.5 * grid.r_max, grid.r_max)
    return ExpansionReport(
        float(alpha),
        (float(lo), float(hi)),
        float(value.max()),
        float(deriv.max()) if deriv.size else 0.0,
    )


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    epsilon: int
    window: tuple
    limit_estimate: float
    drift: float
    threshold: float = DRIFT_THRESHOLD

    @property
    def exponent(self) -> float:
        return 1.0 - self.epsilon * self.alpha / 2.0

    @property
    def passed(self) -> bool:
        return abs(self.drift) <= self.threshold and self.limit_estimate > 0 and math.isfinite(self.limit_estimate)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "window": list(self.window),
            "limit_estimate": self.limit_estimate,
            "drift": self.drift,
            "pass": self.passed,
        }

    def export(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_round17(self.to_dict()), indent=2) + "\n")
        return path


def _round17(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float):
            out[k] = float(format(v, ".17g"))
        elif isinstance(v, list):
            out[k] = [float(format(x, ".17g")) if isinstance(x, float) else x for x in v]
        else:
            out[k] = v
    return out


def compensated_log_profile(Q: RadialField, exponent: float, window) -> tuple[np.ndarray, np.ndarray]:
    """``(r, log Q + r + exponent log r)`` on the window nodes."""
    r = Q.grid.nodes
    sel = (r >= window[0]) & (r <= window[1])
    q = Q.values[sel]
    if q.size < 3:
        raise InvalidParameterError(f"window {window} holds fewer than 3 nodes")
    if np.any(q <= 0):
        raise DomainError("profile must be strictly positive on the fit window")
    rs = r[sel]
    return rs, np.log(q) + rs + exponent * np.log(rs)


def decay_fit(
    Q: RadialField,
    epsilon: int = 1,
    window=None,
    alpha: Optional[float] = None,
    threshold: float = DRIFT_THRESHOLD,
) -> DecayFit:
    """Fit the compensated profile ``g = log Q + r + (1 - epsilon alpha/2) log r``.

    ``limit_estimate`` is ``exp`` of the mean of ``g`` over the upper half of
    the window and ``drift`` its least-squares slope over the whole window.
    ``alpha`` defaults to :func:`alpha_mass` of ``Q``; pass it to freeze the
    exponent.  The window defaults to ``[r_max/3, 2 r_max/3]``.
    """
    if epsilon not in (1, -1):
        raise InvalidParameterError(f"epsilon must be +1 or -1, got {epsilon}")
    grid = Q.grid
    if window is None:
        window = (grid.r_max / 3.0, 2.0 * grid.r_max / 3.0)
    lo, hi = float(window[0]), float(window[1])
    if not (0 < lo < hi <= grid.r_max):
        raise InvalidParameterError(f"window must satisfy 0 < r_lo < r_hi <= r_max, got {window}")
    a = alpha_mass(Q) if alpha is None else float(alpha)
    rs, g = compensated_log_profile(Q, 1.0 - epsilon * a / 2.0, (lo, hi))
    slope = float(np.polyfit(rs, g, 1)[0])
    upper = rs >= 0.5 * (lo + hi)
    limit = float(np.exp(np.mean(g[upper])))
    return DecayFit(a, int(epsilon), (lo, hi), limit, slope, threshold)


def wkb_compensation(Q: RadialField, W: RadialField, r0: float) -> RadialField:
    """``Q(r) r exp(int_{r0}^r sqrt(W))`` for ``r >= r0`` (trapezoid rule), 0 below ``r0``.

    Tends to a constant when ``Q`` follows the far-field law; its ratio to the
    closed-form compensation therefore tends to a constant as well.
    """
    grid = require_same_grid(Q, W)
    r = grid.nodes
    if np.any(W.values[r >= r0] < 0):
        raise DomainError("W must be nonnegative beyond r0")
    s = np.sqrt(np.clip(W.values, 0.0, None))
    phase = np.concatenate(([0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * grid.h)))
    i0 = int(np.searchsorted(r, r0))
    out = np.zeros(grid.n)
    out[i0:] = Q.values[i0:] * r[i0:] * np.exp(phase[i0:] - phase[i0])
    return RadialField(grid, out)


def envelope_ratio(Q: RadialField) -> np.ndarray:
    """``Q / G`` with ``G = e^{-r/2} / r``."""
    r = Q.grid.nodes
    return Q.values * r * np.exp(0.5 * r)


def envelope_check(Q: RadialField, window=None) -> bool:
    """True when ``Q / G`` is non-increasing on the tail (default ``[r_max/2, r_max]``).

    Increases below ``MONOTONE_RTOL`` relative are attributed to rounding.
    """
    sel = _tail_slice(Q.grid, window)
    if np.any(Q.values[sel] <= 0):
        return False
    ratio = envelope_ratio(Q)[sel]
    return bool(np.all(np.diff(ratio) <= MONOTONE_RTOL * np.abs(ratio[:-1])))
