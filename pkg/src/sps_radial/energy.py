"""Energy functional, its L2 gradient, scaling transforms and rearrangement.

    E(u) = 1/2 int |grad u|^2 - 1/4 int (I_2 * u^2) u^2 + C_S/3 int |u|^3

All integrals are the discrete ones of :mod:`sps_radial.radial_core`; the
kinetic term is the Dirichlet form paired with ``laplacian_radial``, so
:func:`l2_gradient` is the exact gradient of the discrete :func:`energy`
with respect to ``inner_3d``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameterError
from .hartree import hartree_potential
from .radial_core import (
    RadialField,
    _linear_resample,
    dirichlet_form,
    integrate_3d,
    laplacian_radial,
)


@dataclass(frozen=True)
class ModelParams:
    """``C_S`` (Slater coefficient) and the Hartree sign used by the far-field analysis.

    ``epsilon = +1`` is the attractive case written as
    ``-Delta Q + Q = epsilon (I_2 * Q^2) Q + f(Q) Q``.  The minimiser and the
    shooting solver always use the attractive form.
    """

    C_S: float = 1.0
    epsilon: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.C_S) and self.C_S >= 0):
            raise InvalidParameterError(f"C_S must be nonnegative, got {self.C_S}")
        if self.epsilon not in (1, -1):
            raise InvalidParameterError(f"epsilon must be +1 or -1, got {self.epsilon}")


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    hartree: float
    slater: float
    total: float
    mass: float

    def to_json(self) -> str:
        return json.dumps({k: float(format(v, ".17g")) for k, v in asdict(self).items()}, indent=2)


def energy(u: RadialField, p: ModelParams) -> EnergyBreakdown:
    """Evaluate the three energy components, their signed total and the mass ``int u^2``."""
    u2 = u * u
    kinetic = 0.5 * dirichlet_form(u, u)
    V = hartree_potential(u).V
    hartree = 0.25 * integrate_3d(V * u2)
    slater = p.C_S / 3.0 * integrate_3d(abs(u) ** 3)
    return EnergyBreakdown(
        kinetic=kinetic,
        hartree=hartree,
        slater=slater,
        total=kinetic - hartree + slater,
        mass=integrate_3d(u2),
    )


def l2_gradient(u: RadialField, p: ModelParams, V: RadialField | None = None) -> RadialField:
    """``-Delta u - (I_2 * u^2) u + C_S |u| u``.

    Pass ``V`` to reuse an already computed potential of ``u``.
    """
    if V is None:
        V = hartree_potential(u).V
    v = u.values
    g = -laplacian_radial(u).values - V.values * v + p.C_S * np.abs(v) * v
    return RadialField(u.grid, g)


def scale_dilate(u: RadialField, t: float) -> RadialField:
    """Mass-preserving dilation ``t^{3/2} u(t r)``, linearly resampled on the same grid."""
    if not t > 0:
        raise InvalidParameterError(f"dilation factor must be positive, got {t}")
    if t == 1:
        return u
    return RadialField(u.grid, t**1.5 * _linear_resample(u, t * u.grid.nodes))


def scale_mass(u: RadialField, M: float) -> RadialField:
    """``M^4 u(M^2 r)``: maps unit mass-norm to mass-norm ``M`` and scales E by ``M^6``."""
    if not M > 0:
        raise InvalidParameterError(f"mass-norm must be positive, got {M}")
    if M == 1:
        return u
    return RadialField(u.grid, M**4 * _linear_resample(u, M**2 * u.grid.nodes))


def _is_nonincreasing(v: np.ndarray) -> bool:
    return bool(np.all(np.diff(v) <= 0.0))


def decreasing_rearrangement(u: RadialField) -> RadialField:
    """Radially non-increasing field with the same L2 and L3 integrals as ``|u|``.

    Node values of ``|u|`` are sorted in decreasing order and laid out along
    the cumulative volume coordinate, each carrying the shell volume of the
    node it came from.  The resulting step function is averaged over the
    target shells, then a monotone power map ``c t^b`` restores the L2 and
    L3 integrals that averaging perturbs at O(h^2).  Already non-increasing
    inputs are returned unchanged.
    """
    a = np.abs(u.values)
    if _is_nonincreasing(a):
        return RadialField(u.grid, a)
    vol = u.grid.volume_weights
    order = np.argsort(-a, kind="stable")
    s = a[order]
    knots = np.concatenate(([0.0], np.cumsum(vol[order])))
    primitive = np.concatenate(([0.0], np.cumsum(s * vol[order])))
    bounds = np.concatenate(([0.0], np.cumsum(vol)))
    bounds[-1] = knots[-1]
    acc = np.interp(bounds, knots, primitive)
    avg = np.diff(acc) / vol
    # averaging a non-increasing step function keeps order up to rounding
    avg = np.minimum.accumulate(avg)
    return RadialField(u.grid, _match_l2_l3(avg, vol, np.dot(vol, a**2), np.dot(vol, a**3)))


def _match_l2_l3(v: np.ndarray, vol: np.ndarray, target2: float, target3: float) -> np.ndarray:
    if target2 == 0.0:
        return v
    pos = v > 0
    x = v[pos] / v[pos].max()
    w = vol[pos]
    logx = np.log(x)
    goal = target3 / target2**1.5

    def mismatch(b):
        # ratio of L3 to L2 norms of x^b, scale-free
        return np.log(np.dot(w, np.exp(3 * b * logx))) - 1.5 * np.log(np.dot(w, np.exp(2 * b * logx))) - np.log(goal)

    lo, hi = 0.8, 1.25
    while mismatch(lo) > 0 and lo > 1e-3:
        lo *= 0.5
    while mismatch(hi) < 0 and hi < 1e3:
        hi *= 2.0
    b = brentq(mismatch, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    y = x**b
    c = np.sqrt(target2 / np.dot(w, y * y))
    out = np.zeros_like(v)
    out[pos] = c * y
    return out


def mass_normalize(u: RadialField, M: float) -> RadialField:
    """Rescale ``u`` so that ``integrate_3d(u^2) = M^2``."""
    m = integrate_3d(u * u)
    if m <= 0:
        raise InvalidParameterError("cannot normalise a zero field")
    return u * (M / np.sqrt(m))

