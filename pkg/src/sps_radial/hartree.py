"""Newton potential ``V = I_2 * Q^2`` of a radial density via cumulative sums.

For a radial density ``rho = Q^2``

    V(r) = (1/r) int_0^r s^2 rho ds + int_r^inf s rho ds

(the ``1/(4 pi)`` of ``I_2`` cancels the shell area).  On the grid this is the
symmetric kernel ``1/max(r_i, r_j)`` against the node measure ``h r_j^2``, with
the diagonal ``j = i`` booked in the inner sum.  That choice makes the
discrete potential satisfy ``laplacian_radial(V) = -rho`` exactly at every node
but the last, and makes ``(1/4) <V[u], u^2>`` have gradient ``V u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .radial_core import RadialField, laplacian_radial, require_same_grid


@dataclass(frozen=True)
class HartreeData:
    V: RadialField
    A_Q: RadialField
    lambda_Q: float


def kernel_K(r: float, s: float) -> float:
    """Newton kernel ``K(r, s) = s (1 - s/r)`` in three dimensions, for ``0 <= s <= r``."""
    if not r > 0:
        raise InvalidParameterError(f"r must be positive, got {r}")
    if s < 0 or s > r:
        raise InvalidParameterError(f"need 0 <= s <= r, got s={s}, r={r}")
    return s * (1.0 - s / r)


def _cumulative_moments(rho: np.ndarray, r: np.ndarray, h: float):
    m1_terms = h * r * rho
    m2_terms = m1_terms * r
    return np.cumsum(m1_terms), np.cumsum(m2_terms), m1_terms


def newton_potential(rho: np.ndarray, r: np.ndarray, h: float) -> np.ndarray:
    """Raw-array version of the potential for density ``rho`` on nodes ``r``."""
    m1, m2, m1_terms = _cumulative_moments(rho, r, h)
    outer = m1[-1] - m1  # sum over j > i of h r_j rho_j
    return m2 / r + outer


def hartree_potential(Q: RadialField) -> HartreeData:
    """Potential, Newton decomposition ``A_Q`` and ``lambda_Q`` of the density ``Q^2``.

    ``A_Q(r) = M1(r) - M2(r)/r`` with ``M1 = int_0^r s Q^2``, ``M2 = int_0^r s^2 Q^2``,
    ``lambda_Q = M1(r_max)``, so that ``-V = A_Q - lambda_Q`` holds node-wise.
    The density tail beyond ``r_max`` is dropped.
    """
    g = Q.grid
    r = g.nodes
    rho = Q.values**2
    m1, m2, _ = _cumulative_moments(rho, r, g.h)
    lam = float(m1[-1])
    V = m2 / r + (lam - m1)
    A = m1 - m2 / r
    return HartreeData(RadialField(g, V), RadialField(g, A), lam)


def poisson_residual(Q: RadialField, V: RadialField) -> float:
    """``max |laplacian(V) + Q^2|`` over the nodes below the outer boundary."""
    require_same_grid(Q, V)
    res = laplacian_radial(V).values + Q.values**2
    return float(np.max(np.abs(res[:-1])))
