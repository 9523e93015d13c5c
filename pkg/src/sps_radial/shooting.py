"""Radial shooting for ``-Q'' - (2/r) Q' + Q - V Q + C_S Q^2 = 0`` with ``Q'(0) = 0``.

This is the verification path independent of the minimiser: the potential
is frozen, the initial height is bisected between trajectories that cross
zero and trajectories that turn upward, and the Hartree term is then
iterated to self-consistency.

The decaying solution is a separatrix, so any trajectory at finite
precision eventually leaves it.  :func:`self_consistent_solve` keeps the part
of the bisected trajectory where the two bracketing shots still agree and
continues it with the decaying solution of the linear far-field equation,
integrated inward from ``r_max`` (a stable direction).
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, gmres

from .energy import ModelParams
from .errors import (
    BracketError,
    InvalidParameterError,
    NonConvergenceError,
    NumericalError,
)
from .hartree import hartree_potential
from .radial_core import RadialField, RadialGrid, require_same_grid, write_fields_csv

log = logging.getLogger(__name__)


class Classification(str, enum.Enum):
    DECAYS = "DECAYS"
    CROSSES_ZERO = "CROSSES_ZERO"
    GROWS = "GROWS"


@dataclass(frozen=True)
class ShootingResult:
    q0: float
    trajectory: RadialField
    classification: Classification
    event_radius: float
    event_index: int

    def export(self, out_dir, stem: str = "shooting") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
        write_fields_csv({"value": self.trajectory}, csv_path)
        meta = {
            "q0": float(format(self.q0, ".17g")),
            "classification": self.classification.value,
            "event_radius": float(format(self.event_radius, ".17g")),
        }
        json_path.write_text(json.dumps(meta, indent=2) + "\n")
        return csv_path, json_path


def _even_spline(f: RadialField) -> CubicSpline:
    g = f.grid
    r = g.nodes
    x = np.concatenate((-r[::-1], r, [g.r_max + 0.5 * g.h]))
    y = np.concatenate((f.values[::-1], f.values, [0.0]))
    return CubicSpline(x, y)


def _spline_resample(f: RadialField, x: np.ndarray) -> np.ndarray:
    g = f.grid
    x = np.abs(x)
    out = np.zeros_like(x)
    inside = x <= g.r_max + 0.5 * g.h
    out[inside] = _even_spline(f)(x[inside])
    return out


def normalize_multiplier(Q: RadialField, multiplier: float) -> RadialField:
    """``P(r) = Q(r/mu) / mu^2`` with ``mu = sqrt(multiplier)``.

    Turns a solution of ``-Delta Q + lambda Q = V Q - C_S Q^2`` into one with
    unit multiplier and the same ``C_S``.  Resampling is by even cubic spline.
    """
    if not multiplier > 0:
        raise InvalidParameterError(f"multiplier must be positive, got {multiplier}")
    if multiplier == 1:
        return Q
    mu = math.sqrt(multiplier)
    return RadialField(Q.grid, _spline_resample(Q, Q.grid.nodes / mu) / mu**2)


def denormalize_multiplier(P: RadialField, multiplier: float) -> RadialField:
    """Inverse of :func:`normalize_multiplier`: ``Q(r) = mu^2 P(mu r)``."""
    if not multiplier > 0:
        raise InvalidParameterError(f"multiplier must be positive, got {multiplier}")
    if multiplier == 1:
        return P
    mu = math.sqrt(multiplier)
    return RadialField(P.grid, mu**2 * _spline_resample(P, mu * P.grid.nodes))


def _face_values(V: RadialField) -> np.ndarray:
    """``V`` at the faces ``r_i + h/2``, ``i = 1..n``."""
    g = V.grid
    return _even_spline(V)(g.nodes + 0.5 * g.h)


def _integrate(q0, V_nodes, V_faces, r, h, cs, stop_on_event=True):
    """RK4 from the series start at ``r_1``; returns values, event kind and index."""
    n = len(r)
    v0 = (9.0 * V_nodes[0] - V_nodes[1]) / 8.0
    curv = (q0 * (1.0 - v0) + cs * q0 * q0) / 3.0  # Q''(0)
    q = q0 + 0.5 * curv * r[0] ** 2
    dq = curv * r[0]
    out = np.zeros(n)
    out[0] = q
    if dq > 0:
        return out, Classification.GROWS, 0, r[0]
    if q <= 0:
        return out, Classification.CROSSES_ZERO, 0, r[0]

    def rhs(rr, y, yp, vv):
        return yp, -2.0 * yp / rr + y * (1.0 - vv) + cs * y * y

    for i in range(n - 1):
        ri = r[i]
        v_a, v_m, v_b = V_nodes[i], V_faces[i], V_nodes[i + 1]
        k1q, k1p = rhs(ri, q, dq, v_a)
        k2q, k2p = rhs(ri + 0.5 * h, q + 0.5 * h * k1q, dq + 0.5 * h * k1p, v_m)
        k3q, k3p = rhs(ri + 0.5 * h, q + 0.5 * h * k2q, dq + 0.5 * h * k2p, v_m)
        k4q, k4p = rhs(ri + h, q + h * k3q, dq + h * k3p, v_b)
        q_new = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        dq_new = dq + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if not (math.isfinite(q_new) and math.isfinite(dq_new)):
            raise NumericalError(f"integration blew up after r = {ri:.6g}", last_radius=ri)
        out[i + 1] = q_new
        if q_new <= 0.0:
            rz = ri + h * q / (q - q_new)
            return out, Classification.CROSSES_ZERO, i + 1, rz
        if dq_new > 0.0:
            return out, Classification.GROWS, i + 1, r[i + 1]
        q, dq = q_new, dq_new
    return out, None, n - 1, r[-1]


def shoot(q0: float, V_ext: RadialField, p: ModelParams, grid: RadialGrid) -> ShootingResult:
    """Integrate the frozen-potential IVP from ``Q(0) = q0`` and classify the trajectory.

    ``CROSSES_ZERO`` at the first sign change, ``GROWS`` as soon as the
    trajectory turns upward while positive, ``DECAYS`` when it stays positive
    and decreasing to ``r_max`` and ends below the ``exp(-r/2)`` envelope
    anchored at ``r_max/2``; a slower monotone decay counts as ``GROWS``.
    Values after an event are set to 0.
    """
    if not q0 > 0:
        raise InvalidParameterError(f"initial height must be positive, got {q0}")
    if V_ext.grid != grid:
        raise InvalidParameterError("V_ext must live on the shooting grid")
    values, kind, idx, r_event = _integrate(
        float(q0), V_ext.values, _face_values(V_ext), grid.nodes, grid.h, p.C_S
    )
    if kind is None:
        r = grid.nodes
        mid = int(np.searchsorted(r, 0.5 * grid.r_max))
        envelope = values[mid] * math.exp(-0.5 * (r[-1] - r[mid]))
        kind = Classification.DECAYS if values[-1] <= envelope else Classification.GROWS
    return ShootingResult(float(q0), RadialField(grid, values), kind, float(r_event), int(idx))


@dataclass(frozen=True)
class Bisection:
    q0: float
    result: ShootingResult
    lower: ShootingResult
    upper: ShootingResult
    iterations: int


def bisect_bracket(V_ext, p, grid, bracket, width=1e-10, max_iter=200) -> Bisection:
    """Bisection keeping both final bracketing shots; see :func:`bisect_q0`."""
    lo, hi = sorted(float(b) for b in bracket)
    if not lo > 0:
        raise BracketError(f"bracket must be positive, got {bracket}")
    r_lo = shoot(lo, V_ext, p, grid)
    r_hi = shoot(hi, V_ext, p, grid)
    if r_lo.classification == r_hi.classification:
        raise BracketError(
            f"both ends of ({lo:.6g}, {hi:.6g}) classify as {r_lo.classification.value}"
        )
    it = 0
    while hi - lo > width and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r_mid = shoot(mid, V_ext, p, grid)
        if r_mid.classification == r_lo.classification:
            lo, r_lo = mid, r_mid
        else:
            hi, r_hi = mid, r_mid
        it += 1
    q_star = 0.5 * (lo + hi)
    return Bisection(q_star, shoot(q_star, V_ext, p, grid), r_lo, r_hi, it)


def bisect_q0(
    V_ext: RadialField,
    p: ModelParams,
    grid: RadialGrid,
    bracket: tuple[float, float],
    width: float = 1e-10,
) -> tuple[float, ShootingResult]:
    """Bisect the initial height between two differently classified shots.

    Returns the midpoint of the final bracket (width <= ``width``) and its trajectory.
    """
    b = bisect_bracket(V_ext, p, grid, bracket, width)
    return b.q0, b.result


def scan_classifications(V_ext, p, grid, q_values):
    """Classify one shot per initial height; returns the list of classifications."""
    return [shoot(float(q), V_ext, p, grid).classification for q in q_values]


def count_classification_changes(classes) -> int:
    return sum(1 for a, b in zip(classes, classes[1:]) if a != b)


# --------------------------------------------------------------------------
# self-consistency
# --------------------------------------------------------------------------

def _decaying_tail(V: RadialField, C_S: float = 0.0, Q: Optional[np.ndarray] = None) -> np.ndarray:
    """Decaying solution of ``(rQ)'' = W (rQ)``, ``W = 1 - V + C_S Q``, integrated inward, up to scale.

    ``Q`` is a current estimate of the profile entering ``W`` (zero if omitted).
    """
    g = V.grid
    r, h = g.nodes, g.h
    w_nodes = 1.0 - V.values
    w_faces = 1.0 - _face_values(V)
    if Q is not None and C_S:
        w_nodes = w_nodes + C_S * Q
        w_faces = w_faces + C_S * np.append(0.5 * (Q[:-1] + Q[1:]), 0.5 * Q[-1])
    n = g.n
    u = np.empty(n)
    y = 1.0
    yp = math.sqrt(max(w_nodes[-1], 1e-12))  # d/d(-r) of a decaying mode
    u[-1] = y
    hh = h
    for i in range(n - 1, 0, -1):
        # integrate in s = -r: y_ss = W y
        wa, wm, wb = w_nodes[i], w_faces[i - 1], w_nodes[i - 1]
        k1y, k1p = yp, wa * y
        k2y, k2p = yp + 0.5 * hh * k1p, wm * (y + 0.5 * hh * k1y)
        k3y, k3p = yp + 0.5 * hh * k2p, wm * (y + 0.5 * hh * k2y)
        k4y, k4p = yp + hh * k3p, wb * (y + hh * k3y)
        y += hh / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        yp += hh / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        u[i - 1] = y
        if y > 1e250:
            u[i - 1 :] /= y
            yp /= y
            y = 1.0
    return u / r


def splice_decaying(
    lower: ShootingResult,
    upper: ShootingResult,
    V: RadialField,
    C_S: float = 0.0,
    agree: float = 1e-7,
    passes: int = 4,
):
    """Join the agreeing part of two bracketing shots to the inward far-field solution.

    The ``C_S Q`` part of the far-field coefficient is resolved by a few
    passes, each using the previous spliced profile.  Returns
    ``(values, match_index)``.
    """
    a = lower.trajectory.values
    b = upper.trajectory.values
    stop = min(lower.event_index, upper.event_index)
    mean = 0.5 * (a + b)
    ok = np.abs(a - b) <= agree * np.abs(mean)
    ok[stop:] = False
    bad = np.flatnonzero(~ok)
    m = (bad[0] if bad.size else len(a)) - 1
    if m < 1:
        raise NonConvergenceError("bracketing shots disagree from the first node")
    out = mean.copy()
    if m < len(a) - 1:
        out[m + 1 :] = 0.0
        for _ in range(passes):
            tail = _decaying_tail(V, C_S, out)
            out[m + 1 :] = tail[m + 1 :] * (mean[m] / tail[m])
    return out, int(m)


@dataclass(frozen=True)
class SelfConsistentSolution:
    Q: RadialField
    V: RadialField
    q0: float
    iterations: int
    increments: tuple
    match_radius: float


def _bracket_around(q, V, p, grid, rel=0.05, expansions=12):
    if not q > 0:
        q = 1.0
    lo, hi = q * (1 - rel), q * (1 + rel)
    for _ in range(expansions):
        c_lo = shoot(lo, V, p, grid).classification
        c_hi = shoot(hi, V, p, grid).classification
        if c_lo != c_hi:
            return lo, hi
        lo, hi = lo * 0.5, hi * 2.0
    raise BracketError(f"no classification change found in ({lo:.3g}, {hi:.3g})")


def decaying_profile(V: RadialField, p: ModelParams, q_guess: float, rel: float = 0.05):
    """Bisected, spliced decaying profile in the frozen potential ``V``.

    Returns ``(values, q0, match_index)``.
    """
    grid = V.grid
    lo, hi = _bracket_around(q_guess, V, p, grid, rel)
    b = bisect_bracket(V, p, grid, (lo, hi))
    values, m = splice_decaying(b.lower, b.upper, V, p.C_S)
    return values, b.q0, m


# relative size of the potential perturbation in Jacobian-vector products;
# the shoot-and-splice map is smooth down to about 1e-9
FD_STEP = 1e-5


def _newton_target(V, G_V, q0, p, linear_tol):
    """``V + delta`` with ``(I - J) delta = G(V) - V``, ``J`` the derivative of ``V -> hartree(Q[V])``."""
    grid = V.grid
    F = G_V - V.values
    scale = max(1.0, float(np.max(np.abs(V.values))))

    def G(values):
        prof, _, _ = decaying_profile(RadialField(grid, values), p, q0, rel=1e-3)
        return hartree_potential(RadialField(grid, prof)).V.values

    def matvec(v):
        v = np.asarray(v, dtype=float).ravel()
        nv = float(np.max(np.abs(v)))
        if nv == 0.0:
            return np.zeros_like(v)
        eps = FD_STEP * scale / nv
        return v - (G(V.values + eps * v) - G_V) / eps

    op = LinearOperator((grid.n, grid.n), matvec=matvec, dtype=float)
    delta, info = gmres(op, F, rtol=linear_tol, atol=0.0, restart=20, maxiter=1)
    if info < 0:
        raise NumericalError("Krylov solve for the outer correction failed", last_radius=grid.r_max)
    return RadialField(grid, V.values + delta)


def self_consistent_solve(
    p: ModelParams,
    grid: RadialGrid,
    damping: float,
    Q_init: RadialField,
    V_init: Optional[RadialField] = None,
    tol: float = 1e-8,
    max_outer: int = 30,
    accelerate: bool = True,
    linear_tol: float = 1e-4,
) -> SelfConsistentSolution:
    """Fixed point of ``V -> Q[V] -> V`` for the unit-multiplier equation.

    Each outer iteration solves for ``Q`` in the current ``V`` (bisection
    plus tail splice), stops when successive ``Q`` agree to ``tol`` in max
    norm, and otherwise updates ``V <- (1 - damping) V + damping * T``.

    With ``accelerate=False`` the target ``T`` is ``hartree(Q)``.  That
    plain iteration is unstable: the map ``V -> hartree(Q[V])`` has an
    eigenvalue near 8 at the ground state, so no damping in (0, 1] makes it
    contract.  The default target is the Newton-corrected ``V + delta`` with
    ``(I - J) delta = hartree(Q) - V``, solved by GMRES with
    finite-difference products ``J v``.
    """
    if not (0 < damping <= 1):
        raise InvalidParameterError(f"damping must lie in (0, 1], got {damping}")
    require_same_grid(Q_init, *([V_init] if V_init is not None else []))
    Q = Q_init
    V = V_init if V_init is not None else hartree_potential(Q).V
    q_guess = Q.value_at_origin()
    increments = []
    for k in range(1, max_outer + 1):
        try:
            values, q0, m = decaying_profile(V, p, q_guess)
        except BracketError as exc:
            raise NonConvergenceError(f"outer iteration {k}: {exc}", best=Q) from exc
        Q_new = RadialField(grid, values)
        inc = float(np.max(np.abs(Q_new.values - Q.values)))
        increments.append(inc)
        log.debug("outer %d: q0 = %.12g, increment %.3e", k, q0, inc)
        Q, q_guess = Q_new, q0
        if inc <= tol:
            return SelfConsistentSolution(Q, V, q0, k, tuple(increments), float(grid.nodes[m]))
        G_V = hartree_potential(Q).V
        target = _newton_target(V, G_V.values, q0, p, linear_tol) if accelerate else G_V
        V = (1.0 - damping) * V + damping * target
    raise NonConvergenceError(
        f"successive profiles still differ by {increments[-1]:.3e} after {max_outer} iterations",
        best=Q,
    )


# --------------------------------------------------------------------------
# Sturm comparison
# --------------------------------------------------------------------------

def radial_derivative(f: RadialField) -> np.ndarray:
    """Central differences with the even ghost at the origin and the zero ghost past ``r_max``."""
    v = f.values
    ext = np.concatenate(([v[0]], v, [0.0]))
    return (ext[2:] - ext[:-2]) / (2.0 * f.grid.h)


def sturm_wronskian(Q: RadialField, R: RadialField) -> RadialField:
    """``S = Q' R - Q R'``."""
    grid = require_same_grid(Q, R)
    return RadialField(grid, radial_derivative(Q) * R.values - Q.values * radial_derivative(R))


def sturm_identity(
    Q: RadialField,
    R: RadialField,
    p: ModelParams,
    V_Q: Optional[RadialField] = None,
    V_R: Optional[RadialField] = None,
) -> tuple[RadialField, RadialField]:
    """Both sides of ``(r^2 S)' = r^2 [(V_R - V_Q) + C_S (Q - R)] Q R``.

    Potentials default to the self-consistent ones of ``Q`` and ``R``;
    ``V_R - V_Q = A_Q - A_R - (lambda_Q - lambda_R)``.  Passing the same
    frozen potential for both reduces the right side to ``C_S r^2 (Q-R) Q R``.
    """
    grid = require_same_grid(Q, R)
    V_Q = V_Q if V_Q is not None else hartree_potential(Q).V
    V_R = V_R if V_R is not None else hartree_potential(R).V
    r2 = grid.nodes**2
    lhs = radial_derivative(RadialField(grid, r2 * sturm_wronskian(Q, R).values))
    rhs = r2 * ((V_R.values - V_Q.values) + p.C_S * (Q.values - R.values)) * Q.values * R.values
    return RadialField(grid, lhs), RadialField(grid, rhs)
