"""Constrained minimisation of the energy on the mass sphere ``|u|_2 = M``.

The flow is a projected, preconditioned gradient descent:

    d = P^{-1}(g - theta u),  theta = <u, P^{-1} g> / <u, P^{-1} u>,  P = I - step * Laplacian
    u <- normalize_M(rearrange(normalize_M(u - tau d)))

with ``tau = step`` halved on every energy increase.  The ``theta`` choice
keeps ``d`` tangent to the sphere in the ``P`` metric, so a fixed point has
zero projected gradient.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from .energy import (
    EnergyBreakdown,
    ModelParams,
    decreasing_rearrangement,
    energy,
    l2_gradient,
    mass_normalize,
)
from .errors import InvalidParameterError, NonConvergenceError, StepSizeError
from .hartree import hartree_potential
from .radial_core import (
    RadialField,
    RadialGrid,
    inner_3d,
    integrate_3d,
    laplacian_matrix,
    laplacian_radial,
    make_grid,
    require_same_grid,
    write_fields_csv,
)

log = logging.getLogger(__name__)

MAX_HALVINGS = 30
ENERGY_SLACK = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    M: float = 1.0
    params: ModelParams = field(default_factory=ModelParams)
    grid: RadialGrid = field(default_factory=lambda: make_grid(30.0, 3000))
    step: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000

    def __post_init__(self):
        if not (np.isfinite(self.M) and self.M > 0):
            raise InvalidParameterError(f"mass-norm M must be positive, got {self.M}")
        if not self.step > 0:
            raise InvalidParameterError(f"step must be positive, got {self.step}")
        if not self.tol > 0:
            raise InvalidParameterError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidParameterError(f"max_iter must be a positive integer, got {self.max_iter}")


@dataclass(frozen=True)
class GroundState:
    """Converged minimiser.

    ``multiplier`` is ``lambda`` in ``-Delta Q + lambda Q = V Q - C_S Q^2``,
    i.e. minus the Rayleigh quotient ``<g, Q> / M^2`` of the gradient.
    """

    Q: RadialField
    I_M: float
    multiplier: float
    residual: float
    iterations: int
    M: float
    breakdown: EnergyBreakdown
    energy_history: tuple = field(default=(), repr=False)

    @property
    def V(self) -> RadialField:
        return hartree_potential(self.Q).V

    @property
    def alpha(self) -> float:
        return integrate_3d(self.Q * self.Q) / (4.0 * np.pi)

    def export(self, out_dir, stem: str = "ground_state") -> tuple[Path, Path]:
        """Write ``<stem>.csv`` with columns ``r,Q,V`` and the ``<stem>.json`` sidecar."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{stem}.csv"
        json_path = out / f"{stem}.json"
        write_fields_csv({"Q": self.Q, "V": self.V}, csv_path)
        meta = {
            "I_M": self.I_M,
            "multiplier": self.multiplier,
            "residual": self.residual,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "M": self.M,
            "r_max": self.Q.grid.r_max,
            "n": self.Q.grid.n,
        }
        json_path.write_text(json.dumps(_round17(meta), indent=2) + "\n")
        return csv_path, json_path


def _round17(d: dict) -> dict:
    return {k: (float(format(v, ".17g")) if isinstance(v, float) else v) for k, v in d.items()}


def default_initial(grid: RadialGrid, M: float) -> RadialField:
    """Gaussian ``exp(-r^2/2)`` with mass-norm ``M``."""
    return mass_normalize(grid.evaluate(lambda r: np.exp(-0.5 * r * r)), M)


def _projected_gradient(u: RadialField, g: RadialField, M: float):
    rq = inner_3d(g, u) / M**2
    return g - rq * u, rq


def minimize(cfg: SolverConfig, u0: Optional[RadialField] = None) -> GroundState:
    """Minimise the energy over ``{|u|_2 = cfg.M}`` on ``cfg.grid``.

    Raises :class:`NonConvergenceError` (carrying the lowest-energy iterate)
    when ``max_iter`` is exhausted, and :class:`StepSizeError` when thirty
    step halvings cannot produce an energy decrease.
    """
    grid, p, M = cfg.grid, cfg.params, cfg.M
    if u0 is None:
        u = default_initial(grid, M)
    else:
        if u0.grid != grid:
            u0 = RadialField(grid, u0.interpolate(grid.nodes))
        if not np.any(u0.values):
            raise InvalidParameterError("initial guess must be nonzero")
        u = mass_normalize(u0, M)
    u = mass_normalize(decreasing_rearrangement(u), M)

    precond = splu((identity(grid.n, format="csc") - cfg.step * laplacian_matrix(grid)).tocsc())
    E = energy(u, p).total
    history = [E]
    best = (E, u)
    res = np.inf

    for it in range(cfg.max_iter + 1):
        V = hartree_potential(u).V
        g = l2_gradient(u, p, V)
        r, rq = _projected_gradient(u, g, M)
        res = np.sqrt(inner_3d(r, r))
        if res <= cfg.tol:
            return GroundState(
                Q=u,
                I_M=E,
                multiplier=-rq,
                residual=res,
                iterations=it,
                M=M,
                breakdown=energy(u, p),
                energy_history=tuple(history),
            )
        if it == cfg.max_iter:
            break

        Pg = precond.solve(g.values)
        Pu = precond.solve(u.values)
        theta = np.dot(u.values * grid.volume_weights, Pg) / np.dot(u.values * grid.volume_weights, Pu)
        d = Pg - theta * Pu

        tau = cfg.step
        for _ in range(MAX_HALVINGS + 1):
            trial = RadialField(grid, u.values - tau * d)
            trial = mass_normalize(decreasing_rearrangement(mass_normalize(trial, M)), M)
            E_trial = energy(trial, p).total
            if E_trial <= E + ENERGY_SLACK * max(1.0, abs(E)):
                break
            tau *= 0.5
        else:
            raise StepSizeError(
                f"energy increased for every step down to {tau:.3g} at iteration {it}"
            )
        u, E = trial, E_trial
        history.append(E)
        if E < best[0]:
            best = (E, u)

    raise NonConvergenceError(
        f"projected gradient {res:.3e} > tol {cfg.tol:.1e} after {cfg.max_iter} iterations",
        best=best[1],
    )


def euler_lagrange_residual(Q: RadialField, multiplier: float, p: ModelParams) -> float:
    """Discrete L2 norm of ``-Delta Q + multiplier Q - V Q + C_S Q^2`` over interior nodes."""
    V = hartree_potential(Q).V
    q = Q.values
    res = -laplacian_radial(Q).values + multiplier * q - V.values * q + p.C_S * q * q
    vol = Q.grid.volume_weights
    return float(np.sqrt(4.0 * np.pi * np.dot(vol[:-1], res[:-1] ** 2)))


def virial_defect(Q: RadialField, p: ModelParams) -> tuple[float, float]:
    """``(K - H/4 + S_3/2, K + H + S_3)``: the derivative of ``E(Q^t)`` at ``t = 1`` and its scale.

    ``K = int |grad Q|^2``, ``H = int (I_2 * Q^2) Q^2``, ``S_3 = C_S int |Q|^3``.
    """
    b = energy(Q, p)
    K, H, S3 = 2.0 * b.kinetic, 4.0 * b.hartree, 3.0 * b.slater
    return K - H / 4.0 + S3 / 2.0, K + H + S3


@dataclass(frozen=True)
class ScalingRow:
    M: float
    I_M: float
    ratio: float
    multiplier: float
    residual: float


@dataclass(frozen=True)
class ScalingReport:
    rows: tuple
    reference: float
    tolerance: float
    flagged: tuple

    @property
    def ok(self) -> bool:
        return not self.flagged

    @property
    def max_deviation(self) -> float:
        return max(abs(row.ratio / self.reference - 1.0) for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "rows": [_round17(row.__dict__) for row in self.rows],
            "reference_ratio": self.reference,
            "tolerance": self.tolerance,
            "flagged": list(self.flagged),
            "max_relative_deviation": self.max_deviation,
            "ok": self.ok,
        }


def scaling_law_check(
    M_list: Sequence[float],
    cfg_template: SolverConfig,
    tolerance: float = 5e-3,
    reference: Optional[float] = None,
    scale_step: bool = False,
) -> ScalingReport:
    """Minimise for each ``M`` and compare ``I_M / M^6`` with the reference row.

    The reference is the row with ``M == reference``; by default the ``M = 1``
    row, or the first entry when 1 is absent.  With ``scale_step`` the flow
    step follows the length scale of the minimiser, ``step (M_t / M)^4`` with
    ``M_t`` the template mass: the multiplier grows like ``M^4`` and the
    preconditioned flow contracts at a rate set by ``step * multiplier``.
    """
    masses = [float(m) for m in M_list]
    if not masses:
        raise InvalidParameterError("M_list is empty")
    for m in masses:
        if not (np.isfinite(m) and m > 0):
            raise InvalidParameterError(f"every mass-norm must be positive, got {m}")
    rows = []
    for m in masses:
        step = cfg_template.step * (cfg_template.M / m) ** 4 if scale_step else cfg_template.step
        gs = minimize(replace(cfg_template, M=m, step=step))
        rows.append(ScalingRow(m, gs.I_M, gs.I_M / m**6, gs.multiplier, gs.residual))
    target = 1.0 if reference is None else float(reference)
    ref_row = next((row for row in rows if row.M == target), None)
    if ref_row is None:
        if reference is not None:
            raise InvalidParameterError(f"reference mass {reference} is not in M_list")
        ref_row = rows[0]
    ref = ref_row.ratio
    flagged = tuple(row.M for row in rows if abs(row.ratio / ref - 1.0) > tolerance)
    return ScalingReport(tuple(rows), ref, tolerance, flagged)


@dataclass(frozen=True)
class UnitGroundState:
    """Minimiser whose multiplier has been driven to 1 by tuning the mass, plus its normalised profile."""

    ground: GroundState
    P: RadialField


def unit_ground_state(
    params: ModelParams,
    grid: RadialGrid,
    M_guess: float = 8.8,
    tol: float = 1e-10,
    multiplier_tol: float = 1e-9,
    max_rounds: int = 8,
    step: float = 1.0,
    max_iter: int = 5000,
) -> UnitGroundState:
    """Find the mass whose minimiser has unit multiplier, then normalise it exactly.

    Under ``Q(r) = mu^2 P(mu r)`` the multiplier scales as ``M^4``, so each
    round updates ``M <- M multiplier^{-1/4}`` and warm-starts from the
    previous minimiser.
    """
    from .shooting import normalize_multiplier

    M = float(M_guess)
    u0 = None
    gs = None
    for _ in range(max_rounds):
        gs = minimize(SolverConfig(M, params, grid, step, tol, max_iter), u0)
        lam = gs.multiplier
        if lam <= 0:
            # box-confined: the state is far wider than the grid
            M *= 2.0
            u0 = None
            continue
        if abs(lam - 1.0) <= multiplier_tol:
            break
        M *= lam ** -0.25
        u0 = gs.Q
    else:
        raise NonConvergenceError(
            f"multiplier {gs.multiplier:.12g} not within {multiplier_tol} of 1 after {max_rounds} rounds",
            best=gs.Q if gs else None,
        )
    return UnitGroundState(gs, normalize_multiplier(gs.Q, gs.multiplier))
