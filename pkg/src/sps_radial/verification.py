"""Acceptance checks shared by ``sps-radial verify-all`` and the test suite.

Each check returns a :class:`CriterionResult`; expensive states (ground
states, the self-consistent solution) are computed once per
:class:`Fixtures` instance and reused.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .asymptotics import alpha_mass, decay_fit, envelope_check, potential_expansion_check
from .energy import ModelParams, decreasing_rearrangement, energy, l2_gradient
from .groundstate import (
    SolverConfig,
    euler_lagrange_residual,
    minimize,
    scaling_law_check,
    unit_ground_state,
    virial_defect,
)
from .hartree import hartree_potential
from .radial_core import RadialField, inner_3d, integrate_3d, make_grid
from .shooting import (
    count_classification_changes,
    normalize_multiplier,
    scan_classifications,
    self_consistent_solve,
)

H_FIXTURE = 0.01  # grid spacing of the unit-multiplier fixtures


@dataclass(frozen=True)
class CriterionResult:
    key: str
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] {self.key}. {self.title}: {info}"

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "title": self.title,
            "passed": self.passed,
            "details": self.details,
            "seconds": self.seconds,
        }


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


class Fixtures:
    """Lazily computed states used by several checks."""

    def __init__(self, seed: int = 0, params: Optional[ModelParams] = None):
        self.seed = int(seed)
        self.params = params if params is not None else ModelParams()

    def unit(self, r_max: float):
        return _unit_cached(float(r_max), self.params)

    @cached_property
    def unit30(self):
        return self.unit(30.0)

    @cached_property
    def self_consistent(self):
        P = self.unit30.P
        return self_consistent_solve(self.params, P.grid, 1.0, P, hartree_potential(P).V)


_UNIT_CACHE: dict = {}


def _unit_cached(r_max: float, params: ModelParams):
    key = (r_max, params)
    if key not in _UNIT_CACHE:
        grid = make_grid(r_max, int(round(r_max / H_FIXTURE)))
        _UNIT_CACHE[key] = unit_ground_state(params, grid)
    return _UNIT_CACHE[key]


def random_profile(rng: np.random.Generator, r: np.ndarray) -> np.ndarray:
    """Nonnegative sum of one to four Gaussian bumps with random centres and widths."""
    k = int(rng.integers(1, 5))
    a = rng.uniform(0.2, 2.0, k)
    c = rng.uniform(0.0, 6.0, k)
    s = rng.uniform(0.3, 1.5, k)
    return np.sum(a[:, None] * np.exp(-0.5 * ((r[None, :] - c[:, None]) / s[:, None]) ** 2), axis=0)


# --------------------------------------------------------------------------
# the checks
# --------------------------------------------------------------------------

def check_scaling(fx: Fixtures):
    rep = scaling_law_check([0.5, 1.0, 2.0], SolverConfig(params=fx.params))
    return rep.ok, {
        "ratios": [row.ratio for row in rep.rows],
        "I_M": [row.I_M for row in rep.rows],
        "max_rel_dev": rep.max_deviation,
    }


def check_negativity(fx: Fixtures):
    gs = minimize(SolverConfig(M=1.0, params=fx.params))
    return gs.I_M < 0, {"I_1": gs.I_M, "multiplier": gs.multiplier}


def check_euler_lagrange(fx: Fixtures):
    # a minimiser whose multiplier is not 1, mapped to unit multiplier
    gs = minimize(SolverConfig(M=8.8, params=fx.params, tol=1e-10))
    P = normalize_multiplier(gs.Q, gs.multiplier)
    res = euler_lagrange_residual(P, 1.0, fx.params)
    unit = fx.unit30
    res_unit = euler_lagrange_residual(unit.P, 1.0, fx.params)
    return max(res, res_unit) <= 1e-4, {
        "multiplier": gs.multiplier,
        "residual": res,
        "residual_unit_fixture": res_unit,
    }


def check_cross_solver(fx: Fixtures):
    P = fx.unit30.P
    sol = fx.self_consistent
    diff = float(np.max(np.abs(sol.Q.values - P.values)))
    qs = np.linspace(3.0 * sol.q0 / 50, 3.0 * sol.q0, 50)
    changes = count_classification_changes(scan_classifications(sol.V, fx.params, P.grid, qs))
    ok = diff <= 1e-4 and changes == 1 and sol.iterations <= 5
    return ok, {
        "max_diff": diff,
        "outer_iterations": sol.iterations,
        "q0": sol.q0,
        "classification_changes": changes,
    }


def check_lambda(fx: Fixtures):
    lam = hartree_potential(fx.unit30.P).lambda_Q
    return lam >= 1.01, {"lambda_Q": lam}


def check_decay(fx: Fixtures):
    P = fx.unit(40.0).P
    fit = decay_fit(P, 1, (10.0, 20.0))
    wrong = decay_fit(P, -1, (10.0, 20.0))
    shifted = decay_fit(P, 1, (12.0, 22.0))
    ratio = abs(wrong.drift) / abs(fit.drift) if fit.drift else math.inf
    window_shift = abs(shifted.limit_estimate / fit.limit_estimate - 1.0)
    ok = abs(fit.drift) <= 0.02 and fit.limit_estimate > 0 and ratio >= 5.0
    return ok, {
        "alpha": fit.alpha,
        "drift": fit.drift,
        "limit": fit.limit_estimate,
        "wrong_sign_drift": wrong.drift,
        "ratio": ratio,
        "window_shift_rel": window_shift,
    }


def check_potential_expansion(fx: Fixtures):
    a, b = fx.unit(30.0).P, fx.unit(60.0).P
    window = (15.0, 30.0)
    ra = potential_expansion_check(hartree_potential(a).V, alpha_mass(a), window)
    rb = potential_expansion_check(hartree_potential(b).V, alpha_mass(b), window)
    dv = abs(rb.value_bound / ra.value_bound - 1.0)
    dd = abs(rb.derivative_bound / ra.derivative_bound - 1.0)
    finite = all(math.isfinite(x) for x in (ra.value_bound, ra.derivative_bound))
    return finite and dv <= 0.2 and dd <= 0.2, {
        "value_bound": ra.value_bound,
        "derivative_bound": ra.derivative_bound,
        "value_variation": dv,
        "derivative_variation": dd,
    }


def check_envelope(fx: Fixtures):
    P = fx.unit30.P
    return envelope_check(P), {"window": [P.grid.r_max / 2, P.grid.r_max]}


def check_rearrangement(fx: Fixtures, count: int = 100):
    rng = np.random.default_rng(fx.seed)
    grid = make_grid(10.0, 500)
    worst_norm = 0.0
    failures = 0
    for _ in range(count):
        u = RadialField(grid, random_profile(rng, grid.nodes))
        s = decreasing_rearrangement(u)
        eu, es = energy(u, fx.params), energy(s, fx.params)
        l2 = abs(integrate_3d(s * s) / integrate_3d(u * u) - 1.0)
        l3 = abs(integrate_3d(s**3) / integrate_3d(u**3) - 1.0)
        worst_norm = max(worst_norm, l2, l3)
        slack = 1e-12 * max(1.0, abs(eu.total))
        ok = (
            es.kinetic <= eu.kinetic + slack
            and es.hartree >= eu.hartree - slack
            and es.total <= eu.total + slack
            and l2 <= 1e-8
            and l3 <= 1e-8
        )
        failures += not ok
    return failures == 0, {"profiles": count, "failures": failures, "worst_norm_rel": worst_norm}


def check_gradient(fx: Fixtures, count: int = 20):
    rng = np.random.default_rng(fx.seed + 1)
    grid = make_grid(10.0, 500)
    worst = 0.0
    for _ in range(count):
        u = RadialField(grid, random_profile(rng, grid.nodes))
        v = RadialField(grid, random_profile(rng, grid.nodes) - random_profile(rng, grid.nodes))
        eps = 1e-4
        fd = (energy(u + eps * v, fx.params).total - energy(u - eps * v, fx.params).total) / (2 * eps)
        exact = inner_3d(l2_gradient(u, fx.params), v)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
    return worst <= 1e-6, {"pairs": count, "worst_rel_error": worst}


def check_virial(fx: Fixtures):
    defect, scale = virial_defect(fx.unit30.ground.Q, fx.params)
    return abs(defect) <= 1e-3 * scale, {"defect": defect, "scale": scale, "relative": abs(defect) / scale}


def check_hartree(fx: Fixtures):
    grid = make_grid(4.0, 400)
    ball = grid.evaluate(lambda r: (r < 1.0).astype(float))
    V = hartree_potential(ball).V
    v0, v1, v2 = V.value_at_origin(), float(V.interpolate(1.0)), float(V.interpolate(2.0))
    err_ball = max(abs(v0 - 0.5), abs(v1 - 1 / 3), abs(v2 - 1 / 6))
    g = make_grid(30.0, 3000)
    gauss = g.evaluate(lambda r: np.exp(-0.5 * r * r))
    hd = hartree_potential(gauss)
    err_newton = float(np.max(np.abs(-hd.V.values - (hd.A_Q.values - hd.lambda_Q))))
    return err_ball <= 5e-3 and err_newton <= 1e-6, {
        "V(0)": v0,
        "V(1)": v1,
        "V(2)": v2,
        "ball_error": err_ball,
        "newton_identity_error": err_newton,
    }


def check_scaling_resolved(fx: Fixtures):
    """Scaling law at masses whose minimisers fit on the grid: ``{1/2, 1, 2}`` times the unit-multiplier mass."""
    Mu = fx.unit30.ground.M
    cfg = SolverConfig(M=Mu, params=fx.params, grid=make_grid(100.0, 10000), tol=1e-9)
    rep = scaling_law_check([0.5 * Mu, Mu, 2.0 * Mu], cfg, reference=Mu, scale_step=True)
    return rep.ok, {
        "masses": [row.M for row in rep.rows],
        "ratios": [row.ratio for row in rep.rows],
        "max_rel_dev": rep.max_deviation,
    }


CRITERIA: tuple[tuple[str, str, Callable], ...] = (
    ("1", "scaling law I_M = M^6 I_1 (r_max 30, M in 0.5, 1, 2)", check_scaling),
    ("2", "negativity I_1 < 0 (r_max 30)", check_negativity),
    ("3", "Euler-Lagrange residual after multiplier normalisation", check_euler_lagrange),
    ("4", "minimiser and shooting fixed point agree; unique shooting height", check_cross_solver),
    ("5", "lambda_Q >= 1.01", check_lambda),
    ("6", "decay law with exponent 1 - alpha/2", check_decay),
    ("7", "potential expansion alpha/r + O(r^-2), stable under doubling r_max", check_potential_expansion),
    ("8", "envelope Q r e^{r/2} non-increasing on the tail", check_envelope),
    ("9", "rearrangement on 100 random profiles", check_rearrangement),
    ("10", "gradient against central differences", check_gradient),
    ("11", "dilation criticality K - H/4 + S_3/2 = 0", check_virial),
    ("12", "Hartree ball values and Newton identity", check_hartree),
    ("S1", "scaling law at resolvable masses (r_max 100)", check_scaling_resolved),
)


def run_check(key: str, fx: Fixtures) -> CriterionResult:
    for k, title, func in CRITERIA:
        if k == key:
            t0 = time.perf_counter()
            passed, details = func(fx)
            return CriterionResult(k, title, bool(passed), details, time.perf_counter() - t0)
    raise KeyError(key)


def run_all(seed: int = 0, keys=None) -> list[CriterionResult]:
    fx = Fixtures(seed)
    return [run_check(k, fx) for k, _, _ in CRITERIA if keys is None or k in keys]
