import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from sps_radial.energy import ModelParams
from sps_radial.errors import BracketError, GridMismatchError, InvalidParameterError, NonConvergenceError
from sps_radial.groundstate import euler_lagrange_residual
from sps_radial.hartree import hartree_potential
from sps_radial.radial_core import RadialField, make_grid
from sps_radial.shooting import (
    Classification,
    bisect_bracket,
    bisect_q0,
    count_classification_changes,
    denormalize_multiplier,
    normalize_multiplier,
    scan_classifications,
    self_consistent_solve,
    shoot,
    sturm_identity,
    sturm_wronskian,
)

P1 = ModelParams()


@pytest.fixture(scope="module")
def critical(unit30, unit_potential):
    P = unit30.P
    q = P.value_at_origin()
    return bisect_bracket(unit_potential, P1, P.grid, (0.5 * q, 2.0 * q))


def _oracle_class(q0, V, p, r_end):
    """Classification from an adaptive DOP853 integration, independent of the grid RK4."""
    g = V.grid
    x = np.concatenate((-g.nodes[::-1], g.nodes))
    spl = CubicSpline(x, np.concatenate((V.values[::-1], V.values)))
    r0 = 1e-4
    c = (q0 * (1 - float(spl(0.0))) + p.C_S * q0 * q0) / 3
    if c > 0:
        return Classification.GROWS  # convex at the origin: rises immediately

    def rhs(r, y):
        return [y[1], -2 * y[1] / r + y[0] * (1 - spl(r)) + p.C_S * y[0] ** 2]

    cross = lambda r, y: y[0]  # noqa: E731
    cross.terminal = True
    turn = lambda r, y: y[1]  # noqa: E731
    turn.terminal = True
    sol = solve_ivp(rhs, (r0, r_end), [q0 + c * r0 * r0 / 2, c * r0], method="DOP853",
                    rtol=1e-12, atol=1e-14, events=(cross, turn))
    if sol.t_events[0].size:
        return Classification.CROSSES_ZERO
    if sol.t_events[1].size:
        return Classification.GROWS
    return Classification.DECAYS


def test_zero_potential_never_decays():
    g = make_grid(30.0, 3000)
    for q0 in (0.01, 1.0, 10.0):
        res = shoot(q0, g.zeros(), P1, g)
        assert res.classification is Classification.GROWS
        assert res.trajectory.values.min() >= 0


def test_linear_equation_grows_like_sinh():
    g = make_grid(10.0, 1000)
    res = shoot(1.0, g.zeros(), ModelParams(C_S=0.0), g)
    assert res.classification is Classification.GROWS
    # with C_S = 0 and V = 0 the regular solution sinh(r)/r is increasing from the start
    assert res.event_radius == pytest.approx(g.nodes[0])


def test_linear_trajectory_matches_sine():
    g = make_grid(10.0, 1000)
    V = g.evaluate(lambda r: 0 * r + 2.0)
    res = shoot(1.0, V, ModelParams(C_S=0.0), g)
    # 1 - V = -1: Q = sin(r)/r, first zero at pi
    assert res.classification is Classification.CROSSES_ZERO
    # the zero is located by linear interpolation between nodes: O(h^2)
    assert res.event_radius == pytest.approx(np.pi, abs=2e-5)
    r = g.nodes
    i = int(np.searchsorted(r, 3.0))
    assert np.max(np.abs(res.trajectory.values[:i] - np.sin(r[:i]) / r[:i])) <= 1e-7


@pytest.mark.parametrize("factor", [0.01, 0.5, 0.99, 1.01, 2.0, 3.0])
def test_classification_against_oracle(critical, unit_potential, factor):
    q0 = factor * critical.q0
    res = shoot(q0, unit_potential, P1, unit_potential.grid)
    assert res.classification is _oracle_class(q0, unit_potential, P1, 30.0)
    expected = Classification.GROWS if factor > 1 else Classification.CROSSES_ZERO
    assert res.classification is expected


def test_crossing_invariant(critical):
    res = critical.lower if critical.lower.classification is Classification.CROSSES_ZERO else critical.upper
    v = res.trajectory.values
    r = res.trajectory.grid.nodes
    assert v[res.event_index] <= 0 < v[res.event_index - 1]
    assert r[res.event_index - 1] <= res.event_radius <= r[res.event_index]


def test_shoot_validation(unit_potential):
    g = unit_potential.grid
    with pytest.raises(InvalidParameterError):
        shoot(0.0, unit_potential, P1, g)
    with pytest.raises(InvalidParameterError):
        shoot(1.0, unit_potential, P1, make_grid(30.0, 1500))


def test_bisection_width_and_iterations(critical):
    assert abs(critical.upper.q0 - critical.lower.q0) <= 1e-10
    assert critical.iterations <= 60
    assert critical.lower.classification != critical.upper.classification


def test_bisection_deterministic(unit30, unit_potential):
    q = unit30.P.value_at_origin()
    a = bisect_q0(unit_potential, P1, unit_potential.grid, (0.5 * q, 2 * q))
    b = bisect_q0(unit_potential, P1, unit_potential.grid, (0.5 * q, 2 * q))
    assert a[0] == b[0]
    assert np.array_equal(a[1].trajectory.values, b[1].trajectory.values)


def test_bracket_error(critical, unit_potential):
    q = critical.q0
    with pytest.raises(BracketError):
        bisect_q0(unit_potential, P1, unit_potential.grid, (0.2 * q, 0.5 * q))


def test_unique_classification_change(critical, unit_potential):
    qs = np.linspace(3 * critical.q0 / 50, 3 * critical.q0, 50)
    classes = scan_classifications(unit_potential, P1, unit_potential.grid, qs)
    assert count_classification_changes(classes) == 1


def test_critical_height_matches_minimiser(critical, unit30):
    assert critical.q0 == pytest.approx(unit30.P.value_at_origin(), abs=1e-4)


def test_self_consistent_solution(fx, unit30):
    sol = fx.self_consistent
    assert sol.iterations <= 5
    assert sol.increments[-1] <= 1e-8
    assert np.max(np.abs(sol.Q.values - unit30.P.values)) <= 1e-4
    assert euler_lagrange_residual(sol.Q, 1.0, P1) <= 1e-4
    # the decaying branch respects the e^{-r/2} envelope
    r = sol.Q.grid.nodes
    tail = r >= 10
    ratio = sol.Q.values[tail] * r[tail] * np.exp(0.5 * r[tail])
    assert np.all(np.diff(ratio) <= 1e-10 * ratio[:-1])


def test_plain_picard_iteration_is_unstable(unit30):
    P = unit30.P
    with pytest.raises(NonConvergenceError):
        self_consistent_solve(P1, P.grid, 0.5, P, accelerate=False, max_outer=8)


def test_self_consistent_validation(unit30):
    P = unit30.P
    with pytest.raises(InvalidParameterError):
        self_consistent_solve(P1, P.grid, 0.0, P)
    with pytest.raises(NonConvergenceError):
        self_consistent_solve(P1, P.grid, 1.0, P.grid.zeros())


def test_wronskian_trivial_cases(unit30):
    Q = unit30.P
    assert np.max(np.abs(sturm_wronskian(Q, Q).values)) == 0.0
    assert np.max(np.abs(sturm_wronskian(Q, 2.5 * Q).values)) <= 1e-12
    with pytest.raises(GridMismatchError):
        sturm_wronskian(Q, make_grid(30.0, 1500).zeros())


def test_wronskian_exponentials():
    g = make_grid(10.0, 1000)
    S = sturm_wronskian(g.evaluate(lambda r: np.exp(-r)), g.evaluate(lambda r: np.exp(-2 * r)))
    r = g.nodes
    sel = (r > 0.1) & (r < 9.9)
    assert np.max(np.abs(S.values[sel] - np.exp(-3 * r[sel]))) <= 1e-4


def test_sturm_sign_for_frozen_trajectories(critical, unit_potential):
    g = unit_potential.grid
    Q = shoot(1.001 * critical.q0, unit_potential, P1, g).trajectory
    R = shoot(0.999 * critical.q0, unit_potential, P1, g).trajectory
    lhs, rhs = sturm_identity(Q, R, P1, unit_potential, unit_potential)
    k = g.n // 10
    assert np.all(lhs.values[:k] > 0)
    # both sides of the comparison identity agree to discretisation error
    assert np.max(np.abs(lhs.values[1:k] - rhs.values[1:k])) <= 1e-3 * np.max(np.abs(rhs.values[:k]))


def test_normalize_multiplier(unit30):
    Q = unit30.ground.Q
    assert normalize_multiplier(Q, 1.0) is Q
    with pytest.raises(InvalidParameterError):
        normalize_multiplier(Q, 0.0)
    back = normalize_multiplier(denormalize_multiplier(Q, 1.3), 1.3)
    assert np.max(np.abs(back.values - Q.values)) <= 1e-6


def test_normalize_multiplier_gives_unit_equation():
    from sps_radial.groundstate import SolverConfig, minimize

    gs = minimize(SolverConfig(M=8.8, tol=1e-10))
    assert abs(gs.multiplier - 1) > 0.1
    P = normalize_multiplier(gs.Q, gs.multiplier)
    assert euler_lagrange_residual(P, 1.0, P1) <= 1e-4


def test_export(critical, tmp_path):
    csv_path, json_path = critical.result.export(tmp_path)
    assert csv_path.read_text().startswith("r,value\n")
    meta = json.loads(json_path.read_text())
    assert set(meta) == {"q0", "classification", "event_radius"}
    assert RadialField.from_csv(csv_path).grid == critical.result.trajectory.grid
