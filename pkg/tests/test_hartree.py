import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erf

from sps_radial.asymptotics import alpha_mass
from sps_radial.errors import GridMismatchError, InvalidParameterError
from sps_radial.hartree import hartree_potential, kernel_K, newton_potential, poisson_residual
from sps_radial.radial_core import make_grid


@pytest.fixture(scope="module")
def ball():
    g = make_grid(4.0, 400)
    Q = g.evaluate(lambda r: (r < 1.0).astype(float))
    return Q, hartree_potential(Q)


@pytest.mark.parametrize("r,s,want", [(2.0, 2.0, 0.0), (2.0, 0.0, 0.0), (2.0, 1.0, 0.5)])
def test_kernel_values(r, s, want):
    assert kernel_K(r, s) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("r,s", [(1.0, 2.0), (0.0, 0.0), (-1.0, 0.0), (1.0, -0.1)])
def test_kernel_domain(r, s):
    with pytest.raises(InvalidParameterError):
        kernel_K(r, s)


@settings(max_examples=100, deadline=None)
@given(r=st.floats(1e-6, 1e6), frac=st.floats(0.0, 1.0))
def test_kernel_nonnegative(r, frac):
    assert kernel_K(r, frac * r) >= 0.0


def test_ball_potential(ball):
    Q, hd = ball
    V = hd.V
    assert V.value_at_origin() == pytest.approx(0.5, abs=5e-3)
    assert float(V.interpolate(1.0)) == pytest.approx(1 / 3, abs=5e-3)
    assert float(V.interpolate(2.0)) == pytest.approx(1 / 6, abs=5e-3)
    assert hd.lambda_Q == pytest.approx(0.5, abs=1e-4)
    assert hd.lambda_Q == pytest.approx(V.value_at_origin(), abs=1e-4)


def test_ball_exterior_is_point_mass(ball):
    Q, hd = ball
    r = Q.grid.nodes
    a = alpha_mass(Q)
    out = r > 1.0
    assert np.max(np.abs(hd.V.values[out] - a / r[out])) <= 1e-13


def test_zero_density():
    g = make_grid(3.0, 30)
    hd = hartree_potential(g.zeros())
    assert hd.lambda_Q == 0.0
    assert not np.any(hd.V.values) and not np.any(hd.A_Q.values)
    assert poisson_residual(g.zeros(), hd.V) == 0.0


def test_gaussian_against_closed_form():
    # rho = e^{-r^2}: V = (sqrt(pi)/4) erf(r) / r
    g = make_grid(30.0, 3000)
    Q = g.evaluate(lambda r: np.exp(-0.5 * r * r))
    r = g.nodes
    exact = math.sqrt(math.pi) / 4 * erf(r) / r
    assert np.max(np.abs(hartree_potential(Q).V.values - exact)) <= 1e-5


def test_gaussian_against_direct_quadrature():
    g = make_grid(30.0, 3000)
    Q = g.evaluate(lambda r: np.exp(-0.5 * r * r))
    V = hartree_potential(Q).V
    for r0 in (0.5, 2.0, 7.0):
        inner = quad(lambda s: s * s * np.exp(-s * s), 0, r0)[0] / r0
        outer = quad(lambda s: s * np.exp(-s * s), r0, np.inf)[0]
        assert float(V.interpolate(r0)) == pytest.approx(inner + outer, abs=2e-5)


def test_newton_identity_gaussian():
    g = make_grid(30.0, 3000)
    hd = hartree_potential(g.evaluate(lambda r: np.exp(-0.5 * r * r)))
    assert np.max(np.abs(-hd.V.values - (hd.A_Q.values - hd.lambda_Q))) <= 1e-12


def test_newton_identity_integral_form():
    # A_Q(r) = int_0^r K(r, s) rho(s) ds
    g = make_grid(10.0, 1000)
    hd = hartree_potential(g.evaluate(lambda r: np.exp(-0.5 * r * r)))
    for r0 in (0.5, 1.5, 4.0):
        want = quad(lambda s: kernel_K(r0, s) * np.exp(-s * s), 0, r0)[0]
        assert float(hd.A_Q.interpolate(r0)) == pytest.approx(want, abs=1e-4)


def test_poisson_residual_gaussian():
    g = make_grid(30.0, 3000)
    Q = g.evaluate(lambda r: np.exp(-0.5 * r * r))
    assert poisson_residual(Q, hartree_potential(Q).V) <= 1e-3


def test_poisson_residual_ball(ball):
    Q, hd = ball
    assert poisson_residual(Q, hd.V) <= 1e-10


def test_poisson_residual_grid_mismatch():
    a = make_grid(3.0, 30).zeros()
    b = make_grid(3.0, 31).zeros()
    with pytest.raises(GridMismatchError):
        poisson_residual(a, b)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_potential_positive_and_monotone(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(10.0, 200)
    Q = g.field(np.abs(rng.standard_normal(200)) * np.exp(-0.1 * g.nodes))
    V = hartree_potential(Q).V.values
    assert V.min() > 0
    assert np.all(np.diff(V) <= 1e-15 * V.max())
    # r^2 V' (face coefficient r_i r_{i+1}) is minus the enclosed mass: non-increasing
    flux = g.face_coefficients[:-1] * np.diff(V) / g.h
    assert np.all(np.diff(flux) <= 1e-12 * np.abs(flux).max())


def test_raw_array_matches_field_version():
    g = make_grid(5.0, 100)
    Q = g.evaluate(lambda r: np.exp(-r))
    assert np.array_equal(newton_potential(Q.values**2, g.nodes, g.h), hartree_potential(Q).V.values)
