import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sps_radial.energy import (
    ModelParams,
    decreasing_rearrangement,
    energy,
    l2_gradient,
    mass_normalize,
    scale_dilate,
    scale_mass,
)
from sps_radial.errors import InvalidParameterError
from sps_radial.radial_core import inner_3d, integrate_3d, make_grid
from sps_radial.verification import random_profile

P1 = ModelParams()


@pytest.fixture(scope="module")
def gauss():
    g = make_grid(30.0, 3000)
    return g.evaluate(lambda r: np.exp(-0.5 * r * r))


def test_model_params_validation():
    with pytest.raises(InvalidParameterError):
        ModelParams(C_S=-1.0)
    with pytest.raises(InvalidParameterError):
        ModelParams(epsilon=0)


def test_zero_field():
    b = energy(make_grid(5.0, 50).zeros(), P1)
    assert (b.kinetic, b.hartree, b.slater, b.total, b.mass) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert not np.any(l2_gradient(make_grid(5.0, 50).zeros(), P1).values)


def test_gaussian_components(gauss):
    b = energy(gauss, P1)
    assert abs(b.kinetic - 0.75 * math.pi**1.5) <= 1e-4
    assert abs(b.slater - (2 * math.pi / 3) ** 1.5 / 3) <= 1e-4
    # closed form: int V rho = pi^{3/2} / (2 sqrt 2) for rho = e^{-r^2}
    assert abs(b.hartree - math.pi**1.5 / (8 * math.sqrt(2))) <= 1e-4
    assert b.mass == pytest.approx(math.pi**1.5, abs=1e-10)
    assert b.total == b.kinetic - b.hartree + b.slater


def test_breakdown_json(gauss):
    import json

    d = json.loads(energy(gauss, P1).to_json())
    assert set(d) == {"kinetic", "hartree", "slater", "total", "mass"}


def test_gradient_directional_derivatives():
    rng = np.random.default_rng(7)
    g = make_grid(10.0, 500)
    for _ in range(20):
        u = g.field(random_profile(rng, g.nodes))
        v = g.field(random_profile(rng, g.nodes) - random_profile(rng, g.nodes))
        d = 1e-5
        fd = (energy(u + d * v, P1).total - energy(u - d * v, P1).total) / (2 * d)
        assert fd == pytest.approx(inner_3d(l2_gradient(u, P1), v), rel=1e-6)


def test_dilate_identity_and_mass(gauss):
    assert scale_dilate(gauss, 1.0) is gauss
    u2 = scale_dilate(gauss, 2.0)
    assert integrate_3d(u2 * u2) == pytest.approx(integrate_3d(gauss * gauss), rel=1e-4)
    with pytest.raises(InvalidParameterError):
        scale_dilate(gauss, 0.0)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_dilation_law(gauss, t):
    a, b = energy(gauss, P1), energy(scale_dilate(gauss, t), P1)
    assert b.kinetic == pytest.approx(t**2 * a.kinetic, rel=1e-3)
    assert b.hartree == pytest.approx(t * a.hartree, rel=1e-3)
    assert b.slater == pytest.approx(t**1.5 * a.slater, rel=1e-3)


def test_mass_scaling(gauss):
    u = mass_normalize(gauss, 1.0)
    assert scale_mass(u, 1.0) is u
    uM = scale_mass(u, 1.5)
    assert math.sqrt(integrate_3d(uM * uM)) == pytest.approx(1.5, rel=1e-4)
    assert energy(uM, P1).total / energy(u, P1).total == pytest.approx(1.5**6, rel=1e-3)
    with pytest.raises(InvalidParameterError):
        scale_mass(u, -1.0)


@pytest.mark.parametrize("C_S", [0.3, 1.0, 4.0])
def test_mass_scaling_any_slater_coefficient(gauss, C_S):
    p = ModelParams(C_S=C_S)
    u = mass_normalize(gauss, 1.0)
    ratio = energy(scale_mass(u, 0.8), p).total / energy(u, p).total
    assert ratio == pytest.approx(0.8**6, rel=1e-3)


def test_negative_energy_along_dilations():
    g = make_grid(400.0, 8000)
    u = g.evaluate(lambda r: np.exp(-0.5 * r * r))
    best = min(energy(scale_dilate(u, t), P1).total for t in np.geomspace(0.005, 1.0, 40))
    assert best < 0


def test_rearrangement_fixed_point(gauss):
    s = decreasing_rearrangement(gauss)
    assert np.array_equal(s.values, gauss.values)


def test_rearrangement_off_centre_bump():
    g = make_grid(20.0, 2000)
    u = g.evaluate(lambda r: np.exp(-((r - 3.0) ** 2)))
    s = decreasing_rearrangement(u)
    assert np.all(np.diff(s.values) <= 0)
    for p in (2, 3):
        assert integrate_3d(s**p) == pytest.approx(integrate_3d(u**p), rel=1e-10)
    a, b = energy(u, P1), energy(s, P1)
    assert b.kinetic <= a.kinetic and b.hartree >= a.hartree and b.total <= a.total


def test_rearrangement_uses_absolute_value():
    g = make_grid(5.0, 100)
    u = g.evaluate(lambda r: -np.exp(-r))
    assert np.allclose(decreasing_rearrangement(u).values, np.exp(-g.nodes))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rearrangement_triple(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(10.0, 300)
    u = g.field(random_profile(rng, g.nodes))
    s = decreasing_rearrangement(u)
    a, b = energy(u, P1), energy(s, P1)
    tol = 1e-12 * max(1.0, abs(a.total))
    assert np.all(np.diff(s.values) <= 0) and s.values.min() >= 0
    assert b.kinetic <= a.kinetic + tol
    assert b.hartree >= a.hartree - tol
    assert b.total <= a.total + tol
    for p in (2, 3):
        assert integrate_3d(s**p) == pytest.approx(integrate_3d(u**p), rel=1e-8)


def test_rearrangement_rough_profiles():
    rng = np.random.default_rng(3)
    g = make_grid(5.0, 200)
    for _ in range(20):
        u = g.field(rng.uniform(0, 1, 200))
        s = decreasing_rearrangement(u)
        for p in (2, 3):
            assert integrate_3d(s**p) == pytest.approx(integrate_3d(u**p), rel=1e-8)
        assert energy(s, P1).kinetic <= energy(u, P1).kinetic


def test_mass_normalize():
    g = make_grid(5.0, 100)
    u = mass_normalize(g.evaluate(lambda r: np.exp(-r)), 3.0)
    assert integrate_3d(u * u) == pytest.approx(9.0, rel=1e-14)
    with pytest.raises(InvalidParameterError):
        mass_normalize(g.zeros(), 1.0)
