import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from burgers_lab.field import (
    EvaluationError,
    ParameterError,
    PeriodicField,
    SpatialGrid,
    Trajectory,
    constant_potential,
    eval_potential,
    eval_potential_gradient,
    l1_distance,
    l2_norm,
    periodic_spline,
    potential_from_name,
    quadrature,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_grid_rules():
    g = SpatialGrid(16)
    assert g.dx == pytest.approx(2 * np.pi / 16)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == pytest.approx(2 * np.pi - g.dx)
    with pytest.raises(ParameterError):
        SpatialGrid(4)
    with pytest.raises(ParameterError):
        SpatialGrid(16, period=1.0)


def test_field_validation():
    g = SpatialGrid(8)
    with pytest.raises(ParameterError):
        PeriodicField(g, np.zeros(7))
    with pytest.raises(EvaluationError):
        PeriodicField(g, np.r_[np.nan, np.zeros(7)])
    with pytest.raises(ParameterError):
        PeriodicField(g, np.ones(8), mean_zero=True)
    f = g.sample(np.sin, mean_zero=True)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_forced_potential_values(forced):
    assert eval_potential(forced, 0.0, 0.0) == 0.0
    assert eval_potential(forced, 0.0, np.pi) == pytest.approx(2.0, abs=1e-15)
    # cos(1) - cos(pi/2 + 1) = cos 1 + sin 1
    assert eval_potential(forced, np.pi / 2, np.pi / 2) == pytest.approx(np.cos(1) + np.sin(1), abs=1e-15)
    assert eval_potential_gradient(forced, 0.0, np.pi / 2) == 1.0
    assert eval_potential_gradient(forced, 0.0, 0.0) == 0.0
    assert (forced.K1, forced.K2, forced.Kxx) == (2.0, 1.0, 1.0)


def test_forced_periodicity(forced):
    rng = np.random.default_rng(1)
    t, x = rng.uniform(-20, 20, (2, 1000))
    assert np.max(np.abs(forced.value(t, x) - forced.value(t + 2 * np.pi, x + 2 * np.pi))) < 1e-12


@given(finite, finite)
def test_gradient_matches_finite_differences(t, x):
    from burgers_lab.field import forced_potential

    pot = forced_potential()
    h = 1e-5
    fd = (pot.value(t, x + h) - pot.value(t, x - h)) / (2 * h)
    assert abs(fd - pot.grad(t, x)) < 1e-8


def test_named_potentials():
    assert potential_from_name("constant:0.5").value(1.0, 2.0) == 0.5
    assert potential_from_name("zero").value(np.zeros(3), 1.0).shape == (3,)
    with pytest.raises(ParameterError):
        potential_from_name("bogus")


def test_l2_norm_examples():
    g = SpatialGrid(256)
    assert l2_norm(g.field(np.zeros(256))) == 0.0
    assert l2_norm(g.field(np.full(256, -3.0))) == pytest.approx(3.0, abs=1e-14)
    assert abs(l2_norm(g.sample(np.sin)) - 1 / np.sqrt(2)) < 1e-10


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_l2_norm_homogeneous_and_triangle(seed, c):
    g = SpatialGrid(32)
    rng = np.random.default_rng(seed)
    f, h = g.field(rng.normal(size=32)), g.field(rng.normal(size=32))
    assert l2_norm(g.field(c * f.values)) == pytest.approx(abs(c) * l2_norm(f), rel=1e-12, abs=1e-14)
    assert l2_norm(g.field(f.values + h.values)) <= l2_norm(f) + l2_norm(h) + 1e-12
    assert l1_distance(f, f) == 0.0


def test_quadrature_examples():
    assert quadrature(lambda s: 1.0, 0.0, 2 * np.pi, 100) == pytest.approx(2 * np.pi, abs=1e-13)
    bessel = quadrature(lambda s: np.cos(np.sin(s)), 0.0, 2 * np.pi, 10**5)
    assert bessel == pytest.approx(2 * np.pi * special.j0(1.0), abs=1e-12)
    # the rounded value 4.80790 is 2e-5 above 2 pi J0(1) = 4.807879
    assert bessel == pytest.approx(4.80790, abs=5e-5)
    kin = quadrature(lambda s: 0.5 * (1 - np.cos(s)) ** 2, 0.0, 2 * np.pi, 10**5)
    assert abs(kin - 3 * np.pi / 2) < 1e-10


def test_quadrature_reports_abscissa():
    with np.errstate(divide="ignore"), pytest.raises(EvaluationError) as err:
        quadrature(lambda s: 1.0 / (s - 1.0), 0.0, 2.0, 4)
    assert err.value.abscissa == 1.0
    with pytest.raises(ParameterError):
        quadrature(np.sin, 1.0, 0.0, 4)


def test_quadrature_scalar_only_integrand():
    import math

    assert quadrature(lambda s: math.sin(s) ** 2, 0.0, np.pi, 64) == pytest.approx(np.pi / 2, abs=1e-8)


def test_quadrature_fourth_order():
    f = np.exp
    exact = np.e - 1
    e1 = abs(quadrature(f, 0, 1, 8) - exact)
    e2 = abs(quadrature(f, 0, 1, 16) - exact)
    assert 12 < e1 / e2 < 20


def test_trajectory_rules():
    Trajectory([0, 1], [0, 1], [1, 1])
    Trajectory([1, 0], [0, 1], [1, 1])  # backward in time is allowed
    with pytest.raises(ParameterError):
        Trajectory([0], [0], [0])
    with pytest.raises(ParameterError):
        Trajectory([0, 1, 1], [0, 0, 0], [0, 0, 0])


def test_field_calculus():
    g = SpatialGrid(256)
    f = g.sample(np.sin)
    assert np.max(np.abs(f.derivative().values - np.cos(g.nodes))) < 1e-3
    anti = g.sample(np.cos).antiderivative()
    assert np.max(np.abs(anti.values - np.sin(g.nodes))) < 1e-4
    assert f.interp(2 * np.pi + g.nodes[3]) == pytest.approx(f.values[3])
    phi, dphi = periodic_spline(f)
    assert abs(dphi(np.array([0.0]))[0] - 1.0) < 1e-6
    assert abs(phi(np.array([4 * np.pi + 1.0]))[0] - np.sin(1.0)) < 1e-7


def test_integral_of_constant_potential():
    pot = constant_potential(1.5)
    assert integrate.quad(lambda s: pot.value(s, 0.0), 0, 1)[0] == pytest.approx(1.5)
