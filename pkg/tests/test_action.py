import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from burgers_lab.action import (
    PiecewisePath,
    action_eval,
    action_gradient,
    el_residual,
    fenchel_legendre,
    gaussian_tail_check,
    laplace_limit_check,
    minimize_action,
    value_gradient_identity,
    varadhan_check,
)
from burgers_lab.field import ParameterError, Trajectory, forced_potential, zero_potential


def zero_phi(q):
    return np.zeros_like(np.asarray(q, float))


def cos_phi(q):
    return 1.0 - np.cos(q)


def _sampled(f, fdot, t_end, dt=1e-3):
    s = np.linspace(0.0, t_end, int(round(t_end / dt)) + 1)
    return Trajectory(s, f(s), fdot(s))


# ---------------------------------------------------------------- action_eval


@pytest.mark.parametrize("n", [1, 2, 3])
def test_surviving_type_action(forced, n):
    T = 2 * np.pi * n
    tr = _sampled(lambda s: s - np.sin(s) - T, lambda s: 1 - np.cos(s), T)
    rep = action_eval(tr, zero_phi, forced)
    expected = 1.5 * np.pi * n + n * 2 * np.pi * special.j0(1.0)
    assert abs(rep.value - expected) < 1e-6
    assert rep.value == pytest.approx(rep.kinetic + rep.potential + rep.boundary, abs=1e-12)


def test_bessel_constant_by_quadrature():
    val, _ = integrate.quad(lambda s: np.cos(np.sin(s)), 0, 2 * np.pi, epsabs=1e-13)
    assert val == pytest.approx(2 * np.pi * special.j0(1.0), abs=1e-12)


@pytest.mark.parametrize("n", [1, 3])
def test_rest_path_action_vanishes(forced, n):
    path = PiecewisePath(2 * np.pi * n, 5, 0.0, np.zeros(32))
    assert abs(action_eval(path, zero_phi, forced).value) < 1e-10


def test_constant_cost(zero):
    path = PiecewisePath(1.0, 2, 0.3, np.zeros(4))
    rep = action_eval(path, lambda q: np.full_like(q, 2.5), zero)
    assert rep.value == 2.5 and rep.kinetic == 0 and rep.potential == 0


def test_kinetic_part_exact(zero):
    lam = np.array([1.0, -2.0, 0.5, 3.0])
    rep = action_eval(PiecewisePath(2.0, 2, 0.0, lam), zero_phi, zero)
    assert rep.kinetic == pytest.approx(0.5 * 0.5 * np.sum(lam ** 2), rel=1e-15)


def test_path_invariants():
    p = PiecewisePath(2.0, 2, 1.0, [1.0, 2.0, 3.0, 4.0])
    assert p.end == pytest.approx(1.0 + 0.5 * 10)
    assert p.refine().end == pytest.approx(p.end)
    with pytest.raises(ParameterError):
        PiecewisePath(1.0, 2, 0.0, [1.0, 2.0])
    with pytest.raises(ParameterError):
        PiecewisePath(1.0, 1, 0.0, [1.0, np.nan])


# ---------------------------------------------------------------- gradient


def test_gradient_trivial(zero):
    g, g0 = action_gradient(PiecewisePath(1.0, 3, 0.7, np.zeros(8)), np.sin, zero)
    assert np.all(g == 0) and g0 == pytest.approx(np.sin(0.7))


def _fd_gradient(path, pot, phi, d=1e-6):
    def A(start, lam):
        return action_eval(PiecewisePath(path.t_end, path.level, start, lam), phi, pot).value

    g = np.empty(path.slopes.size)
    for j in range(g.size):
        e = np.zeros(g.size)
        e[j] = d
        g[j] = (A(path.start, path.slopes + e) - A(path.start, path.slopes - e)) / (2 * d)
    g0 = (A(path.start + d, path.slopes) - A(path.start - d, path.slopes)) / (2 * d)
    return g, g0


_FORCED = forced_potential()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 4))
    t = float(rng.uniform(0.2, 2 * np.pi))
    path = PiecewisePath(t, n, rng.uniform(0, 2 * np.pi), rng.uniform(-3, 3, 2 ** n))
    g, g0 = action_gradient(path, np.sin, _FORCED)
    fg, fg0 = _fd_gradient(path, _FORCED, cos_phi)
    scale = max(1.0, np.max(np.abs(fg)), abs(fg0))
    assert np.max(np.abs(g - fg)) / scale < 1e-6
    assert abs(g0 - fg0) / scale < 1e-6


# ---------------------------------------------------------------- minimization


def test_free_particle(zero):
    best, rep = minimize_action(1.0, 1.0, 3, zero_phi, zero_phi, zero, restarts=4,
                                fixed_start=0.0)
    np.testing.assert_allclose(best.slopes, 1.0, atol=1e-8)
    assert rep.value == pytest.approx(0.5, abs=1e-10)


def test_free_left_end_with_cost(zero):
    # start is free, phi = 1 - cos: the minimizer sits still at x = 0
    best, rep = minimize_action(1.0, 0.0, 3, cos_phi, np.sin, zero, restarts=4)
    assert abs(best.start) < 1e-6 and rep.value == pytest.approx(0.0, abs=1e-10)
    assert rep.el_residual < 1e-3


def test_gradient_vanishes_at_minimizer(forced):
    best, rep = minimize_action(1.0, 0.5, 4, cos_phi, np.sin, forced, restarts=8)
    assert rep.el_residual < 1e-3
    g, g0 = action_gradient(best, np.sin, forced)
    # the constrained gradient: every free slope direction moves the start
    red = g - best.h * g0
    assert np.linalg.norm(red) < 1e-7


def test_nesting_monotone(forced):
    vals = []
    for n in range(1, 6):
        _, rep = minimize_action(1.0, 0.5, n, cos_phi, np.sin, forced, restarts=8)
        vals.append(rep.value)
        assert rep.el_residual < 1e-3
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_bad_time(forced):
    with pytest.raises(ParameterError):
        minimize_action(0.0, 0.5, 2, cos_phi, np.sin, forced)


# ---------------------------------------------------------------- EL residual


def test_el_residual_reference(forced):
    tr = _sampled(lambda s: s - np.sin(s), lambda s: 1 - np.cos(s), 2 * np.pi)
    assert el_residual(tr, forced, zero_phi) < 1e-6


def test_el_residual_free_line(zero):
    tr = _sampled(lambda s: 0.2 + 0.7 * s, lambda s: np.full_like(s, 0.7), 1.0)
    assert el_residual(tr, zero, lambda q: np.full_like(q, 0.7)) < 1e-9


def test_el_residual_detects_perturbation(forced):
    tr = _sampled(lambda s: s - np.sin(s) + 0.05 * np.sin(3 * s),
                  lambda s: 1 - np.cos(s) + 0.15 * np.cos(3 * s), 2 * np.pi)
    assert el_residual(tr, forced, zero_phi) > 0.1


def test_el_residual_needs_samples(forced):
    tr = _sampled(lambda s: s, lambda s: np.ones_like(s), 1.0, dt=0.2)
    with pytest.raises(ParameterError):
        el_residual(tr, forced, zero_phi)


# ---------------------------------------------------------------- Legendre


def test_fenchel_examples():
    assert fenchel_legendre(np.zeros(4), 2, 1.0) == 0.0
    assert fenchel_legendre([1.0, 1.0], 1, 1.0) == 2.0
    with pytest.raises(ParameterError):
        fenchel_legendre([1.0], 1, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 4), st.floats(0.1, 10), st.integers(0, 2**32 - 1))
def test_fenchel_is_the_supremum(n, t, seed):
    xs = np.random.default_rng(seed).uniform(-2, 2, 2 ** n)
    lam = 2 ** n * xs / t
    sup = lam @ xs - t / 2 ** (n + 1) * np.sum(lam ** 2)
    assert fenchel_legendre(xs, n, t) == pytest.approx(sup, rel=1e-12, abs=1e-14)
    # and any other lambda does worse
    other = lam + 0.1
    assert other @ xs - t / 2 ** (n + 1) * np.sum(other ** 2) < sup


def test_gaussian_tail_rate():
    r = [gaussian_tail_check(2, 1.0, eps, 1.0)["eps_log_p"] for eps in (0.2, 0.1, 0.05)]
    rate = gaussian_tail_check(2, 1.0, 0.1, 1.0)["rate"]
    gaps = [abs(v - rate) for v in r]
    assert gaps[0] > gaps[1] > gaps[2]


# ---------------------------------------------------------------- limits


def test_laplace_free_particle(zero):
    r = laplace_limit_check(1.0, 0.3, 2, [0.4, 0.1], zero_phi, zero_phi, zero,
                            n_paths=2000, restarts=2)
    for row in r["rows"]:
        assert abs(row["neg_eps_log_u"]) < 1e-12 and abs(row["inf_action"]) < 1e-10


def test_laplace_gap_shrinks(forced):
    r = laplace_limit_check(1.0, 0.5, 2, [0.4, 0.2, 0.1], zero_phi, zero_phi, forced,
                            n_paths=200_000)
    gaps = [row["gap"] for row in r["rows"]]
    assert r["monotone"]
    assert gaps[-1] * 2 < gaps[0]
    assert not any(row["precision_warning"] for row in r["rows"])


def test_laplace_level_cap(forced):
    with pytest.raises(ParameterError):
        laplace_limit_check(1.0, 0.5, 5, [0.4], zero_phi, zero_phi, forced)


def test_varadhan_free_potential(zero):
    r = varadhan_check(0.5, 0.5, [0.4, 0.2, 0.1, 0.05], cos_phi, np.sin, zero, n_levels=(6,))
    assert r["monotone_in_eps"]
    assert r["gaps_finest"][-1] < 0.05


def test_varadhan_short_time(forced):
    r = varadhan_check(0.05, 0.5, [0.05], cos_phi, np.sin, forced, n_levels=(4,))
    row = r["rows"][0]
    assert abs(row["neg_eps_log_u"] - cos_phi(0.5)) < 0.05
    assert abs(row["min_action"] - cos_phi(0.5)) < 0.05


def test_varadhan_rejects_small_eps(forced):
    with pytest.raises(ParameterError):
        varadhan_check(1.0, 0.5, [0.01], cos_phi, np.sin, forced)


# ---------------------------------------------------------------- value gradient


def test_value_gradient_free_particle(zero):
    r = value_gradient_identity(2.0, 1.2, 1e-3, 3, zero_phi, zero_phi, zero, restarts=2,
                                fixed_start=0.0)
    assert r["value"] == pytest.approx(1.2 ** 2 / 4, abs=1e-10)
    assert r["lhs"] == pytest.approx(0.6, abs=1e-7)
    assert r["rhs"] == pytest.approx(0.6, abs=1e-7)


def test_value_gradient_forced_smooth_point(forced):
    r = value_gradient_identity(1.0, 0.5, 1e-3, 8, cos_phi, np.sin, forced, restarts=8)
    assert not r["ambiguous"]
    assert abs(r["lhs"] - r["rhs"]) < 1e-3


def test_value_gradient_richardson(forced):
    a = value_gradient_identity(1.0, 0.5, 2e-2, 6, cos_phi, np.sin, forced, restarts=4)
    b = value_gradient_identity(1.0, 0.5, 1e-2, 6, cos_phi, np.sin, forced, restarts=4)
    c = value_gradient_identity(1.0, 0.5, 5e-3, 6, cos_phi, np.sin, forced, restarts=4)
    d1, d2 = abs(a["lhs"] - b["lhs"]), abs(b["lhs"] - c["lhs"])
    # second order: halving dx divides the change by about four
    assert 3.0 < d1 / d2 < 5.0
