import numpy as np
import pytest

from burgers_lab.field import (
    ParameterError,
    SpatialGrid,
    constant_potential,
    custom_potential,
    l2_norm,
)
from burgers_lab.viscous import (
    PropagatorMatrix,
    StepSizeError,
    build_propagator,
    direct_viscous_step,
    feynman_kac_estimate,
    l2_bound,
    log_stability_gap,
    solve_viscous,
    solve_viscous_direct,
)


def test_heat_rows_conserve_mass(zero):
    g = SpatialGrid(64)
    for eps in (0.1, 0.5, 1.0):
        P = build_propagator(zero, eps, 0.0, 1.0, g)
        assert np.max(np.abs(P.dense().sum(axis=1) * g.dx - 1.0)) < 1e-8
        assert P.entries.min() > 0


def test_composition(forced):
    g = SpatialGrid(64)
    whole = build_propagator(forced, 0.5, 0.0, 2 * np.pi, g, n_steps=400)
    a = build_propagator(forced, 0.5, 0.0, np.pi, g, n_steps=200)
    b = build_propagator(forced, 0.5, np.pi, 2 * np.pi, g, n_steps=200)
    assert np.max(np.abs(whole.dense() - a.compose(b).dense())) < 1e-6


def test_frozen_potential_gives_symmetric_operator():
    pot = custom_potential(lambda t, x: np.cos(x), lambda t, x: -np.sin(x), lambda t, x: -np.cos(x),
                           1, 1, 1, time_independent=True)
    g = SpatialGrid(16)
    P = build_propagator(pot, 0.5, 0.0, 1.0, g).dense()
    np.testing.assert_allclose(P, P.T, rtol=1e-10, atol=1e-14)
    ev = np.linalg.eigvals(P)
    top = ev[np.argmax(np.abs(ev))]
    assert abs(top.imag) < 1e-12 and top.real > 0


def test_parameter_errors(forced):
    g = SpatialGrid(16)
    with pytest.raises(ParameterError):
        build_propagator(forced, 0.0, 0.0, 1.0, g)
    with pytest.raises(ParameterError):
        build_propagator(forced, 0.5, 1.0, 1.0, g)


def test_binary_round_trip(forced, tmp_path):
    P = build_propagator(forced, 0.3, 0.5, 1.5, SpatialGrid(16))
    raw = P.to_bytes()
    assert raw[:4] == b"PROP"
    Q = PropagatorMatrix.from_bytes(raw)
    assert Q.to_bytes() == raw
    assert np.array_equal(Q.entries, P.entries)
    assert (Q.eps, Q.t0, Q.t1, Q.log_scale) == (P.eps, P.t0, P.t1, P.log_scale)
    P.save(tmp_path / "p.bin")
    assert PropagatorMatrix.load(tmp_path / "p.bin").to_bytes() == raw
    with pytest.raises(ValueError):
        PropagatorMatrix.from_bytes(b"NOPE" + raw[4:])


def test_zero_data_stays_zero(zero):
    g = SpatialGrid(32)
    run = solve_viscous(0.3, g.field(np.zeros(32)), zero, 1.0)
    assert max(np.max(np.abs(u.values)) for u in run.u) < 1e-12


def test_cross_scheme_agreement(forced, grid256):
    phi = grid256.field(np.zeros(256))
    run = solve_viscous(0.5, phi, forced, np.pi)
    direct = solve_viscous_direct(phi, 0.5, forced, np.pi)
    assert l2_norm(grid256.field(run.u[-1].values - direct.values)) < 1e-3


def test_mass_and_positivity(forced):
    g = SpatialGrid(128)
    run = solve_viscous(0.2, g.sample(lambda x: 1 - np.cos(x)), forced, 2 * np.pi)
    assert max(abs(u.integral()) for u in run.u) < 1e-8
    assert run.U.min() > 0
    # u is recoverable from log U
    k = len(run.times) - 1
    lu = run.log_U(k)
    u = -0.2 * (np.roll(lu, -1) - np.roll(lu, 1)) / (2 * g.dx)
    np.testing.assert_allclose(u, run.u[k].values, atol=1e-10)


def test_small_eps_rescaling_keeps_u_finite(forced):
    g = SpatialGrid(128)
    run = solve_viscous(0.05, g.sample(lambda x: 2 * np.sin(x)), forced, 1.0, save_every=50)
    assert np.all(np.isfinite(run.u[-1].values))
    assert run.log_scales[-1] != 0.0


def test_l2_bound_value_and_runs(forced):
    assert l2_bound(1.0, 1.0) == pytest.approx(6 * np.pi + np.sqrt(6 + 6 * np.pi))
    assert l2_bound(1.0, 1.0) == pytest.approx(23.83, abs=5e-3)
    g = SpatialGrid(128)
    phi = g.sample(lambda x: -9 * np.cos(x))  # u0 = 9 sin x, norm 9/sqrt2 < 9 pi
    run = solve_viscous(0.3, phi, forced, 2 * np.pi, save_every=10)
    assert max(l2_norm(u) for u in run.u) <= l2_bound(1.0, 1.0)


def test_direct_step_trivia(zero, forced):
    g = SpatialGrid(64)
    z = g.field(np.zeros(64))
    assert np.all(direct_viscous_step(z, 0.5, zero, 0.0, 1e-3).values == 0)
    c = g.field(np.full(64, 0.7))
    np.testing.assert_allclose(direct_viscous_step(c, 0.5, zero, 0.0, 1e-3).values, 0.7, atol=1e-14)
    u = g.sample(np.sin)
    v = direct_viscous_step(u, 0.5, forced, 0.3, 1e-3)
    assert abs(v.integral() - u.integral()) < 1e-12


def test_direct_step_cfl_error(zero):
    g = SpatialGrid(64)
    u = g.sample(lambda x: 3 * np.sin(x))
    with pytest.raises(StepSizeError) as err:
        direct_viscous_step(u, 0.5, zero, 0.0, 0.1)
    assert 0 < err.value.admissible_dt < 0.1


def test_direct_step_richardson(forced):
    g = SpatialGrid(64)
    u = g.sample(np.sin)
    dts = [4e-3, 2e-3]
    diffs = []
    for dt in dts:
        one = direct_viscous_step(u, 0.5, forced, 0.0, dt).values
        half = direct_viscous_step(direct_viscous_step(u, 0.5, forced, 0.0, dt / 2), 0.5, forced,
                                   dt / 2, dt / 2).values
        diffs.append(np.max(np.abs(one - half)))
    # local error of a third-order step decays at least like dt^2
    assert diffs[1] < diffs[0] / 3.5


def test_feynman_kac_trivia(zero):
    est, se = feynman_kac_estimate(0.5, lambda x: 0 * x, zero, 1.0, 0.0, n_paths=100)
    assert est == 1.0 and se == 0.0
    est, se = feynman_kac_estimate(0.5, lambda x: 0 * x, constant_potential(0.7), 1.0, 0.0, n_paths=100)
    assert est == pytest.approx(np.exp(-0.7 / 0.5), rel=1e-14) and se == 0.0


def test_feynman_kac_deterministic(forced):
    a = feynman_kac_estimate(0.5, np.cos, forced, 1.0, 0.2, n_paths=2000, seed=7)
    b = feynman_kac_estimate(0.5, np.cos, forced, 1.0, 0.2, n_paths=2000, seed=7)
    assert a == b


def test_feynman_kac_against_pde(forced, grid256):
    run = solve_viscous(0.5, grid256.field(np.zeros(256)), forced, 1.0)
    exact = np.exp(run.log_U(len(run.times) - 1))[0]
    est, se = feynman_kac_estimate(0.5, lambda x: 0 * x, forced, 1.0, 0.0, n_paths=40_000, seed=3)
    assert abs(est - exact) < 3 * se


def test_log_stability_gap(forced):
    g = SpatialGrid(64)
    a = g.sample(np.cos)
    assert log_stability_gap(0.5, a, a, forced, 1.0) == 0.0
    b = g.field(a.values + 0.3)
    assert log_stability_gap(0.5, a, b, forced, 1.0) == pytest.approx(0.3, abs=1e-10)


def test_log_stability_random_perturbation(forced):
    g = SpatialGrid(128)
    rng = np.random.default_rng(5)
    a = g.sample(lambda x: np.sin(x) + 0.5 * np.cos(2 * x))
    d = rng.normal(size=3) @ np.array([np.sin(g.nodes), np.cos(3 * g.nodes), np.sin(2 * g.nodes)])
    d *= 0.1 / np.max(np.abs(d))
    gap = log_stability_gap(0.5, a, g.field(a.values + d), forced, 2 * np.pi)
    assert 0 < gap <= 0.1 + 1e-6
