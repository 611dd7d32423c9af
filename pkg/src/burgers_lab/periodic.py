"""Space-time periodic solutions.

Viscous case: the Perron eigenfunction of the one-period operator of the
positive field gives u0 = -eps (log phi)'. Inviscid case: relax an
arbitrary mean-zero start for many periods.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .field import TWO_PI, ParameterError, PeriodicField, Potential, SpatialGrid, l2_norm, l1_distance
from .inviscid import InviscidRun, solve_inviscid
from .viscous import PropagatorMatrix, ViscousRun, build_propagator, default_dt, solve_viscous, u_from_log

log = logging.getLogger(__name__)

EPS_FLOOR = 0.05


class ConvergenceError(RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    phi_eig: np.ndarray
    iterations: int
    residual: float
    log_lambda: float = float("nan")


@dataclass(frozen=True, eq=False)
class PeriodicSolution:
    eps: float
    u0: PeriodicField
    run: object
    residual: float
    history: list = field(default_factory=list)
    phi: PeriodicField | None = None


def build_period_operator(eps: float, grid: SpatialGrid, pot: Potential,
                          n_steps: int | None = None) -> PropagatorMatrix:
    return build_propagator(pot, eps, 0.0, TWO_PI, grid, n_steps=n_steps)


def principal_eigenpair(op, tol: float = 1e-12, max_iter: int = 500, start=None) -> EigenPair:
    """Power iteration from the constant vector, sup-normalized.

    ``op`` is a PropagatorMatrix or a plain square array. The residual is
    the sup norm of T v - lambda v relative to lambda, for sup(v) = 1.
    """
    if isinstance(op, PropagatorMatrix):
        A = op.operator()
        log_scale = op.log_scale
    else:
        A = np.asarray(op, dtype=float)
        log_scale = 0.0
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("operator must be square")
    if not np.all(A > 0):
        raise ParameterError("power iteration needs a strictly positive operator")
    v = np.ones(A.shape[0]) if start is None else np.asarray(start, float).copy()
    v /= v.max()
    history = []
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = A @ v
        lam = w.max()
        w /= lam
        res = float(np.max(np.abs(A @ w - lam * w)) / lam)
        history.append(res)
        v = w
        if res < tol:
            break
    else:
        raise ConvergenceError(f"power iteration stalled at residual {history[-1]:.3e}", history)
    return EigenPair(float(lam * np.exp(log_scale)), v, it, res, float(np.log(lam) + log_scale))


def unit_eigenvector(pair: EigenPair) -> np.ndarray:
    v = pair.phi_eig
    return v / np.linalg.norm(v)


def periodic_initial_condition(eps: float, grid: SpatialGrid, pot: Potential,
                               tol: float = 1e-12, max_iter: int = 500, pair: EigenPair | None = None):
    """(phi, u0): phi = -eps log(eigenfunction), mean zero; u0 = phi' by centered differences."""
    if not EPS_FLOOR <= eps <= 1.0:
        raise ParameterError(f"eps must lie in [{EPS_FLOOR}, 1]")
    if pair is None:
        pair = principal_eigenpair(build_period_operator(eps, grid, pot), tol, max_iter)
    logv = np.log(pair.phi_eig)
    phi = -eps * logv
    phi = PeriodicField(grid, phi - phi.mean())
    u0 = u_from_log(grid, eps, logv)
    return phi, u0


def viscous_periodic(eps: float, grid: SpatialGrid, pot: Potential, tol: float = 1e-12,
                     max_iter: int = 500) -> PeriodicSolution:
    op = build_period_operator(eps, grid, pot)
    pair = principal_eigenpair(op, tol, max_iter)
    phi, u0 = periodic_initial_condition(eps, grid, pot, pair=pair)
    run = solve_viscous(eps, phi, pot, TWO_PI, grid)
    resid = l2_norm(PeriodicField(grid, run.u[-1].values - run.u[0].values))
    return PeriodicSolution(eps, u0, run, resid, [pair.residual], phi)


def inviscid_periodic(grid: SpatialGrid, pot: Potential, n_relax_periods: int = 50,
                      u_init: PeriodicField | None = None, cfl: float = 0.5,
                      n_out: int = 128, floor: float = 1e-2) -> PeriodicSolution:
    """Relax for ``n_relax_periods`` periods, then record one more period.

    The residual after period k is the normalized L1 distance between
    u(2pi k) and u(2pi (k-1)).
    """
    if n_relax_periods < 1:
        raise ParameterError("need at least one relaxation period")
    u = u_init if u_init is not None else grid.field(np.zeros(grid.n_points))
    if abs(u.mean()) > 1e-8:
        raise ParameterError("initial field must be mean-zero")
    history = []
    for _ in range(n_relax_periods):
        r = solve_inviscid(u, pot, TWO_PI, grid, cfl=cfl, n_out=1)
        history.append(l1_distance(r.slices[-1], u))
        u = r.slices[-1]
    q = max(1, len(history) // 4)
    tail, before = history[-q:], history[-2 * q:-q] or history[:1]
    if history[-1] > floor and np.mean(tail) >= np.mean(before):
        raise ConvergenceError(f"periodicity residual stuck at {history[-1]:.3e}", history)
    run = solve_inviscid(u, pot, TWO_PI, grid, cfl=cfl, n_out=n_out)
    run = replace(run, t_period=TWO_PI)
    resid = l1_distance(run.slices[-1], run.slices[0])
    phi = u.antiderivative()
    return PeriodicSolution(0.0, u, run, resid, history, phi)


def mollify(f: PeriodicField, width_cells: int = 4) -> PeriodicField:
    """Triangular kernel of total width ``width_cells`` cells."""
    half = width_cells // 2
    w = np.array([half + 1 - abs(k) for k in range(-half, half + 1)], dtype=float)
    w /= w.sum()
    out = np.zeros(len(f))
    for k, wk in zip(range(-half, half + 1), w):
        out += wk * np.roll(f.values, k)
    return PeriodicField(f.grid, out)


def viscosity_convergence(eps_list, grid: SpatialGrid, pot: Potential,
                          inviscid: PeriodicSolution | None = None,
                          n_relax_periods: int = 50) -> dict:
    """Mollified L2 distance from u0^eps to the inviscid u0, and sup
    distance from phi^eps to phi, for each eps."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("eps_list must be strictly decreasing")
    if inviscid is None:
        inviscid = inviscid_periodic(grid, pot, n_relax_periods)
    ref_u = mollify(inviscid.u0)
    ref_phi = inviscid.phi
    rows = []
    for eps in eps_list:
        phi, u0 = periodic_initial_condition(eps, grid, pot)
        du = l2_norm(PeriodicField(grid, mollify(u0).values - ref_u.values))
        dphi = float(np.max(np.abs(phi.values - ref_phi.values)))
        rows.append({"eps": eps, "u_distance": du, "phi_sup_distance": dphi})
    d = [r["u_distance"] for r in rows]
    p = [r["phi_sup_distance"] for r in rows]
    return {"rows": rows, "mollifier": "triangular, width 4 cells",
            "u_decreasing": bool(all(b <= a for a, b in zip(d, d[1:]))),
            "phi_decreasing": bool(all(b <= a for a, b in zip(p, p[1:])))}


def eigen_bounds_ok(pair: EigenPair, eps: float, pot: Potential) -> bool:
    """exp(-2pi K1/eps) <= lambda <= exp(2pi K1/eps), checked in logs."""
    b = TWO_PI * pot.K1 / eps
    return -b <= pair.log_lambda <= b


def to_json(sol: PeriodicSolution, pair: EigenPair | None = None, distances=None) -> str:
    doc = {"eps": sol.eps, "periodicity_residual": sol.residual,
           "lambda": None if pair is None else pair.lam, "distances": distances}
    return json.dumps(doc, sort_keys=True, indent=2)
