"""Action functional on sampled and piecewise-linear paths.

    A(xi) = 1/2 int_0^t xi'^2 ds + int_0^t V(s, xi(s)) ds + phi(xi(0))

minimized over paths with xi(t) = x. The piecewise-linear spaces S_n have
2**n constant slopes on equal subintervals of [0, t].
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .field import ParameterError, Potential, Trajectory, simpson_weights

log = logging.getLogger(__name__)

SEGMENT_NODES = 64


class OptimizationError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    t_end: float
    level: int
    start: float
    slopes: np.ndarray

    def __post_init__(self):
        s = np.array(self.slopes, dtype=float, copy=True)
        if self.t_end <= 0:
            raise ParameterError("t_end must be positive")
        if s.shape != (2 ** self.level,):
            raise ParameterError(f"level {self.level} needs {2 ** self.level} slopes")
        if not np.all(np.isfinite(s)):
            raise ParameterError("slopes must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "slopes", s)

    @property
    def h(self) -> float:
        return self.t_end / 2 ** self.level

    @property
    def node_times(self) -> np.ndarray:
        return self.h * np.arange(2 ** self.level + 1)

    @property
    def node_positions(self) -> np.ndarray:
        return self.start + self.h * np.concatenate(([0.0], np.cumsum(self.slopes)))

    @property
    def end(self) -> float:
        return float(self.start + self.h * np.sum(self.slopes))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        j = np.clip((s / self.h).astype(int), 0, 2 ** self.level - 1)
        return self.node_positions[j] + self.slopes[j] * (s - j * self.h)

    def refine(self) -> "PiecewisePath":
        """The same path viewed as an element of the next level."""
        return PiecewisePath(self.t_end, self.level + 1, self.start, np.repeat(self.slopes, 2))

    def to_trajectory(self, samples_per_segment: int = 8) -> Trajectory:
        m = samples_per_segment
        s = np.linspace(0.0, self.t_end, m * 2 ** self.level + 1)
        j = np.minimum(np.arange(s.size) // m, 2 ** self.level - 1)
        return Trajectory(s, self(s), self.slopes[j])


@dataclass(frozen=True)
class ActionReport:
    value: float
    kinetic: float
    potential: float
    boundary: float
    el_residual: float = float("nan")


def _segment_grid(path: PiecewisePath, m: int):
    """Simpson abscissae (N, m+1) and the path on them."""
    frac = np.linspace(0.0, 1.0, m + 1)
    h = path.h
    s = path.node_times[:-1, None] + h * frac[None, :]
    xi = path.node_positions[:-1, None] + path.slopes[:, None] * h * frac[None, :]
    return s, xi, frac


def _segment_integrals(path: PiecewisePath, pot: Potential, m: int = SEGMENT_NODES):
    """Per-segment integrals of V, V_x and (s - s_j) V_x."""
    s, xi, frac = _segment_grid(path, m)
    w = simpson_weights(m, path.h / m)
    v = pot.value(s, xi) @ w
    vx = pot.grad(s, xi)
    ix = vx @ w
    jx = (vx * (frac * path.h)[None, :]) @ w
    return v, ix, jx


def action_eval(path, phi, pot: Potential, phi_prime=None, m: int = SEGMENT_NODES) -> ActionReport:
    """Action of a PiecewisePath (exact kinetic term) or a sampled Trajectory."""
    if isinstance(path, PiecewisePath):
        kin = 0.5 * path.h * float(np.sum(path.slopes ** 2))
        v, _, _ = _segment_integrals(path, pot, m)
        pot_part = float(np.sum(v))
        bnd = float(phi(np.array([path.start]))[0])
    else:
        t, q, p = path.times, path.positions, path.velocities
        kin = 0.5 * float(integrate.simpson(p ** 2, x=t))
        pot_part = float(integrate.simpson(pot.value(t, q), x=t))
        bnd = float(phi(np.array([q[0]]))[0])
    res = el_residual(path, pot, phi_prime) if phi_prime is not None else float("nan")
    return ActionReport(kin + pot_part + bnd, kin, pot_part, bnd, res)


def action_gradient(path: PiecewisePath, phi_prime, pot: Potential, m: int = SEGMENT_NODES):
    """Gradient of the action in (slopes, start), without the endpoint
    constraint.

    d/d lambda_i = h lambda_i + int_seg_i (s - s_i) V_x + h int_{s_{i+1}}^t V_x
    d/d start    = phi'(start) + int_0^t V_x
    """
    _, ix, jx = _segment_integrals(path, pot, m)
    tail = np.concatenate((np.cumsum(ix[::-1])[::-1][1:], [0.0]))
    g = path.h * path.slopes + jx + path.h * tail
    g_start = float(phi_prime(np.array([path.start]))[0] + np.sum(ix))
    return g, g_start


def interior_el_residual(path: PiecewisePath, pot: Potential) -> float:
    """Discrete EL defect at the interior nodes only (no boundary term)."""
    h = path.h
    _, ix, jx = _segment_integrals(path, pot)
    lam = path.slopes
    if lam.size < 2:
        return 0.0
    rhs = (jx[:-1] + (h * ix[1:] - jx[1:])) / h ** 2
    return float(np.max(np.abs(np.diff(lam) / h - rhs)))


def el_residual(path, pot: Potential, phi_prime) -> float:
    """Euler-Lagrange defect: interior equation plus the natural boundary
    condition xi'(0) = phi'(xi(0)).

    For a PiecewisePath the discrete stationarity conditions of S_n are used,
    i.e. the slope jump at each node against the hat-weighted average of V_x.
    """
    if isinstance(path, PiecewisePath):
        h = path.h
        _, ix, jx = _segment_integrals(path, pot)
        lam = path.slopes
        interior = interior_el_residual(path, pot)
        bnd = abs(lam[0] - float(phi_prime(np.array([path.start]))[0]) - (h * ix[0] - jx[0]) / h)
        return interior + float(bnd)

    t, q, p = path.times, path.positions, path.velocities
    if len(t) < 8:
        raise ParameterError("trajectory needs at least 8 samples")
    dt = np.diff(t)
    if np.ptp(dt) > 1e-9 * abs(dt[0]):
        raise ParameterError("el_residual needs uniformly sampled times")
    h = dt[0]
    acc = (q[2:] - 2 * q[1:-1] + q[:-2]) / h ** 2
    interior = float(np.max(np.abs(acc - pot.grad(t[1:-1], q[1:-1]))))
    bnd = abs(p[0] - float(phi_prime(np.array([q[0]]))[0]))
    return interior + float(bnd)


def fenchel_legendre(xs, n: int, t: float) -> float:
    """Legendre transform of Lambda(l) = (t / 2^(n+1)) sum l_j^2."""
    xs = np.asarray(xs, dtype=float)
    if xs.shape != (2 ** n,):
        raise ParameterError(f"expected {2 ** n} coordinates, got {xs.shape}")
    return float(2 ** n / (2.0 * t) * np.sum(xs ** 2))


# --------------------------------------------------------------------------
# minimization


class _Reduced:
    """Action restricted to {xi(t) = x}.

    With a free left end the start point is eliminated (start = x - h sum
    lambda), which keeps every variable a slope and the problem well
    conditioned. With a pinned start the last slope is eliminated instead.
    """

    def __init__(self, t, x, n, phi, phi_prime, pot, m, fixed_start=None):
        self.t, self.x, self.n = t, x, n
        self.fixed_start = fixed_start
        self.N = 2 ** n
        self.h = t / self.N
        self.phi, self.phi_prime, self.pot, self.m = phi, phi_prime, pot, m

    def path(self, z) -> PiecewisePath:
        if self.fixed_start is None:
            return PiecewisePath(self.t, self.n, self.x - self.h * np.sum(z), z)
        last = (self.x - self.fixed_start) / self.h - np.sum(z)
        return PiecewisePath(self.t, self.n, self.fixed_start, np.append(z, last))

    def pack(self, path: PiecewisePath):
        if self.fixed_start is not None:
            return np.array(path.slopes[:-1])
        return np.array(path.slopes)

    def fun_grad(self, z):
        path = self.path(z)
        v, ix, jx = _segment_integrals(path, self.pot, self.m)
        h = self.h
        lam = path.slopes
        val = 0.5 * h * np.sum(lam ** 2) + np.sum(v) + float(self.phi(np.array([path.start]))[0])
        tail = np.concatenate((np.cumsum(ix[::-1])[::-1][1:], [0.0]))
        g = h * lam + jx + h * tail
        if self.fixed_start is not None:
            return float(val), g[:-1] - g[-1]
        g_start = float(self.phi_prime(np.array([path.start]))[0]) + np.sum(ix)
        return float(val), g - h * g_start


def _descend(red: _Reduced, z0, method, gtol, max_iter):
    """Run one local minimization; returns (z, converged, gradient norm)."""
    if method == "gd":
        return _armijo_descent(red, z0, gtol, max_iter)
    res = optimize.minimize(red.fun_grad, z0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": gtol * 1e-2,
                                     "ftol": 1e-15, "maxcor": 30})
    gn = float(np.linalg.norm(red.fun_grad(res.x)[1]))
    return res.x, gn < gtol, gn


def _armijo_descent(red: _Reduced, z, gtol, max_iter, c=1e-4, shrink=0.5):
    """Steepest descent with Armijo backtracking; the trial step is the
    Barzilai-Borwein length from the previous iterate."""
    f, g = red.fun_grad(z)
    step = 1.0
    for _ in range(max_iter):
        gn2 = float(g @ g)
        if gn2 < gtol ** 2:
            return z, True, gn2 ** 0.5
        while True:
            z_new = z - step * g
            f_new, g_new = red.fun_grad(z_new)
            if f_new <= f - c * step * gn2 or step < 1e-16:
                break
            step *= shrink
        dz, dg = z_new - z, g_new - g
        curv = float(dz @ dg)
        step = float(dz @ dz) / curv if curv > 0 else 2.0 * step
        z, f, g = z_new, f_new, g_new
    gn = float(np.linalg.norm(g))
    return z, gn < gtol, gn


@dataclass
class MinimizationResult:
    best: PiecewisePath
    report: ActionReport
    values: list = field(default_factory=list)
    paths: list = field(default_factory=list)


def minimize_action(t: float, x: float, n: int, phi, phi_prime, pot: Potential,
                    restarts: int = 32, seed: int = 0, *, method: str = "lbfgs",
                    gtol: float = 1e-8, max_iter: int = 10_000, coarse_level: int = 2,
                    init=None, fixed_start: float | None = None, m: int = SEGMENT_NODES,
                    full_output: bool = False):
    """Minimize the action over S_n subject to xi(t) = x.

    Each restart draws slopes ~ U[-3, 3] and a start ~ U[0, 2pi) at a coarse
    level, then minimizes level by level up to ``n``, refining the previous
    optimum (S_k is contained in S_{k+1}, so values never increase along the
    ladder). Extra starting paths can be passed through ``init``.

    With ``fixed_start`` the left end is pinned as well (both endpoints
    constrained); ``phi`` then only contributes a constant.
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    rng = np.random.default_rng(seed)
    lo = min(coarse_level, n)
    starts = []
    for _ in range(restarts):
        q0 = rng.uniform(0, 2 * np.pi) if fixed_start is None else fixed_start
        starts.append(PiecewisePath(t, lo, q0, rng.uniform(-3, 3, 2 ** lo)))
    for p in init or []:
        starts.append(p)

    trace = []
    results = []
    for p0 in starts:
        path = p0
        while path.level < lo:
            path = path.refine()
        ok = False
        gn = np.inf
        while True:
            red = _Reduced(t, x, path.level, phi, phi_prime, pot, m, fixed_start)
            z0 = red.pack(_with_endpoint(path, x))
            z, ok, gn = _descend(red, z0, method, gtol, max_iter)
            path = red.path(z)
            if path.level >= n:
                break
            path = path.refine()
        val = red.fun_grad(z)[0]
        trace.append((val, gn, ok))
        if ok:
            results.append((val, path))
    if not results:
        raise OptimizationError(f"no restart converged (gtol={gtol})", trace)
    results.sort(key=lambda r: r[0])
    best = results[0][1]
    report = action_eval(best, phi, pot, phi_prime if fixed_start is None else None, m)
    if fixed_start is not None:
        report = ActionReport(report.value, report.kinetic, report.potential, report.boundary,
                              interior_el_residual(best, pot))
    if report.el_residual >= 1e-3:
        warnings.warn(f"minimizer EL residual {report.el_residual:.2e} >= 1e-3")
    if full_output:
        return MinimizationResult(best, report, [r[0] for r in results], [r[1] for r in results])
    return best, report


def _with_endpoint(path: PiecewisePath, x: float) -> PiecewisePath:
    """Shift the last slope so the path ends at ``x``."""
    if abs(path.end - x) < 1e-15:
        return path
    lam = np.array(path.slopes)
    lam[-1] += (x - path.end) / path.h
    return PiecewisePath(path.t_end, path.level, path.start, lam)


def terminal_velocity(path: PiecewisePath, pot: Potential) -> float:
    """Second-order estimate of xi'(t): the last slope is the mean velocity
    over the final segment, so add half a segment of acceleration."""
    return float(path.slopes[-1] + 0.5 * path.h * pot.grad(path.t_end, path.end))


def value_gradient_identity(t: float, x: float, dx: float, n: int, phi, phi_prime,
                            pot: Potential, restarts: int = 8, seed: int = 0,
                            gtol: float = 1e-8, fixed_start: float | None = None):
    """Compare d/dx min A (central difference) with the terminal velocity of
    the minimizer at (t, x).

    Returns a dict with ``lhs``, ``rhs`` and ``ambiguous``. The minimizers
    at x +- dx are warm-started from the one at x.
    """
    res = minimize_action(t, x, n, phi, phi_prime, pot, restarts, seed, gtol=gtol,
                          fixed_start=fixed_start, full_output=True)
    best = res.best
    ambiguous = False
    for val, p in zip(res.values[1:], res.paths[1:]):
        if val - res.values[0] < 1e-6 and abs(p.start - best.start) > 1e-3:
            ambiguous = True
    vals = []
    for sign in (+1, -1):
        _, rep = minimize_action(t, x + sign * dx, n, phi, phi_prime, pot, restarts=0,
                                 gtol=gtol, init=[_with_endpoint(best, x + sign * dx)],
                                 fixed_start=fixed_start)
        vals.append(rep.value)
    lhs = (vals[0] - vals[1]) / (2 * dx)
    rhs = terminal_velocity(best, pot)
    return {"lhs": float(lhs), "rhs": rhs, "ambiguous": ambiguous,
            "value": res.report.value, "path": best}


# --------------------------------------------------------------------------
# Laplace / Varadhan checks


def discrete_path_expectation(t: float, x: float, n: int, eps: float, phi, pot: Potential,
                              n_paths: int = 200_000, seed: int = 0, m: int = 16,
                              block: int = 50_000):
    """Monte-Carlo estimate of E[exp(-(phi(Y(t)) + int_0^t V(t-s, Y(s)) ds)/eps)]
    for the polygonal walk Y from x with 2**n N(0, eps t / 2**n) increments.

    Returns (-eps log U, its delta-method standard error, relative error of U).
    The exponent is shifted by its sample minimum before exponentiating.
    """
    N = 2 ** n
    h = t / N
    w = simpson_weights(m, h / m)
    frac = np.linspace(0.0, 1.0, m + 1)
    expo = []
    for b, start in enumerate(range(0, n_paths, block)):
        rng = np.random.default_rng(seed + b)
        k = min(block, n_paths - start)
        z = rng.normal(0.0, np.sqrt(eps * h), size=(k, N))
        nodes = x + np.concatenate((np.zeros((k, 1)), np.cumsum(z, axis=1)), axis=1)
        s = (np.arange(N)[:, None] + frac[None, :]) * h
        y = nodes[:, :-1, None] + z[:, :, None] * frac[None, None, :]
        integ = (pot.value(t - s[None], y) @ w).sum(axis=1)
        expo.append(-(phi(nodes[:, -1]) + integ) / eps)
    e = np.concatenate(expo)
    shift = e.max()
    vals = np.exp(e - shift)
    mean = vals.mean()
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    est = -eps * (np.log(mean) + shift)
    return float(est), float(eps * se / mean), float(se / mean)


def laplace_limit_check(t: float, x: float, n: int, eps_list, phi, phi_prime, pot: Potential,
                        n_paths: int = 200_000, seed: int = 0, restarts: int = 8):
    """-eps log U^(eps, n) against inf over S_n of the action, per eps."""
    if n > 4:
        raise ParameterError("laplace_limit_check is capped at n <= 4")
    _, rep = minimize_action(t, x, n, phi, phi_prime, pot, restarts, seed)
    rows = []
    for eps in eps_list:
        est, se, rel = discrete_path_expectation(t, x, n, eps, phi, pot, n_paths, seed)
        rows.append({"eps": eps, "neg_eps_log_u": est, "std_error": se,
                     "inf_action": rep.value, "gap": abs(est - rep.value),
                     "precision_warning": rel > 0.1})
    gaps = [r["gap"] for r in rows]
    return {"t": t, "x": x, "n": n, "rows": rows,
            "monotone": bool(all(a > b for a, b in zip(gaps, gaps[1:])))}


def gaussian_tail_check(n: int, t: float, eps: float, rho: float, n_samples: int = 400_000,
                        seed: int = 0):
    """P(|Z_j| > rho) for Z_j ~ N(0, eps t / 2^n) against the large-deviation
    rate exp(-2^n rho^2 / (2 eps t)). Returns (eps log P, -rate)."""
    from scipy.special import erfc

    sd = np.sqrt(eps * t / 2 ** n)
    z = np.random.default_rng(seed).normal(0.0, sd, n_samples)
    p_mc = float(np.mean(np.abs(z) > rho))
    p_exact = float(erfc(rho / (sd * np.sqrt(2))))
    return {"p_mc": p_mc, "p_exact": p_exact,
            "eps_log_p": eps * np.log(p_exact),
            "rate": -fenchel_legendre(np.r_[rho, np.zeros(2 ** n - 1)], n, t)}


def varadhan_check(t: float, x: float, eps_list, phi, phi_prime, pot: Potential,
                   n_levels=(8,), grid=None, restarts: int = 16, seed: int = 0):
    """-eps log U^eps(t, x) from the deterministic propagator against
    min over S_n of the action, for every eps and every level n."""
    from .field import SpatialGrid
    from .viscous import neg_eps_log_u

    eps_list = [float(e) for e in eps_list]
    if any(e < 0.05 for e in eps_list):
        raise ParameterError("eps below 0.05 is outside the viscous solver range")
    grid = grid or SpatialGrid(256)
    mins = {}
    for n in n_levels:
        _, rep = minimize_action(t, x, n, phi, phi_prime, pot, restarts, seed)
        mins[int(n)] = rep.value
    rows = []
    for eps in eps_list:
        val = neg_eps_log_u(eps, phi, pot, t, x, grid)
        for n, a in mins.items():
            rows.append({"eps": eps, "n": n, "neg_eps_log_u": val, "min_action": a,
                         "gap": abs(val - a)})
    finest = max(mins)
    gaps = [r["gap"] for r in rows if r["n"] == finest]
    levels = sorted(mins)
    return {"t": t, "x": x, "rows": rows, "min_action": mins,
            "gaps_finest": gaps,
            "monotone_in_eps": bool(all(a > b for a, b in zip(gaps, gaps[1:]))),
            "nested_in_n": bool(all(mins[b] <= mins[a] + 1e-9 for a, b in zip(levels, levels[1:])))}
