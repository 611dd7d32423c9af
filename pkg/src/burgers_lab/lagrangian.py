"""Euler-Lagrange trajectories q'' = V_x(t, q): integration, shooting, and
the time-2pi period map with its fixed-point scan."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .field import TWO_PI, ParameterError, Potential, Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (np.isfinite(self.q) and np.isfinite(self.p)):
            raise ParameterError("phase point must be finite")

    def reduced(self) -> "PhasePoint":
        return PhasePoint(float(np.mod(self.q, TWO_PI)), self.p)


@dataclass(frozen=True)
class PoincareFixedPoint:
    """Fixed point of the period map modulo 2pi.

    ``point.q`` lies in [0, 2pi); after ``periods`` periods the position has
    advanced by ``2pi * winding``.
    """

    point: PhasePoint
    winding: int
    residual: float
    periods: int = 1
    trace: float = float("nan")

    @property
    def reversed_point(self) -> PhasePoint:
        """Same orbit in reversed time, X(s) = Y(-s) with Y = q - sin t + t.

        X(0) = q and X'(0) = -(p - cos 0 + 1) = -p.
        """
        return PhasePoint(self.point.q, -self.point.p)

    @property
    def kind(self) -> str:
        if not np.isfinite(self.trace):
            return "unknown"
        if abs(self.trace) < 2.0 - 1e-9:
            return "elliptic"
        if abs(self.trace) > 2.0 + 1e-9:
            return "hyperbolic"
        return "parabolic"


def integrate_el(start: PhasePoint, t0: float, t1: float, pot: Potential,
                 dt: float = 1e-3) -> Trajectory:
    """Fixed-step RK4 from (q, p) at ``t0`` to ``t1`` (either direction)."""
    if t1 == t0:
        raise ParameterError("t1 must differ from t0")
    nsteps = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / nsteps
    t, q, p = kernels.el_path(pot, start.q, start.p, t0, h, nsteps)
    t[-1] = t1
    return Trajectory(t, q, p)


def flow(pot: Potential, q, p, t0: float, t1: float, dt: float = 1e-3, tangent=False):
    """Vectorized endpoint map of the EL flow (no path recording)."""
    nsteps = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9)))
    return kernels.el_flow(pot, q, p, t0, (t1 - t0) / nsteps, nsteps, tangent)


def poincare_map(point: PhasePoint, pot: Potential, dt: float = 1e-3) -> PhasePoint:
    q, p = flow(pot, [point.q], [point.p], 0.0, TWO_PI, dt)
    return PhasePoint(float(q[0]), float(p[0]))


def shoot_bvp(t: float, x: float, phi_prime, pot: Potential, seeds, dt: float = 1e-3,
              tol: float = 1e-9, max_iter: int = 50, full_output: bool = False):
    """Solve xi'' = V_x(s, xi), xi(t) = x, xi'(0) = phi'(xi(0)) by shooting.

    Newton runs on the start point q0 with a finite-difference slope.
    Returns the converged, deduplicated trajectories; with ``full_output``
    also the final residual of every seed.
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    q0 = np.array(seeds, dtype=float).ravel()
    if q0.size == 0:
        raise ParameterError("at least one seed is required")
    fd = 1e-6
    res = np.full(q0.size, np.inf)
    active = np.ones(q0.size, bool)

    def endpoint(qs):
        qe, _ = flow(pot, qs, phi_prime(qs), 0.0, t, dt)
        return qe - x

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        qs = q0[idx]
        both = endpoint(np.concatenate([qs, qs + fd]))
        g, gp = both[: idx.size], both[idx.size:]
        res[idx] = np.abs(g)
        slope = (gp - g) / fd
        done = np.abs(g) < tol
        bad = ~np.isfinite(slope) | (np.abs(slope) < 1e-14)
        step = np.where(bad, 0.0, g / np.where(bad, 1.0, slope))
        step = np.clip(step, -1.0, 1.0)
        q0[idx] = np.where(done, qs, qs - step)
        active[idx[done | bad]] = False
    idx = np.flatnonzero(active)
    if idx.size:
        res[idx] = np.abs(endpoint(q0[idx]))

    found = []
    for q in q0[res < tol]:
        if not any(abs(q - f) < 1e-6 for f in found):
            found.append(float(q))
    trajs = [integrate_el(PhasePoint(q, float(phi_prime(np.array([q]))[0])), 0.0, t, pot, dt)
             for q in sorted(found)]
    if not trajs:
        log.info("shoot_bvp: no seed converged; best residual %.3e", np.min(res))
    if full_output:
        return trajs, res
    return trajs


@dataclass
class ScanResult:
    fixed_points: list
    degenerate: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.fixed_points)

    def __iter__(self):
        return iter(self.fixed_points)


def _newton_batch(pot, q, p, w, periods, dt, iters, tol):
    """Vectorized Newton on P^periods(q, p) - (q + 2pi w, p)."""
    span = TWO_PI * periods
    q = q.copy()
    p = p.copy()
    active = np.ones(q.size, bool)
    resid = np.full(q.size, np.inf)
    singular = np.zeros(q.size, bool)
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Q, P, a, b, c, d = flow(pot, q[idx], p[idx], 0.0, span, dt, tangent=True)
        f1 = Q - q[idx] - TWO_PI * w
        f2 = P - p[idx]
        r = np.hypot(f1, f2)
        resid[idx] = r
        j11, j12, j21, j22 = a - 1.0, b, c, d - 1.0
        det = j11 * j22 - j12 * j21
        sing = np.abs(det) < 1e-10
        singular[idx] |= sing
        with np.errstate(divide="ignore", invalid="ignore"):
            dq = np.where(sing, 0.0, (j22 * f1 - j12 * f2) / det)
            dp = np.where(sing, 0.0, (-j21 * f1 + j11 * f2) / det)
        # minimum-norm step where the Jacobian is singular
        if sing.any():
            for k in np.flatnonzero(sing):
                J = np.array([[j11[k], j12[k]], [j21[k], j22[k]]])
                step = np.linalg.lstsq(J, np.array([f1[k], f2[k]]), rcond=1e-12)[0]
                dq[k], dp[k] = step
        m = np.maximum(np.abs(dq), np.abs(dp))
        scale = np.minimum(1.0, 1.0 / np.maximum(m, 1e-300))
        conv = r < tol
        q[idx] = np.where(conv, q[idx], q[idx] - scale * dq)
        p[idx] = np.where(conv, p[idx], p[idx] - scale * dp)
        lost = ~np.isfinite(q[idx]) | ~np.isfinite(p[idx]) | (np.abs(p[idx]) > 50)
        active[idx[conv | lost]] = False
        resid[idx[lost]] = np.inf
    return q, p, resid, singular


def find_periodic_orbits(pot: Potential, q_seeds: int = 64, p_min: float = -4.0,
                         p_max: float = 4.0, p_seeds: int = 64, periods: int = 1,
                         tol: float = 1e-9, dt: float = 1e-3, scan_dt: float = 1e-2,
                         max_winding: int | None = None) -> ScanResult:
    """Scan a seed grid for fixed points of the ``periods``-fold period map.

    Every seed is tried against every winding |w| <= 3 * periods. A cheap
    Newton pass at ``scan_dt`` is followed by polishing at ``dt``.
    """
    if periods not in (1, 2, 3, 4):
        raise ParameterError("periods must be in 1..4")
    if q_seeds < 1 or p_seeds < 1:
        raise ParameterError("seed grid must be nonempty")
    wmax = 3 * periods if max_winding is None else max_winding
    qg, pg = np.meshgrid(np.linspace(0, TWO_PI, q_seeds, endpoint=False),
                         np.linspace(p_min, p_max, p_seeds))
    qg, pg = qg.ravel(), pg.ravel()
    diag = {"seeds": int(qg.size), "windings": list(range(-wmax, wmax + 1)),
            "singular_seeds": 0, "candidates": 0, "polish_failures": 0}

    candidates = []
    for w in range(-wmax, wmax + 1):
        q, p, r, sing = _newton_batch(pot, qg, pg, w, periods, scan_dt, 30, 1e-10)
        diag["singular_seeds"] += int(np.sum(sing & ~(r < 1e-6)))
        for qi, pi_ in zip(q[r < 1e-6], p[r < 1e-6]):
            qr = float(np.mod(qi, TWO_PI))
            if not any(c[2] == w and _close(qr, pi_, c[0], c[1], 1e-4) for c in candidates):
                candidates.append((qr, float(pi_), w))
    diag["candidates"] = len(candidates)

    fixed = []
    degenerate = False
    for qc, pc, w in candidates:
        q, p, r, sing = _newton_batch(pot, np.array([qc]), np.array([pc]), w, periods, dt, 20, tol)
        if not r[0] < tol:
            diag["polish_failures"] += 1
            continue
        Q, P, a, b, c, d = flow(pot, q, p, 0.0, TWO_PI * periods, dt, tangent=True)
        tr = float(a[0] + d[0])
        det = (a[0] - 1) * (d[0] - 1) - b[0] * c[0]
        if abs(det) < 1e-8:
            degenerate = True
        qr = float(np.mod(q[0], TWO_PI))
        if qr > TWO_PI - 1e-4:
            qr -= TWO_PI
        if any(f.winding == w and _close(qr, p[0], f.point.q, f.point.p, 1e-4) for f in fixed):
            continue
        fixed.append(PoincareFixedPoint(PhasePoint(qr, float(p[0])), w, float(r[0]), periods, tr))
    fixed.sort(key=lambda f: (f.winding, f.point.q, f.point.p))
    return ScanResult(fixed, degenerate, diag)


def _close(q1, p1, q2, p2, radius):
    dq = abs((q1 - q2 + np.pi) % TWO_PI - np.pi)
    return dq < radius and abs(p1 - p2) < radius


def refine_fixed_point(pot: Potential, q: float, p: float, winding: int, periods: int = 1,
                       dt: float = 1e-3, tol: float = 1e-9) -> PoincareFixedPoint | None:
    """Polish an approximate fixed point of the period map by Newton."""
    qs, ps, r, _ = _newton_batch(pot, np.array([q], float), np.array([p], float), winding,
                                 periods, dt, 30, tol)
    if not r[0] < tol:
        return None
    _, _, a, b, c, d = flow(pot, qs, ps, 0.0, TWO_PI * periods, dt, tangent=True)
    qr = float(np.mod(qs[0] + np.pi, TWO_PI) - np.pi)
    return PoincareFixedPoint(PhasePoint(qr, float(ps[0])), winding, float(r[0]), periods,
                              float(a[0] + d[0]))
