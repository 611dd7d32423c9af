"""Entropy solutions of u_t + (u^2/2)_x = V_x(t, x), shocks and characteristics.

Cell averages live at the nodes x_j = j dx of a SpatialGrid; the cell around
x_j spans [x_j - dx/2, x_j + dx/2].
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .field import TWO_PI, ParameterError, PeriodicField, Potential, SpatialGrid, Trajectory
from .viscous import l2_bound

log = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InadmissibleJumpError(ValueError):
    pass


class AmbiguityError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True, eq=False)
class InviscidRun:
    """Output slices of a finite-volume run.

    With ``t_period`` set, the slices cover exactly one period (first and
    last slice describe the same instant) and the run is extended to all
    times by periodicity.
    """

    grid: SpatialGrid
    times: np.ndarray
    slices: list
    pot: Potential
    scheme: str = "finite-volume"
    t_period: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def array(self) -> np.ndarray:
        return np.array([s.values for s in self.slices])

    @property
    def dt_out(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def periodic(self) -> bool:
        return self.t_period > 0

    def u_at(self, t, x):
        return kernels._fallback._interp(self.array, self.times[0], self.dt_out, self.t_period,
                                         self.grid.dx, np.asarray(t, float), np.asarray(x, float))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u"])
            for t, s in zip(self.times, self.slices):
                for x, u in zip(self.grid.nodes, s.values):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(u))])


def divergence_limit(pot: Potential, u0) -> float:
    # the L2 bound vanishes for V = 0, so the initial amplitude also counts
    return 10.0 * max(l2_bound(pot.K1, pot.K2), float(np.max(np.abs(u0))), 1.0)


def solve_inviscid(u0: PeriodicField, pot: Potential, t_end: float, grid: SpatialGrid | None = None,
                   cfl: float = 0.5, dt_out: float | None = None, t0: float = 0.0,
                   n_out: int | None = None) -> InviscidRun:
    """Godunov finite volumes with Strang-split source, slices every ``dt_out``."""
    grid = grid or u0.grid
    if not 0 < cfl < 1:
        raise ParameterError("cfl must lie in (0, 1)")
    if not t_end > t0:
        raise ParameterError("t_end must exceed t0")
    if n_out is None:
        dt_out = dt_out or min(0.05, t_end - t0)
        n_out = max(1, int(round((t_end - t0) / dt_out)))
    times = t0 + (t_end - t0) * np.arange(n_out + 1) / n_out
    limit = divergence_limit(pot, u0.values)
    u = np.array(u0.values, dtype=float)
    slices = [u0]
    steps = 0
    for a, b in zip(times[:-1], times[1:]):
        u, k = kernels.fv_advance(pot, u, a, b, grid.dx, cfl)
        steps += k
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > limit:
            raise DivergenceError(f"max|u| exceeded {limit:.3g} by t={b:.4f}", b)
        slices.append(PeriodicField(grid, u))
    return InviscidRun(grid, times, slices, pot, meta={"steps": steps, "cfl": cfl})


def shock_speed(u_left: float, u_right: float) -> float:
    if u_left < u_right:
        raise InadmissibleJumpError(f"upward jump {u_left} -> {u_right} is not admissible")
    return 0.5 * (u_left + u_right)


def derivative_upper_bound(phi_xx_sup: float, pot: Potential, t: float) -> float:
    if t < 0:
        raise ParameterError("t must be non-negative")
    return float(phi_xx_sup + t * pot.Kxx)


# --------------------------------------------------------------------------
# shocks


@dataclass(frozen=True, eq=False)
class ShockRecord:
    birth: float
    times: np.ndarray
    theta: np.ndarray
    u_left: np.ndarray
    u_right: np.ndarray

    @property
    def speed_rh(self) -> np.ndarray:
        return 0.5 * (self.u_left + self.u_right)

    @property
    def speed_measured(self) -> np.ndarray:
        if len(self.times) < 2:
            return np.full(len(self.times), np.nan)
        return np.gradient(self.theta, self.times)

    def rh_defect(self) -> float:
        """Largest |measured speed - mean of traces| over the record."""
        if len(self.times) < 2:
            return 0.0
        return float(np.max(np.abs(self.speed_measured - self.speed_rh)))

    def position(self, t):
        return np.interp(t, self.times, self.theta)


def _detect(values, dx, threshold):
    """Interfaces where one-cell increments fall below -threshold.

    Returns (theta, u_left, u_right) per interface; theta is where the
    linear interpolant crosses the mean of the traces.
    """
    n = values.size
    d = np.roll(values, -1) - values
    flag = d < -threshold
    if not flag.any():
        return []
    if flag.all():
        return []
    # rotate so a run never straddles the array end
    start = int(np.flatnonzero(~flag)[0])
    out = []
    j = 0
    while j < n:
        k = (start + j) % n
        if not flag[k]:
            j += 1
            continue
        first = k
        length = 0
        while j < n and flag[(start + j) % n]:
            length += 1
            j += 1
        last = (first + length - 1) % n
        left = first            # cell before the layer
        right = (last + 1) % n  # cell after the layer
        xl = first * dx
        ul = values[(left - 2) % n] + 2 * (values[(left - 2) % n] - values[(left - 3) % n])
        ur = values[(right + 2) % n] - 2 * (values[(right + 3) % n] - values[(right + 2) % n])
        # fall back to plain two-cell values if extrapolation turns the jump upward
        if ul < ur:
            ul, ur = values[(left - 2) % n], values[(right + 2) % n]
        mid = 0.5 * (ul + ur)
        # crossing of the mid value inside the layer
        theta = xl + 0.5 * length * dx
        for m in range(length + 1):
            a = values[(first + m) % n]
            b = values[(first + m + 1) % n]
            if a >= mid >= b and a > b:
                theta = xl + (m + (a - mid) / (a - b)) * dx
                break
        out.append((theta, ul, ur))
    return out


def default_threshold(run: InviscidRun, t: float) -> float:
    u0 = run.slices[0].values
    sup2 = max(0.0, float(np.max((np.roll(u0, -1) - u0) / run.grid.dx)))
    horizon = min(t - run.times[0], TWO_PI)
    return 5.0 * derivative_upper_bound(sup2, run.pot, horizon) * run.grid.dx


def track_shocks(run: InviscidRun, threshold: float | None = None) -> list:
    """Detect shocks in every slice and link them across slices."""
    dx = run.grid.dx
    active = []   # [times, thetas, uls, urs]
    done = []
    for t, s in zip(run.times, run.slices):
        thr = default_threshold(run, t) if threshold is None else threshold
        found = _detect(np.asarray(s.values), dx, thr)
        used = set()
        still = []
        for rec in active:
            prev = rec[1][-1]
            speed = 0.5 * (rec[2][-1] + rec[3][-1])
            guess = prev + speed * (t - rec[0][-1])
            best, bd = None, 3 * dx + 0.5 * abs(speed) * (t - rec[0][-1])
            for i, (th, ul, ur) in enumerate(found):
                if i in used:
                    continue
                dist = abs((th - guess + np.pi) % TWO_PI - np.pi)
                if dist <= bd:
                    best, bd = i, dist
            if best is None:
                done.append(rec)
                continue
            used.add(best)
            th, ul, ur = found[best]
            # unwrap onto the cover
            th = guess + ((th - guess + np.pi) % TWO_PI - np.pi)
            rec[0].append(t)
            rec[1].append(th)
            rec[2].append(ul)
            rec[3].append(ur)
            still.append(rec)
        for i, (th, ul, ur) in enumerate(found):
            if i not in used:
                still.append([[t], [th], [ul], [ur]])
        active = still
    done.extend(active)
    records = [ShockRecord(r[0][0], np.array(r[0]), np.array(r[1]), np.array(r[2]), np.array(r[3]))
               for r in done]
    records.sort(key=lambda r: (r.birth, r.theta[0]))
    return records


def write_shocks_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "theta", "u_left", "u_right", "speed_measured", "speed_rh"])
        for r in records:
            for row in zip(r.times, r.theta, r.u_left, r.u_right, r.speed_measured, r.speed_rh):
                w.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# characteristics


def _steps_for(span, ds):
    return max(1, int(np.ceil(abs(span) / ds - 1e-9)))


def forward_characteristic(run: InviscidRun, x0: float, t_start: float | None = None,
                           t_end: float | None = None, ds: float = 0.01,
                           shocks: list | None = None) -> Trajectory:
    """RK4 for theta' = u(t, theta); stops at the first tracked shock met."""
    t_start = run.times[0] if t_start is None else t_start
    t_end = run.times[-1] if t_end is None else t_end
    n = _steps_for(t_end - t_start, ds)
    h = (t_end - t_start) / n
    theta = kernels.trace(run.array, run.times[0], run.dt_out, run.t_period, run.grid.dx,
                          np.array([x0], float), t_start, 1.0, h, n)[:, 0]
    times = t_start + h * np.arange(n + 1)
    if shocks is None:
        shocks = track_shocks(run)
    absorbed = None
    cut = n + 1
    for rec in shocks:
        if len(rec.times) < 2:
            continue
        inside = (times >= rec.times[0]) & (times <= rec.times[-1])
        if not inside.any():
            continue
        gap = np.abs((theta - rec.position(times) + np.pi) % TWO_PI - np.pi)
        hit = np.flatnonzero(inside & (gap < 1.5 * run.grid.dx))
        if hit.size and hit[0] < cut and hit[0] > 0:
            cut = int(hit[0]) + 1
            absorbed = float(times[hit[0]])
    times, theta = times[:cut], theta[:cut]
    if times.size < 2:
        times = np.array([t_start, t_start + h])
        theta = np.array([x0, x0])
    vel = run.u_at(times, theta)
    return Trajectory(times, theta, vel, absorbed_at=absorbed)


def backward_flow(run: InviscidRun, t_start: float, x: float, horizon: float,
                  ds: float = 0.01) -> Trajectory:
    """theta~' (s) = -u(t_start - s, theta~) for s in [0, horizon].

    The trajectory's ``times`` are the backward times s; the absolute time
    is ``t_start - s``. Velocities are the forward ones, u(t_start - s, .).
    """
    if not run.periodic and t_start - horizon < run.times[0] - 1e-12:
        raise ParameterError("run does not reach back far enough and is not periodic")
    th = _backward_many(run, t_start, np.array([x], float), horizon, ds)[:, 0]
    s = np.linspace(0.0, horizon, th.size)
    vel = run.u_at(t_start - s, th)
    return Trajectory(s, th, vel, meta={"t_start": t_start})


def _backward_many(run, t_start, xs, horizon, ds=0.01):
    n = _steps_for(horizon, ds)
    return kernels.trace(run.array, run.times[0], run.dt_out, run.t_period, run.grid.dx,
                         np.asarray(xs, float), t_start, -1.0, horizon / n, n)


def _circ(d):
    return np.abs((np.asarray(d) + np.pi) % TWO_PI - np.pi)


def sync_measure(run: InviscidRun, x: float, y: float, k: int = 1, horizon: float = 40 * np.pi,
                 t_start: float = 0.0, ds: float = 0.01) -> np.ndarray:
    """|k (Z(x) - Z(y))| mod 2pi sampled at whole periods of backward time."""
    if k < 1:
        raise ParameterError("k must be a positive integer")
    th = _backward_many(run, t_start, [x, y], horizon, ds)
    s = np.linspace(0.0, horizon, th.shape[0])
    period = run.t_period or TWO_PI
    idx = [int(np.argmin(np.abs(s - m * period))) for m in range(int(horizon / period + 1e-9) + 1)]
    return _circ(k * (th[idx, 0] - th[idx, 1]))


def reference_branches(tau):
    """Positions of the two reference orbits at absolute time tau."""
    return tau - np.sin(tau), np.pi - tau - np.sin(tau)


@dataclass
class AttractorResult:
    kind: str
    deviation: float
    deviations: dict
    per_sample: list
    measured: dict

    def to_dict(self):
        return {"type": self.kind, "deviation": self.deviation, "deviations": self.deviations,
                "per_sample": self.per_sample, "measured": self.measured}


def attractor_classification(run: InviscidRun, samples: int = 32, horizon: float = 40 * np.pi,
                             t_start: float = 0.0, ds: float = 0.01, seed: int = 0,
                             strict: bool = True, xs=None) -> AttractorResult:
    """Compare long backward characteristics against the two reference orbits.

    Deviations are sup over the last quarter of the horizon of the circle
    distance to each reference orbit. Also reports the orbit the paths
    actually settle on: its position mod 2pi and forward velocity at
    absolute times that are multiples of the period, and its winding.
    Start points are random unless given in ``xs``.
    """
    if samples < 1:
        raise ParameterError("samples must be positive")
    if xs is None:
        rng = np.random.default_rng(seed)
        xs = np.sort(rng.uniform(0.0, TWO_PI, samples)) if samples > 1 else np.array([np.pi / 3])
    xs = np.asarray(xs, dtype=float)
    samples = xs.size
    th = _backward_many(run, t_start, xs, horizon, ds)
    s = np.linspace(0.0, horizon, th.shape[0])
    tau = t_start - s
    tail = s >= 0.75 * horizon
    ra, rb = reference_branches(tau[tail])
    dev_a = _circ(th[tail] - ra[:, None]).max(axis=0)
    dev_b = _circ(th[tail] - rb[:, None]).max(axis=0)
    kinds = np.where(dev_a <= dev_b, "TypeA", "TypeB")
    per = [{"x": float(x), "type": str(k), "dev_a": float(a), "dev_b": float(b)}
           for x, k, a, b in zip(xs, kinds, dev_a, dev_b)]

    # the orbit actually reached: sample at the last absolute time = 0 mod period
    period = run.t_period or TWO_PI
    m_last = np.floor((t_start - 0.75 * horizon) / period) * period  # latest multiple in the tail
    m_prev = m_last - period
    i1 = int(np.argmin(np.abs(tau - m_last)))
    i0 = int(np.argmin(np.abs(tau - m_prev)))
    q = th[i1]
    p = run.u_at(np.full(samples, tau[i1]), q)
    winding = np.round((th[i1] - th[i0]) / TWO_PI).astype(int)
    spread = float(_circ(q - q[0]).max())
    measured = {"q": float(np.mod(q[0], TWO_PI)), "p": float(p[0]), "winding": int(winding[0]),
                "q_spread": spread, "p_spread": float(np.ptp(p)),
                "uniform_winding": bool(np.all(winding == winding[0]))}
    deviations = {"TypeA": float(dev_a.max()), "TypeB": float(dev_b.max())}
    kind = str(kinds[0])
    res = AttractorResult(kind, deviations[kind], deviations, per, measured)
    if strict and not np.all(kinds == kinds[0]):
        raise AmbiguityError("samples disagree on the attracting branch; lengthen the horizon", res)
    return res


def max_difference_quotient(run: InviscidRun) -> np.ndarray:
    """Largest one-cell upward difference quotient per slice."""
    dx = run.grid.dx
    out = []
    for s in run.slices:
        d = (np.roll(s.values, -1) - s.values) / dx
        out.append(float(d.max()))
    return np.array(out)
