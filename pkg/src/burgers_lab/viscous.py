"""Viscous forced Burgers equation

    u_t + (u^2/2)_x = (eps/2) u_xx + V_x(t, x)

solved two ways: through the positive field U with u = -eps (log U)_x, where

    U_t = (eps/2) U_xx - V(t, x) U / eps,   U(0) = exp(-phi/eps),

and by a direct conservative finite-difference scheme. Time runs forward in
V(t, .); the Feynman-Kac average therefore samples V(t - s, x + sqrt(eps) w_s).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .field import (
    TWO_PI,
    ParameterError,
    PeriodicField,
    Potential,
    SpatialGrid,
    l2_norm,
)


class NumericRangeError(ArithmeticError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StepSizeError(ValueError):
    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


def l2_bound(K1: float, K2: float) -> float:
    """A priori bound on ||u(t)|| when ||u(0)|| <= 9 pi."""
    return 6 * np.pi * K2 + np.sqrt(6 * K1 + 6 * np.pi * K2)


def default_dt(eps: float) -> float:
    return min(0.01, eps / 20.0)


def _second_difference(n: int, dx: float) -> np.ndarray:
    d = np.zeros((n, n))
    i = np.arange(n)
    d[i, i] = -2.0
    d[i, (i + 1) % n] = 1.0
    d[i, (i - 1) % n] = 1.0
    return d / dx ** 2


@lru_cache(maxsize=16)
def heat_matrix(n: int, eps: float, dt: float, squarings: int = 12) -> np.ndarray:
    """exp(dt (eps/2) D2) for the periodic centered second difference D2.

    Computed as (I - dt (eps/2) D2 / M)^(-M), M = 2**squarings, by repeated
    squaring. The base is an inverse M-matrix, so every factor and product
    is entrywise positive and no cancellation occurs.
    """
    dx = TWO_PI / n
    a = 0.5 * eps * dt / 2 ** squarings
    base = np.eye(n) - a * _second_difference(n, dx)
    h = linalg.solve(base, np.eye(n), assume_a="pos")
    for _ in range(squarings):
        h = h @ h
    # D2 annihilates constants, so rows sum to one; remove accumulated rounding
    h /= h.sum(axis=1, keepdims=True)
    h.setflags(write=False)
    return h


@dataclass(frozen=True, eq=False)
class PropagatorMatrix:
    """Discrete evolution U(t0) -> U(t1).

    ``entries`` is the kernel: U(t1)_i = exp(log_scale) * dx * sum_j
    entries[i, j] U(t0)_j, so a mass-conserving evolution has rows summing
    to 1/dx.
    """

    eps: float
    t0: float
    t1: float
    entries: np.ndarray
    log_scale: float = 0.0

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def dx(self) -> float:
        return TWO_PI / self.n

    def operator(self) -> np.ndarray:
        """Matrix acting on node values, without the log scale."""
        return self.entries * self.dx

    def apply(self, U):
        return np.exp(self.log_scale) * (self.operator() @ np.asarray(U))

    def compose(self, later: "PropagatorMatrix") -> "PropagatorMatrix":
        """later . self"""
        m = later.operator() @ self.operator()
        s = m.max()
        return PropagatorMatrix(self.eps, self.t0, later.t1, m / s / self.dx,
                                self.log_scale + later.log_scale + np.log(s))

    def dense(self) -> np.ndarray:
        return np.exp(self.log_scale) * self.entries

    # binary round trip: 48-byte header then row-major float64
    _HEADER = struct.Struct("<4sIqdddd")

    def to_bytes(self) -> bytes:
        head = self._HEADER.pack(b"PROP", 1, self.n, self.eps, self.t0, self.t1, self.log_scale)
        return head + np.ascontiguousarray(self.entries, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PropagatorMatrix":
        magic, version, n, eps, t0, t1, ls = cls._HEADER.unpack_from(data)
        if magic != b"PROP" or version != 1:
            raise ValueError("not a propagator dump")
        body = np.frombuffer(data, dtype="<f8", offset=cls._HEADER.size, count=n * n)
        return cls(eps, t0, t1, body.reshape(n, n).astype(float), ls)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _check(eps, t0, t1):
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if not t1 > t0:
        raise ParameterError(f"need t1 > t0, got [{t0}, {t1}]")


def _steps(t0, t1, n_steps, dt):
    if n_steps is None:
        n_steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    return n_steps, (t1 - t0) / n_steps


def build_propagator(pot: Potential, eps: float, t0: float, t1: float, grid: SpatialGrid,
                     n_steps: int | None = None, dt: float | None = None) -> PropagatorMatrix:
    """Strang-split propagator: half potential factor, exact-in-time discrete
    heat step, half potential factor, V frozen at each step midpoint."""
    _check(eps, t0, t1)
    n_steps, h = _steps(t0, t1, n_steps, dt or default_dt(eps))
    x = grid.nodes
    H = heat_matrix(grid.n_points, float(eps), float(h))
    M = np.eye(grid.n_points)
    log_scale = 0.0
    for k in range(n_steps):
        half = np.exp(-0.5 * h * pot.value(t0 + (k + 0.5) * h, x) / eps)
        M = half[:, None] * (H @ (half[:, None] * M))
        s = M.max()
        M /= s
        log_scale += np.log(s)
    return PropagatorMatrix(float(eps), float(t0), float(t1), M / grid.dx, log_scale)


@dataclass(frozen=True, eq=False)
class ViscousRun:
    """Slices of u and of the normalized positive field U.

    ``log_U[k] = log(U_slices[k]) + log_scales[k]`` recovers the unnormalized
    field.
    """

    eps: float
    grid: SpatialGrid
    times: np.ndarray
    u: list
    U: np.ndarray
    log_scales: np.ndarray

    def log_U(self, k: int) -> np.ndarray:
        return np.log(self.U[k]) + self.log_scales[k]

    def slice(self, k: int) -> PeriodicField:
        return self.u[k]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u"])
            for t, u in zip(self.times, self.u):
                for x, v in zip(self.grid.nodes, u.values):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(v))])


def u_from_log(grid: SpatialGrid, eps: float, logU: np.ndarray) -> PeriodicField:
    """u = -eps d/dx log U by centered differences."""
    return PeriodicField(grid, -eps * (np.roll(logU, -1) - np.roll(logU, 1)) / (2 * grid.dx))


def evolve_U(eps, U0_log, pot, t0, t_end, grid, dt=None, save_every=1):
    """Advance log-scaled U; returns times, normalized slices and log scales."""
    _check(eps, t0, t_end)
    n_steps, h = _steps(t0, t_end, None, dt or default_dt(eps))
    x = grid.nodes
    H = heat_matrix(grid.n_points, float(eps), float(h))
    shift = U0_log.max()
    U = np.exp(U0_log - shift)
    scale = shift
    times, slices, scales = [t0], [U.copy()], [scale]
    for k in range(n_steps):
        half = np.exp(-0.5 * h * pot.value(t0 + (k + 0.5) * h, x) / eps)
        U = half * (H @ (half * U))
        s = U.max()
        if not np.isfinite(s) or s <= 0:
            raise NumericRangeError(f"U left the floating-point range at t={t0 + (k + 1) * h:.4f}",
                                    t0 + (k + 1) * h)
        U /= s
        scale += np.log(s)
        if U.min() <= 0.0:
            raise NumericRangeError(f"U underflowed at t={t0 + (k + 1) * h:.4f}", t0 + (k + 1) * h)
        if (k + 1) % save_every == 0 or k + 1 == n_steps:
            times.append(t0 + (k + 1) * h)
            slices.append(U.copy())
            scales.append(scale)
    return np.array(times), np.array(slices), np.array(scales)


def solve_viscous(eps: float, phi: PeriodicField, pot: Potential, t_end: float,
                  grid: SpatialGrid | None = None, dt: float | None = None,
                  save_every: int = 1, t0: float = 0.0) -> ViscousRun:
    """Hopf-Cole route: U(0) = exp(-phi/eps) advanced by Strang steps."""
    grid = grid or phi.grid
    times, U, scales = evolve_U(eps, -np.asarray(phi.values) / eps, pot, t0, t_end, grid,
                                dt, save_every)
    u = [u_from_log(grid, eps, np.log(Uk)) for Uk in U]
    return ViscousRun(float(eps), grid, times, u, U, scales)


# --------------------------------------------------------------------------
# direct scheme


def _face_source(pot, t, grid):
    vr = pot.value(t, grid.nodes + 0.5 * grid.dx)
    return (vr - np.roll(vr, 1)) / grid.dx


def admissible_dt(u, eps, dx) -> float:
    umax = float(np.max(np.abs(u)))
    adv = dx / umax if umax > 0 else np.inf
    return min(adv, dx * dx / eps)


def _rhs(u, eps, pot, t, grid):
    dx = grid.dx
    up = np.roll(u, -1)
    flux = 0.25 * (u * u + up * up) - 0.5 * eps * (up - u) / dx
    return -(flux - np.roll(flux, 1)) / dx + _face_source(pot, t, grid)


def direct_viscous_step(u: PeriodicField, eps: float, pot: Potential, t: float,
                        dt: float) -> PeriodicField:
    """One SSP-RK3 step of the conservative central scheme.

    Raises StepSizeError when dt exceeds min(dx/max|u|, dx^2/eps).
    """
    grid = u.grid
    lim = admissible_dt(u.values, eps, grid.dx)
    if dt > lim * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.3e} exceeds admissible {lim:.3e}", lim)
    v = np.asarray(u.values)
    u1 = v + dt * _rhs(v, eps, pot, t, grid)
    u2 = 0.75 * v + 0.25 * (u1 + dt * _rhs(u1, eps, pot, t + dt, grid))
    u3 = v / 3.0 + 2.0 / 3.0 * (u2 + dt * _rhs(u2, eps, pot, t + 0.5 * dt, grid))
    return PeriodicField(grid, u3)


def solve_viscous_direct(u0: PeriodicField, eps: float, pot: Potential, t_end: float,
                         safety: float = 0.5, t0: float = 0.0) -> PeriodicField:
    u, t = u0, t0
    while t < t_end - 1e-14:
        dt = min(safety * admissible_dt(u.values, eps, u.grid.dx), t_end - t)
        u = direct_viscous_step(u, eps, pot, t, dt)
        t += dt
    return u


# --------------------------------------------------------------------------
# Feynman-Kac


def _as_function(phi):
    if isinstance(phi, PeriodicField):
        return phi.interp
    return phi


def feynman_kac_estimate(eps: float, phi, pot: Potential, t: float, x: float,
                         n_paths: int = 20_000, n_steps: int = 200, seed: int = 0,
                         block: int = 10_000):
    """Monte-Carlo value of U(t, x) and its standard error.

    Path blocks use seeds ``seed + block_index``. The time integral along
    each path is the trapezoid rule on the walk nodes.
    """
    if not eps > 0 or not t > 0:
        raise ParameterError("eps and t must be positive")
    f = _as_function(phi)
    h = t / n_steps
    s = h * np.arange(n_steps + 1)
    w = np.full(n_steps + 1, h)
    w[0] = w[-1] = 0.5 * h
    samples = []
    for b, start in enumerate(range(0, n_paths, block)):
        k = min(block, n_paths - start)
        rng = np.random.default_rng(seed + b)
        incr = rng.normal(0.0, np.sqrt(eps * h), size=(k, n_steps))
        y = x + np.concatenate((np.zeros((k, 1)), np.cumsum(incr, axis=1)), axis=1)
        integ = pot.value(t - s[None, :], y) @ w
        samples.append(np.exp(-(np.asarray(f(y[:, -1])) + integ) / eps))
    vals = np.concatenate(samples)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    if np.ptp(vals) == 0.0:
        se = 0.0
    return est, se


def log_stability_gap(eps: float, phi_a: PeriodicField, phi_b: PeriodicField, pot: Potential,
                      t: float, grid: SpatialGrid | None = None, dt: float | None = None) -> float:
    """sup_x |eps log U(t; phi_a) - eps log U(t; phi_b)|."""
    grid = grid or phi_a.grid
    prop = build_propagator(pot, eps, 0.0, t, grid, dt=dt)
    logs = []
    for phi in (phi_a, phi_b):
        e = -np.asarray(phi.values) / eps
        sh = e.max()
        logs.append(np.log(prop.operator() @ np.exp(e - sh)) + sh + prop.log_scale)
    return float(eps * np.max(np.abs(logs[0] - logs[1])))


def neg_eps_log_u(eps: float, phi, pot: Potential, t: float, x: float, grid: SpatialGrid,
                  dt: float | None = None) -> float:
    """-eps log U(t, x) by the propagator, interpolating log U linearly."""
    f = _as_function(phi)
    phi_nodes = np.asarray(f(grid.nodes), dtype=float)
    times, U, scales = evolve_U(eps, -phi_nodes / eps, pot, 0.0, t, grid, dt,
                                save_every=10 ** 9)
    logU = PeriodicField(grid, np.log(U[-1]) + scales[-1])
    return float(-eps * logU.interp(x))


def l2_along(run: ViscousRun) -> np.ndarray:
    return np.array([l2_norm(u) for u in run.u])
