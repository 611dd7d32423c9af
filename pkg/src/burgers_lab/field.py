"""Grids, periodic fields, forcing potentials, quadrature and norms.

Everything here is shared by the solver modules. Objects are immutable once
built; arrays handed to constructors are copied and flagged read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi

# global default for analytic identities
DEFAULT_TOL = 1e-9


class EvaluationError(ValueError):
    """An integrand or potential produced a non-finite value."""

    def __init__(self, message: str, abscissa: float | None = None):
        super().__init__(message)
        self.abscissa = abscissa


class ParameterError(ValueError):
    """An argument is outside the admissible range of an operation."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on the circle [0, 2*pi) with ``n_points`` nodes."""

    n_points: int
    period: float = TWO_PI

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ParameterError(f"n_points must be an integer >= 8, got {self.n_points}")
        if self.period != TWO_PI:
            raise ParameterError("the period is fixed at 2*pi")

    @property
    def dx(self) -> float:
        return self.period / self.n_points

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dx

    def field(self, values, mean_zero: bool = False, tol: float = 1e-8) -> "PeriodicField":
        return PeriodicField(self, values, mean_zero=mean_zero, tol=tol)

    def sample(self, func: Callable[[np.ndarray], np.ndarray], **kwargs) -> "PeriodicField":
        return PeriodicField(self, func(self.nodes), **kwargs)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Node values of a 2*pi-periodic function at one instant."""

    grid: SpatialGrid
    values: np.ndarray
    mean_zero: bool = False
    tol: float = 1e-8

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n_points,):
            raise ParameterError(
                f"expected {self.grid.n_points} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("field values must be finite")
        object.__setattr__(self, "values", vals)
        if self.mean_zero and abs(self.integral()) >= self.tol:
            raise ParameterError(
                f"field flagged mean-zero but integral is {self.integral():.3e}"
            )

    def __len__(self):
        return self.grid.n_points

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def integral(self) -> float:
        """Trapezoid integral over one period (the rule is exact for the
        periodic interpolant's mean)."""
        return float(np.sum(self.values) * self.grid.dx)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def derivative(self) -> "PeriodicField":
        """Centered second-order derivative."""
        v = self.values
        return PeriodicField(self.grid, (np.roll(v, -1) - np.roll(v, 1)) / (2 * self.grid.dx))

    def antiderivative(self) -> "PeriodicField":
        """Cumulative trapezoid integral, shifted to have mean zero.

        Only meaningful for mean-zero input; a non-zero mean leaves a
        linear drift that cannot be periodic.
        """
        v = self.values
        dx = self.grid.dx
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (v[:-1] + v[1:]) * dx)))
        return PeriodicField(self.grid, cum - cum.mean())

    def interp(self, x) -> np.ndarray:
        """Periodic linear interpolation at arbitrary (unreduced) positions."""
        x = np.asarray(x, dtype=float)
        s = np.mod(x, TWO_PI) / self.grid.dx
        i = np.floor(s).astype(int)
        w = s - i
        i %= self.grid.n_points
        j = (i + 1) % self.grid.n_points
        return (1.0 - w) * self.values[i] + w * self.values[j]

    def with_values(self, values) -> "PeriodicField":
        return PeriodicField(self.grid, values)


def l2_norm(f: PeriodicField) -> float:
    """Normalized L2 norm ``sqrt(1/(2 pi) * int f^2)`` by the trapezoid rule."""
    return float(np.sqrt(np.sum(np.square(f.values)) * f.grid.dx / TWO_PI))


def l1_distance(f: PeriodicField, g: PeriodicField) -> float:
    """Normalized L1 distance ``1/(2 pi) * int |f - g|``."""
    return float(np.sum(np.abs(f.values - g.values)) * f.grid.dx / TWO_PI)


# --------------------------------------------------------------------------
# potentials


def _forced_v(t, x):
    s = np.sin(t)
    return np.cos(s) - np.cos(x + s)


def _forced_vx(t, x):
    return np.sin(x + np.sin(t))


def _forced_vxx(t, x):
    return np.cos(x + np.sin(t))


@dataclass(frozen=True)
class Potential:
    """Space-time periodic forcing potential V(t, x).

    ``kind`` is ``"forced"`` for cos(sin t) - cos(x + sin t) and ``"custom"``
    otherwise. ``code`` tells the compiled kernels which closed form to use
    (0 zero, 1 forced, -1 none: fall back to the Python callables).
    """

    kind: str
    value: Callable
    grad: Callable
    grad2: Callable
    K1: float
    K2: float
    Kxx: float
    code: int = -1
    name: str = ""
    time_independent: bool = False

    def __call__(self, t, x):
        return self.value(t, x)

    @property
    def is_zero(self) -> bool:
        return self.code == 0


def forced_potential() -> Potential:
    return Potential("forced", _forced_v, _forced_vx, _forced_vxx,
                     K1=2.0, K2=1.0, Kxx=1.0, code=1, name="forced")


def zero_potential() -> Potential:
    def zero(t, x):
        return np.zeros(np.broadcast(t, x).shape) if np.ndim(t) or np.ndim(x) else 0.0

    return Potential("custom", zero, zero, zero, 0.0, 0.0, 0.0, code=0,
                     name="zero", time_independent=True)


def constant_potential(c: float) -> Potential:
    def const(t, x):
        shape = np.broadcast(t, x).shape
        return np.full(shape, float(c)) if shape else float(c)

    def zero(t, x):
        shape = np.broadcast(t, x).shape
        return np.zeros(shape) if shape else 0.0

    return Potential("custom", const, zero, zero, abs(c), 0.0, 0.0,
                     name=f"constant({c})", time_independent=True)


def custom_potential(value, grad, grad2, K1, K2, Kxx, name="custom",
                     time_independent=False) -> Potential:
    return Potential("custom", value, grad, grad2, float(K1), float(K2),
                     float(Kxx), name=name, time_independent=time_independent)


def potential_from_name(name: str) -> Potential:
    name = name.strip().lower()
    if name == "forced":
        return forced_potential()
    if name in ("zero", "none", "0"):
        return zero_potential()
    if name.startswith("constant:"):
        return constant_potential(float(name.split(":", 1)[1]))
    raise ParameterError(f"unknown potential {name!r}")


def eval_potential(pot: Potential, t, x):
    return pot.value(t, x)


def eval_potential_gradient(pot: Potential, t, x):
    return pot.grad(t, x)


# --------------------------------------------------------------------------
# quadrature


def quadrature(integrand: Callable, a: float, b: float, n: int) -> float:
    """Composite Simpson rule on ``n`` subintervals (rounded up to even).

    ``integrand`` may be vectorized; scalar-only callables are retried
    point by point.
    """
    if not a < b:
        raise ParameterError(f"need a < b, got a={a}, b={b}")
    if n < 2:
        raise ParameterError("need at least two subintervals")
    n += n % 2
    s = np.linspace(a, b, n + 1)
    try:
        f = np.asarray(integrand(s), dtype=float)
        if f.shape != s.shape:
            f = np.broadcast_to(f, s.shape)
    except (TypeError, ValueError):
        f = np.array([integrand(si) for si in s], dtype=float)
    bad = ~np.isfinite(f)
    if bad.any():
        where = float(s[np.argmax(bad)])
        raise EvaluationError(f"integrand is not finite at s={where!r}", abscissa=where)
    h = (b - a) / n
    return float(h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()))


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Weights of the composite Simpson rule on ``n`` (even) subintervals."""
    if n % 2:
        raise ParameterError("Simpson needs an even number of subintervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-sampled path on the universal cover.

    ``absorbed_at`` is set by characteristic tracing when the path runs into
    a shock; it is ``None`` for paths that were never absorbed.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    absorbed_at: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = _frozen(self.times)
        q = _frozen(self.positions)
        p = _frozen(self.velocities)
        if not (t.ndim == q.ndim == p.ndim == 1):
            raise ParameterError("trajectory arrays must be one-dimensional")
        if not (len(t) == len(q) == len(p)) or len(t) < 2:
            raise ParameterError("trajectory arrays must share a length >= 2")
        if np.any(np.diff(t) == 0) or not (np.all(np.diff(t) > 0) or np.all(np.diff(t) < 0)):
            raise ParameterError("times must be strictly monotone")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", q)
        object.__setattr__(self, "velocities", p)

    def __len__(self):
        return len(self.times)

    @property
    def start(self):
        return float(self.positions[0]), float(self.velocities[0])

    @property
    def end(self):
        return float(self.positions[-1]), float(self.velocities[-1])


def periodic_spline(f: PeriodicField):
    """Periodic cubic spline through the node values.

    Returns ``(phi, phi_prime)`` callables on the universal cover.
    """
    from scipy.interpolate import CubicSpline

    x = np.append(f.grid.nodes, TWO_PI)
    y = np.append(f.values, f.values[0])
    cs = CubicSpline(x, y, bc_type="periodic")
    dcs = cs.derivative()

    def phi(z):
        return cs(np.mod(z, TWO_PI))

    def phi_prime(z):
        return dcs(np.mod(z, TWO_PI))

    return phi, phi_prime
