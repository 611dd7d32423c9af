"""Forced Burgers equation on the circle: viscous and inviscid solvers,
Euler-Lagrange characteristics, the action functional and periodic
solutions."""
from .field import (
    DEFAULT_TOL,
    TWO_PI,
    EvaluationError,
    ParameterError,
    PeriodicField,
    Potential,
    SpatialGrid,
    Trajectory,
    constant_potential,
    custom_potential,
    eval_potential,
    eval_potential_gradient,
    l1_distance,
    l2_norm,
    forced_potential,
    potential_from_name,
    quadrature,
    zero_potential,
)
from .kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOL", "TWO_PI", "EvaluationError", "ParameterError", "PeriodicField", "Potential",
    "SpatialGrid", "Trajectory", "backend_name", "constant_potential", "custom_potential",
    "eval_potential", "eval_potential_gradient", "l1_distance", "l2_norm", "forced_potential",
    "potential_from_name", "quadrature", "zero_potential",
]
