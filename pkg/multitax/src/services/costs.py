"""Convex resource costs with derivatives and Legendre conjugates.

Every cost exposes ``value``, ``derivative`` and ``conjugate`` on scalars or
arrays. The conjugate is evaluated at a slope; for a tangency point ``a`` the
tangent line ``t ↦ C′(a)·t − C*(C′(a))`` touches the cost at ``a``.
"""
from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np

from multitax.src.exceptions import DomainError
from multitax.src.models.params import ModelParams


class ConvexCost(ABC):
    is_linear: bool = False
    #: smallest admissible argument
    domain_lo: float = -np.inf

    @abstractmethod
    def value(self, t): ...

    @abstractmethod
    def derivative(self, t): ...

    @abstractmethod
    def conjugate(self, slope): ...

    @abstractmethod
    def slope_point(self, slope):
        """Tangency point whose derivative equals ``slope``."""

    def tangent_at(self, a) -> Tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float)
        slope = self.derivative(a)
        return slope, a * slope - self.value(a)

    def derivative_times(self, t):
        """t·C′(t), finite at the left end of the domain."""
        t = np.asarray(t, dtype=float)
        return t * self.derivative(t)

    def left_tangency(self, lo: float, eps: float) -> float:
        """Tangency point covering the left end ``lo`` of an interval within ``eps``."""
        return lo


class LinearConsumptionCost(ConvexCost):
    """C(c) = c for linear utility from consumption."""

    is_linear = True

    def value(self, t):
        return np.asarray(t, dtype=float)

    def derivative(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def conjugate(self, slope):
        return np.zeros_like(np.asarray(slope, dtype=float))

    def slope_point(self, slope):
        return np.zeros_like(np.asarray(slope, dtype=float))


class ExponentialConsumptionCost(ConvexCost):
    """C(c) = exp(c), the resource cost of c utils under log utility."""

    def value(self, t):
        return np.exp(np.asarray(t, dtype=float))

    def derivative(self, t):
        return np.exp(np.asarray(t, dtype=float))

    def conjugate(self, slope):
        slope = np.asarray(slope, dtype=float)
        if np.any(slope <= 0):
            raise DomainError("exponential cost conjugate needs positive slopes")
        return slope * np.log(slope) - slope

    def slope_point(self, slope):
        return np.log(np.asarray(slope, dtype=float))


class TaskCost(ConvexCost):
    """X(x) = −½·x^(2/ρ) for a task disutility x in utils, x ≥ 0."""

    domain_lo = 0.0

    def __init__(self, rho: float):
        if rho <= 2.0:
            raise DomainError(f"task cost needs rho > 2, got {rho}")
        self.rho = float(rho)
        self.power = 2.0 / self.rho

    def _check(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("task disutility must be non-negative")
        return t

    def value(self, t):
        return -0.5 * self._check(t) ** self.power

    def derivative(self, t):
        t = self._check(t)
        with np.errstate(divide="ignore"):
            return -(1.0 / self.rho) * t ** (self.power - 1.0)

    def derivative_times(self, t):
        return -(1.0 / self.rho) * self._check(t) ** self.power

    def conjugate(self, slope):
        slope = np.asarray(slope, dtype=float)
        if np.any(slope >= 0):
            raise DomainError("task cost slopes are strictly negative")
        a = self.slope_point(slope)
        return slope * a - self.value(a)

    def slope_point(self, slope):
        slope = np.asarray(slope, dtype=float)
        return (-self.rho * slope) ** (1.0 / (self.power - 1.0))

    def left_tangency(self, lo: float, eps: float) -> float:
        if lo > 0:
            return lo
        # gap of the tangent at a measured at 0 is (½ − 1/ρ)·a^(2/ρ)
        return (eps / (0.5 - 1.0 / self.rho)) ** (self.rho / 2.0)


def consumption_cost(params: ModelParams) -> ConvexCost:
    if params.consumption_utility == "log":
        return ExponentialConsumptionCost()
    return LinearConsumptionCost()


def task_cost_function(params: ModelParams) -> TaskCost:
    return TaskCost(params.rho)
