"""Closed-form heat solutions used as test data and by the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .heat import HeatTrajectory
from .numerics import ControlSchedule, Grid, GridFunction, TimeGrid


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, t, x):
        return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, float(self.value))


@dataclass(frozen=True)
class Separable:
    """``1 + A exp(-mu pi^2 t) sin(pi x)``; its boundary values are 1."""

    amplitude: float = 0.1
    mu: float = 1.0

    def __call__(self, t, x):
        return 1.0 + self.amplitude * np.exp(-self.mu * math.pi**2 * np.asarray(t)) * np.sin(math.pi * np.asarray(x))

    def velocity(self, t, x):
        """Exact ``-mu d_x ln h``."""
        e = self.amplitude * np.exp(-self.mu * math.pi**2 * np.asarray(t))
        x = np.asarray(x)
        return -self.mu * math.pi * e * np.cos(math.pi * x) / (1.0 + e * np.sin(math.pi * x))


@dataclass(frozen=True)
class Exponential:
    """``exp(a x + mu a^2 t)``; the matching velocity is the constant ``-mu a``."""

    a: float = 1.0
    mu: float = 1.0

    def __call__(self, t, x):
        return np.exp(self.a * np.asarray(x) + self.mu * self.a**2 * np.asarray(t))

    def velocity(self, t, x):
        return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, -self.mu * self.a)


def sample(family, grid: Grid, time_grid: TimeGrid) -> HeatTrajectory:
    t = time_grid.t[:, None]
    return HeatTrajectory(grid, time_grid, np.array(family(t, grid.x[None, :]), dtype=float))


def initial(family, grid: Grid) -> GridFunction:
    return GridFunction(grid, family(0.0, grid.x))


def traces(family, time_grid: TimeGrid) -> ControlSchedule:
    t = time_grid.t
    return ControlSchedule(time_grid, family(t, 0.0), family(t, 1.0))


@dataclass(frozen=True)
class Bump:
    """Time-independent profile ``base + height exp(-((x - center) / width)^2)``.

    Only its t = 0 slice is meaningful; it is used for initial data and targets.
    """

    base: float = 1.0
    height: float = 2.0
    center: float = 0.5
    width: float = 0.08

    def __call__(self, t, x):
        x = np.asarray(x)
        values = self.base + self.height * np.exp(-(((x - self.center) / self.width) ** 2))
        return np.broadcast_to(values, np.broadcast(np.asarray(t), x).shape).copy()
