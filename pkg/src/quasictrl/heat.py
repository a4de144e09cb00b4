"""Crank-Nicolson solver for the Dirichlet-controlled heat equation h_t = mu h_xx.

The boundary values are the (strictly positive) depth controls; they are
injected strongly at each new time level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .numerics import ControlSchedule, Grid, GridFunction, TimeGrid

TRACE_TOL = 1e-8


@dataclass(frozen=True)
class HeatProblem:
    mu: float
    h0: GridFunction
    controls: ControlSchedule
    check_positive: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if self.check_positive:
            if np.any(self.h0.values <= 0):
                raise ValueError("initial depth must be strictly positive")
            if not self.controls.is_positive():
                raise ValueError("depth controls must be strictly positive")
        if (abs(self.h0.values[0] - self.controls.left[0]) > TRACE_TOL
                or abs(self.h0.values[-1] - self.controls.right[0]) > TRACE_TOL):
            raise ValueError(
                "trace compatibility violated: h0(0)={:.17g} vs {:.17g}, h0(1)={:.17g} vs {:.17g}".format(
                    self.h0.values[0], self.controls.left[0], self.h0.values[-1], self.controls.right[0]
                )
            )

    @property
    def grid(self) -> Grid:
        return self.h0.grid

    @property
    def time_grid(self) -> TimeGrid:
        return self.controls.time_grid


@dataclass(frozen=True)
class HeatTrajectory:
    """Node values ``values[k, i]`` at time level k and node i."""

    grid: Grid
    time_grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.time_grid.n_levels, self.grid.n_nodes)
        if self.values.shape != expected:
            raise ValueError(f"trajectory shape {self.values.shape} != {expected}")

    def __len__(self):
        return self.time_grid.n_levels

    def __getitem__(self, k) -> GridFunction:
        return GridFunction(self.grid, self.values[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def t(self) -> np.ndarray:
        return self.time_grid.t


class CrankNicolson:
    """Constant-coefficient CN stepper on the interior nodes.

    ``A y_new = B y_old + (r/2) [boundary terms]`` with ``A = I - (r/2) L`` and
    ``B = I + (r/2) L``; both are symmetric, so the discrete adjoint reuses the
    same banded factor.
    """

    def __init__(self, grid: Grid, dt: float, mu: float):
        if grid.n_cells < 2:
            raise ValueError("heat solver needs at least 2 cells")
        self.grid = grid
        self.r = mu * dt / grid.dx**2
        m = grid.n_cells - 1
        half = 0.5 * self.r
        ab = np.empty((3, m))
        ab[0] = -half
        ab[1] = 1.0 + self.r
        ab[2] = -half
        self._ab = ab

    def apply_b(self, y: np.ndarray) -> np.ndarray:
        out = (1.0 - self.r) * y
        out[1:] += 0.5 * self.r * y[:-1]
        out[:-1] += 0.5 * self.r * y[1:]
        return out

    def solve_a(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self._ab, rhs, check_finite=False)

    def step(self, h: np.ndarray, left_new: float, right_new: float) -> np.ndarray:
        rhs = self.apply_b(h[1:-1])
        half = 0.5 * self.r
        rhs[0] += half * (h[0] + left_new)
        rhs[-1] += half * (h[-1] + right_new)
        out = np.empty_like(h)
        out[1:-1] = self.solve_a(rhs)
        out[0] = left_new
        out[-1] = right_new
        return out


def solve_heat_values(mu: float, h0: np.ndarray, left: np.ndarray, right: np.ndarray,
                      grid: Grid, time_grid: TimeGrid) -> np.ndarray:
    """Raw-array CN solve; ``left[0]`` and ``right[0]`` are never used."""
    stepper = CrankNicolson(grid, time_grid.dt, mu)
    out = np.empty((time_grid.n_levels, grid.n_nodes))
    out[0] = h0
    for k in range(time_grid.n_steps):
        out[k + 1] = stepper.step(out[k], left[k + 1], right[k + 1])
    return out


def solve_heat(problem: HeatProblem) -> HeatTrajectory:
    values = solve_heat_values(problem.mu, problem.h0.values, problem.controls.left,
                               problem.controls.right, problem.grid, problem.time_grid)
    return HeatTrajectory(problem.grid, problem.time_grid, values)


def boundary_flux(trajectory: HeatTrajectory, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """``mu h_x`` at x = 0 and x = 1 for every time level (one-sided, second order)."""
    if trajectory.grid.n_cells < 4:
        raise ValueError("boundary_flux needs at least 4 cells")
    v = trajectory.values
    dx = trajectory.grid.dx
    left = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * dx)
    right = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * dx)
    return mu * left, mu * right


def terminal_state(trajectory: HeatTrajectory) -> GridFunction:
    return trajectory[-1]


def parabolic_bounds(problem: HeatProblem) -> tuple[float, float]:
    """Min and max of the initial and boundary data (the parabolic boundary)."""
    c = problem.controls
    data = np.concatenate([problem.h0.values, c.left[1:], c.right[1:]])
    return float(data.min()), float(data.max())
