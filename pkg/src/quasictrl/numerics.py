"""Uniform grids, discrete calculus and the discrete norms shared by all solvers.

Every integral in the package is a trapezoid rule and every spatial derivative
is the second-order central stencil with second-order one-sided stencils at the
two endpoints, so tolerances quoted elsewhere refer to these discretizations.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import solve_banded

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on [0, 1] with ``n_cells`` cells."""

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells!r}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def x(self) -> np.ndarray:
        x = np.arange(self.n_nodes) * self.dx
        x[-1] = 1.0
        return x

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time levels ``t_k = k T / n_steps`` for k = 0..n_steps."""

    n_steps: int
    horizon: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_levels(self) -> int:
        return self.n_steps + 1

    @property
    def t(self) -> np.ndarray:
        t = np.arange(self.n_levels) * self.dt
        t[-1] = self.horizon
        return t


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity ``mu``, Froude number ``fr`` and friction ``r``.

    ``r`` defaults to ``1 / (mu fr^2)``, the value for which the friction term
    cancels the pressure term along quasi-solutions.
    """

    mu: float
    fr: float = 1.0
    r: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not self.fr > 0:
            raise ValueError(f"Froude number must be positive, got {self.fr!r}")
        if self.r is None:
            object.__setattr__(self, "r", self.friction_for_quasi_solution)
        if not self.r >= 0:
            raise ValueError(f"friction must be nonnegative, got {self.r!r}")

    @property
    def friction_for_quasi_solution(self) -> float:
        return 1.0 / (self.mu * self.fr**2)

    @property
    def quasi_consistent(self) -> bool:
        target = self.friction_for_quasi_solution
        return abs(self.r - target) <= 1e-12 * max(1.0, target)

    def require_quasi_consistent(self) -> None:
        if not self.quasi_consistent:
            raise ValueError(
                f"quasi-solutions need r = 1/(mu Fr^2) = {self.friction_for_quasi_solution!r}, "
                f"got r = {self.r!r}"
            )


@dataclass(frozen=True)
class GridFunction:
    """Node values of a scalar field on a :class:`Grid`. Values are read-only."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} node values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.broadcast_to(f(grid.x), (grid.n_nodes,)))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __len__(self):
        return self.grid.n_nodes


def trapezoid_integral(f: GridFunction) -> float:
    """Trapezoid approximation of the integral of ``f`` over [0, 1]."""
    return float(trapezoid(f.values, dx=f.grid.dx))


def l2_norm(f: GridFunction) -> float:
    return math.sqrt(trapezoid_integral(f.with_values(f.values**2)))


def central_derivative(f: GridFunction) -> GridFunction:
    """Second-order derivative stencil; one-sided three-point stencils at the ends."""
    if f.grid.n_cells < 2:
        raise ValueError("central_derivative needs at least 2 cells")
    return f.with_values(derivative_values(f.values, f.grid.dx))


def h1_norm(f: GridFunction) -> float:
    df = central_derivative(f)
    return math.sqrt(l2_norm(f) ** 2 + l2_norm(df) ** 2)


def derivative_values(values: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Array version of :func:`central_derivative` along ``axis``.

    Written in difference form so constants give exactly zero.
    """
    f = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    if f.shape[-1] < 3:
        raise ValueError("derivative needs at least 3 nodes")
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * dx)
    out[..., 0] = (4.0 * (f[..., 1] - f[..., 0]) - (f[..., 2] - f[..., 0])) / (2.0 * dx)
    out[..., -1] = ((f[..., -3] - f[..., -1]) - 4.0 * (f[..., -2] - f[..., -1])) / (2.0 * dx)
    return np.moveaxis(out, -1, axis)


def second_derivative_values(values: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Three-point second difference; second-order four-point one-sided at the ends."""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    if f.shape[-1] < 4:
        raise ValueError("second derivative needs at least 4 nodes")
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]
    out[..., 0] = 2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]
    out[..., -1] = 2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]
    return np.moveaxis(out / dx**2, -1, axis)


def cumulative_integral(values: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative trapezoid integral starting from 0 at the first sample."""
    return cumulative_trapezoid(values, dx=dx, initial=0.0)


def time_integral(values: np.ndarray, time_grid: TimeGrid) -> float:
    return float(trapezoid(values, dx=time_grid.dt))


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system; ``lower`` and ``upper`` have length n - 1."""
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def write_grid_function_csv(f: GridFunction, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for xi, vi in zip(f.x, f.values):
            writer.writerow([format_float(xi), format_float(vi)])


def read_grid_function_csv(path: PathLike) -> GridFunction:
    """Read an ``x,value`` CSV whose nodes form a uniform grid on [0, 1]."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["x", "value"]:
            raise ValueError(f"{path}: expected header 'x,value', got {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two nodes")
    x = np.array([r[0] for r in rows])
    grid = Grid(len(rows) - 1)
    if np.max(np.abs(x - grid.x)) > 1e-9:
        raise ValueError(f"{path}: nodes are not a uniform grid on [0, 1]")
    return GridFunction(grid, [r[1] for r in rows])


def format_float(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ControlSchedule:
    """Boundary values sampled at every level of ``time_grid``.

    Depending on the caller these are velocities (v1, v2) for the shallow water
    solver or positive depths (v6, v7) for the heat equation.
    """

    time_grid: TimeGrid
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.time_grid.n_levels
        for name in ("left", "right"):
            v = np.array(np.broadcast_to(getattr(self, name), (n,)), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} control values must be finite")
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @classmethod
    def constant(cls, time_grid: TimeGrid, left: float, right: float | None = None) -> "ControlSchedule":
        return cls(time_grid, np.full(time_grid.n_levels, float(left)),
                   np.full(time_grid.n_levels, float(left if right is None else right)))

    @property
    def t(self) -> np.ndarray:
        return self.time_grid.t

    def is_positive(self) -> bool:
        return bool(np.all(self.left > 0) and np.all(self.right > 0))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.left).tobytes())
        h.update(np.ascontiguousarray(self.right).tobytes())
        return h.hexdigest()
