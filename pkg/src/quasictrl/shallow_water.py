"""Semi-implicit finite differences for the viscous shallow water system with friction.

Conservative form on (0, 1)::

    h_t + (h u)_x = 0
    (h u)_t + (h u^2)_x - (mu h u_x)_x + h_x / Fr^2 + r h u = 0
    u(t, 0) = v1(t),  u(t, 1) = v2(t)

Mass is advanced with an explicit upwind (minmod-limited) flux in node-centred
finite-volume form, so the trapezoid mass changes only by the boundary fluxes.
Momentum treats advection, pressure and friction explicitly and the degenerate
viscosity implicitly through one tridiagonal solve per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CFLViolation, IncompatibleData, PositivityLoss
from .numerics import (
    ControlSchedule,
    Grid,
    GridFunction,
    PhysicalParams,
    TimeGrid,
    derivative_values,
    h1_norm,
    l2_norm,
    second_derivative_values,
    solve_tridiagonal,
    time_integral,
)

CFL_SAFETY = 0.5


@dataclass(frozen=True)
class SWState:
    h: GridFunction
    u: GridFunction
    time: float = 0.0

    def __post_init__(self):
        if self.h.grid != self.u.grid:
            raise ValueError("h and u must share a grid")
        if np.any(self.h.values <= 0):
            raise PositivityLoss(f"depth is not strictly positive at t={self.time}")

    @property
    def grid(self) -> Grid:
        return self.h.grid


@dataclass(frozen=True)
class SWTrajectory:
    """All time levels of a run; ``h[k]`` and ``u[k]`` are node arrays at ``t[k]``."""

    grid: Grid
    time_grid: TimeGrid
    h: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    params: PhysicalParams | None = None
    positive: bool = True

    def __post_init__(self):
        shape = (self.time_grid.n_levels, self.grid.n_nodes)
        if self.h.shape != shape or self.u.shape != shape:
            raise ValueError(f"trajectory arrays must have shape {shape}")

    @property
    def t(self) -> np.ndarray:
        return self.time_grid.t

    def state(self, k: int) -> SWState:
        return SWState(GridFunction(self.grid, self.h[k]), GridFunction(self.grid, self.u[k]), float(self.t[k]))

    def __len__(self):
        return self.time_grid.n_levels

    @property
    def terminal(self) -> SWState:
        return self.state(-1)


def check_compatibility(u0: GridFunction, controls: ControlSchedule, tol: float) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return bool(abs(controls.left[0] - u0.values[0]) <= tol and abs(controls.right[0] - u0.values[-1]) <= tol)


def max_stable_dt(state: SWState) -> float:
    return CFL_SAFETY * state.grid.dx / max(float(np.max(np.abs(state.u.values))), 1e-12)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def mass_fluxes(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Fluxes at x_0, the n faces x_{i+1/2}, and x_n (length n_nodes + 1)."""
    slope = np.zeros_like(h)
    slope[1:-1] = _minmod(h[2:] - h[1:-1], h[1:-1] - h[:-2])
    u_face = 0.5 * (u[:-1] + u[1:])
    h_left = h[:-1] + 0.5 * slope[:-1]
    h_right = h[1:] - 0.5 * slope[1:]
    face = u_face * np.where(u_face >= 0, h_left, h_right)
    return np.concatenate(([h[0] * u[0]], face, [h[-1] * u[-1]]))


def advance_mass(h: np.ndarray, u: np.ndarray, dt: float, dx: float) -> np.ndarray:
    """Node-centred finite-volume update; boundary nodes own half cells."""
    flux = mass_fluxes(h, u)
    width = np.full_like(h, dx)
    width[0] = width[-1] = 0.5 * dx
    return h - dt * (flux[1:] - flux[:-1]) / width


def step(state: SWState, params: PhysicalParams, dt: float, left_u: float, right_u: float) -> SWState:
    """Advance one time step; ``left_u`` and ``right_u`` are the new boundary velocities."""
    limit = max_stable_dt(state)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds CFL limit {limit:.3e}")
    grid = state.grid
    dx = grid.dx
    h = state.h.values
    u = state.u.values

    h_new = advance_mass(h, u, dt, dx)
    if np.any(h_new <= 0) or not np.all(np.isfinite(h_new)):
        raise PositivityLoss(f"depth lost positivity at t={state.time + dt:.6g}")

    mu = params.mu
    adv = derivative_values(h * u * u, dx)[1:-1]
    pressure = derivative_values(h, dx)[1:-1] / params.fr**2
    friction = params.r * h[1:-1] * u[1:-1]
    rhs = h[1:-1] * u[1:-1] - dt * (adv + pressure + friction)

    h_face = 0.5 * (h_new[:-1] + h_new[1:])
    c = mu * dt / dx**2
    diag = h_new[1:-1] + c * (h_face[:-1] + h_face[1:])
    lower = -c * h_face[1:-1]
    upper = -c * h_face[1:-1]
    rhs[0] += c * h_face[0] * left_u
    rhs[-1] += c * h_face[-1] * right_u
    u_new = np.empty_like(u)
    u_new[0] = left_u
    u_new[-1] = right_u
    u_new[1:-1] = solve_tridiagonal(lower, diag, upper, rhs)
    if not np.all(np.isfinite(u_new)):
        raise PositivityLoss(f"velocity blew up at t={state.time + dt:.6g}")
    return SWState(GridFunction(grid, h_new), GridFunction(grid, u_new), state.time + dt)


def simulate(h0: GridFunction, u0: GridFunction, controls: ControlSchedule, params: PhysicalParams,
             time_grid: TimeGrid | None = None) -> SWTrajectory:
    time_grid = time_grid or controls.time_grid
    if time_grid != controls.time_grid:
        raise ValueError("controls are sampled on a different time grid")
    if not check_compatibility(u0, controls, 1e-8):
        raise IncompatibleData(
            f"controls (v1(0)={controls.left[0]!r}, v2(0)={controls.right[0]!r}) do not match "
            f"u0 traces ({u0.values[0]!r}, {u0.values[-1]!r})"
        )
    state = SWState(h0, u0, 0.0)
    n = time_grid.n_levels
    hs = np.empty((n, h0.grid.n_nodes))
    us = np.empty_like(hs)
    hs[0], us[0] = h0.values, u0.values
    dt = time_grid.dt
    for k in range(time_grid.n_steps):
        try:
            state = step(state, params, dt, controls.left[k + 1], controls.right[k + 1])
        except (PositivityLoss, CFLViolation) as exc:
            exc.time_index = k + 1
            raise
        hs[k + 1], us[k + 1] = state.h.values, state.u.values
    return SWTrajectory(h0.grid, time_grid, hs, us, params, positive=bool(np.all(hs > 0)))


def momentum_residual(trajectory: SWTrajectory, params: PhysicalParams) -> np.ndarray:
    """L2 norm of the discrete conservative momentum residual at interior time levels."""
    if len(trajectory) < 3:
        raise ValueError("momentum_residual needs at least 3 time levels")
    dx = trajectory.grid.dx
    dt = trajectory.time_grid.dt
    h = trajectory.h
    u = trajectory.u
    m = h * u
    dm_dt = (m[2:] - m[:-2]) / (2.0 * dt)
    hc, uc = h[1:-1], u[1:-1]
    adv = derivative_values(hc * uc * uc, dx, axis=1)
    # expanded form keeps every stencil single-level, so boundary errors stay O(dx^2)
    visc = params.mu * (derivative_values(hc, dx, axis=1) * derivative_values(uc, dx, axis=1)
                        + hc * second_derivative_values(uc, dx, axis=1))
    pressure = derivative_values(hc, dx, axis=1) / params.fr**2
    res = dm_dt + adv - visc + pressure + params.r * hc * uc
    weights = trajectory.grid.trapezoid_weights
    return np.sqrt(res**2 @ weights)


def _h2_surrogate(f: GridFunction) -> float:
    df = f.with_values(derivative_values(f.values, f.grid.dx))
    return float(np.hypot(h1_norm(f), h1_norm(df)))


def xt_norm_monitor(trajectory: SWTrajectory) -> dict:
    """Discrete stand-ins for the three components of the X_T norm.

    ``sup_h_H2`` is ``sup_t sqrt(|h|_H1^2 + |h_x|_H1^2)``; the velocity entries
    are trapezoid-in-time norms of the same H2 surrogate and of (u, u_t) in L2.
    """
    grid, tg = trajectory.grid, trajectory.time_grid
    h_h2 = [_h2_surrogate(GridFunction(grid, row)) for row in trajectory.h]
    u_h2 = np.array([_h2_surrogate(GridFunction(grid, row)) for row in trajectory.u])
    if tg.n_levels >= 3:
        u_t = np.gradient(trajectory.u, tg.dt, axis=0, edge_order=2)
    else:
        u_t = np.gradient(trajectory.u, tg.dt, axis=0)
    u_l2 = np.array([l2_norm(GridFunction(grid, row)) for row in trajectory.u])
    ut_l2 = np.array([l2_norm(GridFunction(grid, row)) for row in u_t])
    return {
        "sup_h_H2": float(max(h_h2)),
        "u_L2H2": float(np.sqrt(time_integral(u_h2**2, tg))),
        "u_H1L2": float(np.sqrt(time_integral(u_l2**2 + ut_l2**2, tg))),
    }
