"""Cole-Hopf reduction of irrotational shallow water data to the heat equation.

If h solves h_t = mu h_xx then (h, -mu d_x ln h) solves the friction-coupled
shallow water system whenever r = 1/(mu Fr^2). Conversely, from a velocity
trajectory one recovers the log-depth

    w(t, x) = -(1/mu) int_0^x u(t, y) dy + v5(t),   v5(t) = -int_0^t v3,
    v3(t) = -v1(t)^2 / mu + u_x(t, 0),

and e^w must again solve the heat equation with boundary data e^{v5}, e^{v4}.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergedChain, PositivityLoss, PotentialOverflow
from .heat import HeatProblem, HeatTrajectory, solve_heat
from .numerics import (
    ControlSchedule,
    GridFunction,
    PhysicalParams,
    TimeGrid,
    cumulative_integral,
    derivative_values,
    l2_norm,
)
from .shallow_water import SWTrajectory

EXP_GUARD = 700.0


@dataclass(frozen=True)
class PotentialState:
    w: GridFunction
    time: float = 0.0

    def __post_init__(self):
        _guard(self.w.values)

    def depth(self) -> GridFunction:
        return self.w.with_values(np.exp(self.w.values))


@dataclass(frozen=True)
class ReducedControls:
    """Source control v3 and log-boundary controls v4, v5 on a time grid."""

    time_grid: TimeGrid
    v3: np.ndarray = field(repr=False)
    v4: np.ndarray = field(repr=False)
    v5: np.ndarray = field(repr=False)
    heat_compatible: bool = True

    def __post_init__(self):
        _guard(self.v4)
        _guard(self.v5)
        if self.heat_compatible:
            expected = v5_from_v3(self.v3, self.time_grid)
            if np.max(np.abs(expected - self.v5)) > 1e-12 * max(1.0, np.max(np.abs(expected))):
                raise ValueError("v5 does not equal -int v3 although heat_compatible is set")

    @property
    def v6(self) -> np.ndarray:
        return np.exp(self.v5)

    @property
    def v7(self) -> np.ndarray:
        return np.exp(self.v4)

    def depth_controls(self) -> ControlSchedule:
        return ControlSchedule(self.time_grid, self.v6, self.v7)


@dataclass
class ChainReport:
    max_distance: float
    tol: float
    passed: bool
    K_reconstructed: float
    K_integral: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _guard(values) -> None:
    if np.any(np.abs(values) > EXP_GUARD):
        raise PotentialOverflow(f"|w| exceeds {EXP_GUARD}; exp(w) would overflow")


def velocity_to_w(u: GridFunction, mu: float, v5_t: float) -> GridFunction:
    """Log-depth potential with w(0) = v5_t exactly."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    w = -cumulative_integral(u.values, u.grid.dx) / mu + v5_t
    w[0] = v5_t
    return u.with_values(w)


def v3_from_trace(v1_t: float, ux0_t: float, mu: float) -> float:
    if not mu > 0:
        raise ValueError("mu must be positive")
    return -v1_t**2 / mu + ux0_t


def v5_from_v3(v3, time_grid: TimeGrid) -> np.ndarray:
    """Negated cumulative trapezoid in time; starts at exactly 0."""
    return -cumulative_integral(np.asarray(v3, dtype=float), time_grid.dt)


def _heat_velocity(h: np.ndarray, mu: float, dx: float) -> np.ndarray:
    if np.any(h <= 0):
        raise PositivityLoss("quasi-solution requires a strictly positive depth")
    return -mu * derivative_values(np.log(h), dx, axis=-1)


def quasi_solution(h_heat: HeatTrajectory, params: PhysicalParams) -> SWTrajectory:
    """Pair each heat snapshot with u = -mu d_x ln h."""
    params.require_quasi_consistent()
    h = np.array(h_heat.values)
    u = _heat_velocity(h, params.mu, h_heat.grid.dx)
    return SWTrajectory(h_heat.grid, h_heat.time_grid, h, u, params, positive=True)


def quasi_controls(h_heat: HeatTrajectory, params: PhysicalParams) -> ControlSchedule:
    traj = quasi_solution(h_heat, params)
    return ControlSchedule(h_heat.time_grid, traj.u[:, 0], traj.u[:, -1])


def quasi_initial_velocity(h0: GridFunction, mu: float) -> GridFunction:
    return h0.with_values(_heat_velocity(h0.values, mu, h0.grid.dx))


def reduce_controls(sw_traj: SWTrajectory, controls: ControlSchedule, mu: float) -> tuple[ReducedControls, np.ndarray]:
    """Reduced controls and the reconstructed log-depth w at every time level."""
    dx = sw_traj.grid.dx
    tg = sw_traj.time_grid
    ux0 = derivative_values(sw_traj.u, dx, axis=1)[:, 0]
    v3 = np.array([v3_from_trace(v1, d, mu) for v1, d in zip(controls.left, ux0)])
    v5 = v5_from_v3(v3, tg)
    w = -cumulative_integral(sw_traj.u, dx) / mu + v5[:, None]
    w[:, 0] = v5
    _guard(w)
    return ReducedControls(tg, v3, w[:, -1].copy(), v5), w


def chain_verify(sw_traj: SWTrajectory, controls: ControlSchedule, params: PhysicalParams,
                 tol: float) -> ChainReport:
    """Check that the Cole-Hopf reconstruction of ``sw_traj`` solves the heat equation.

    Raises:
        DivergedChain: if the max-over-time L2 distance between e^w and the
            direct heat solve exceeds ``tol``. The report is attached.
    """
    if np.any(sw_traj.h <= 0):
        raise PositivityLoss("trajectory depth is not strictly positive")
    if controls.time_grid != sw_traj.time_grid:
        raise ValueError("controls and trajectory use different time grids")
    mu = params.mu
    reduced, w = reduce_controls(sw_traj, controls, mu)
    h_rec = np.exp(w)
    grid = sw_traj.grid
    problem = HeatProblem(mu, GridFunction(grid, h_rec[0]), reduced.depth_controls())
    direct = solve_heat(problem)
    distance = max(l2_norm(GridFunction(grid, a - b)) for a, b in zip(h_rec, direct.values))
    K_integral = float(reduced.v5[-1])
    report = ChainReport(
        max_distance=float(distance),
        tol=float(tol),
        passed=bool(distance <= tol),
        K_reconstructed=math.exp(K_integral),
        K_integral=K_integral,
    )
    if not report.passed:
        raise DivergedChain(f"chain distance {distance:.3e} exceeds tol {tol:.3e}", report)
    return report
