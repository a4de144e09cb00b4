"""Adjoint-gradient search for positive boundary controls of the heat equation.

Controls are ``exp`` of piecewise-linear knot values, so positivity holds by
construction. The gradient is the exact derivative of the discrete misfit
(discretize-then-optimize): one forward Crank-Nicolson solve and one backward
sweep with the same symmetric matrices.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentSetup
from .heat import CrankNicolson, solve_heat_values
from .numerics import ControlSchedule, GridFunction, TimeGrid, format_float

log = logging.getLogger(__name__)

P_BOUND = 50.0
COMPAT_TOL = 1e-6
ARMIJO_C = 1e-4
MAX_HALVINGS = 30


@dataclass(frozen=True)
class ControlParameterization:
    """Log-control values at ``m`` uniform knots on [0, T] for each wall."""

    horizon: float
    p_left: np.ndarray
    p_right: np.ndarray

    def __post_init__(self):
        for name in ("p_left", "p_right"):
            p = np.array(getattr(self, name), dtype=float)
            if p.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"{name} must be finite")
            if np.any(np.abs(p) > P_BOUND):
                raise ValueError(f"|{name}| exceeds {P_BOUND}")
            p.flags.writeable = False
            object.__setattr__(self, name, p)
        if len(self.p_left) != len(self.p_right):
            raise ValueError("both walls need the same number of knots")
        if self.m < 2:
            raise ValueError("at least 2 knots per wall are required")

    @classmethod
    def constant(cls, horizon: float, m: int, left: float, right: float) -> "ControlParameterization":
        return cls(horizon, np.full(m, np.log(left)), np.full(m, np.log(right)))

    @classmethod
    def from_vector(cls, horizon: float, vec) -> "ControlParameterization":
        vec = np.asarray(vec, dtype=float)
        m = len(vec) // 2
        return cls(horizon, vec[:m], vec[m:])

    @property
    def m(self) -> int:
        return len(self.p_left)

    @property
    def knots(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.m)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.p_left, self.p_right])

    def basis(self, time_grid: TimeGrid) -> np.ndarray:
        """Hat-function matrix of shape (n_levels, m)."""
        return np.column_stack([np.interp(time_grid.t, self.knots, e) for e in np.eye(self.m)])

    def controls(self, time_grid: TimeGrid) -> ControlSchedule:
        if abs(time_grid.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise InconsistentSetup("knot horizon differs from the time grid horizon")
        phi = self.basis(time_grid)
        return ControlSchedule(time_grid, np.exp(phi @ self.p_left), np.exp(phi @ self.p_right))


@dataclass(frozen=True)
class ControlProblem:
    """Steer h_t = mu h_xx from ``h0`` towards ``h1`` at the horizon of ``time_grid``."""

    mu: float
    h0: GridFunction
    h1: GridFunction
    time_grid: TimeGrid

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.h0.grid != self.h1.grid:
            raise InconsistentSetup("h0 and h1 live on different grids")
        if np.any(self.h0.values <= 0):
            raise ValueError("h0 must be strictly positive")

    @property
    def grid(self):
        return self.h0.grid

    def forward(self, params: ControlParameterization) -> tuple[ControlSchedule, np.ndarray]:
        c = params.controls(self.time_grid)
        return c, solve_heat_values(self.mu, self.h0.values, c.left, c.right, self.grid, self.time_grid)

    def misfit_of(self, terminal: np.ndarray) -> float:
        d = terminal - self.h1.values
        return float(self.grid.trapezoid_weights @ (d * d))

    def misfit(self, params: ControlParameterization) -> float:
        return self.misfit_of(self.forward(params)[1][-1])

    def initial_guess(self, m: int) -> ControlParameterization:
        return ControlParameterization.constant(self.time_grid.horizon, m, self.h0.values[0], self.h0.values[-1])


def check_trace_compatibility(params: ControlParameterization, problem: ControlProblem,
                              tol: float = COMPAT_TOL) -> None:
    left, right = np.exp(params.p_left[0]), np.exp(params.p_right[0])
    if abs(left - problem.h0.values[0]) > tol or abs(right - problem.h0.values[-1]) > tol:
        raise InconsistentSetup(
            f"exp(p(0)) = ({left:.17g}, {right:.17g}) does not match h0 traces "
            f"({problem.h0.values[0]:.17g}, {problem.h0.values[-1]:.17g})"
        )


def _adjoint(problem: ControlProblem, params: ControlParameterization, check: bool):
    if check:
        check_trace_compatibility(params, problem)
    controls, h = problem.forward(params)
    tg, grid = problem.time_grid, problem.grid
    w = grid.trapezoid_weights
    resid = h[-1] - problem.h1.values
    misfit = float(w @ (resid * resid))

    cn = CrankNicolson(grid, tg.dt, problem.mu)
    half = 0.5 * cn.r
    N = tg.n_steps
    # q[n] = A^{-1} (dJ/dy^n), the multiplier of step n-1 -> n
    q_first = np.zeros(N + 1)
    q_last = np.zeros(N + 1)
    z = 2.0 * w[1:-1] * resid[1:-1]
    for n in range(N, 0, -1):
        q = cn.solve_a(z)
        q_first[n], q_last[n] = q[0], q[-1]
        z = cn.apply_b(q)

    def wall(q_b, node):
        g = np.zeros(N + 1)
        g[1:] = half * q_b[1:]
        g[1:N] += half * q_b[2:]
        g[N] += 2.0 * w[node] * resid[node]
        return g

    dJ_dg_left = wall(q_first, 0)
    dJ_dg_right = wall(q_last, -1)
    phi = params.basis(tg)
    grad = np.concatenate([phi.T @ (dJ_dg_left * controls.left), phi.T @ (dJ_dg_right * controls.right)])
    return misfit, grad, h


def adjoint_gradient(params: ControlParameterization, problem: ControlProblem,
                     check_compatibility: bool = True) -> tuple[float, np.ndarray]:
    """Misfit and its exact gradient with respect to ``params.vector``."""
    misfit, grad, _ = _adjoint(problem, params, check_compatibility)
    return misfit, grad


def finite_difference_gradient(params: ControlParameterization, problem: ControlProblem,
                               step: float = 1e-5, indices=None) -> np.ndarray:
    vec = params.vector
    idx = range(len(vec)) if indices is None else indices
    out = np.full(len(vec), np.nan)
    for k in idx:
        e = np.zeros_like(vec)
        e[k] = step
        plus = problem.misfit(ControlParameterization.from_vector(params.horizon, vec + e))
        minus = problem.misfit(ControlParameterization.from_vector(params.horizon, vec - e))
        out[k] = (plus - minus) / (2.0 * step)
    return out


def gradient_relative_error(adjoint: np.ndarray, fd: np.ndarray) -> np.ndarray:
    return np.abs(adjoint - fd) / np.maximum(np.abs(fd), np.finfo(float).tiny)


@dataclass
class IterationRecord:
    iter: int
    misfit: float
    step_size: float
    grad_norm: float


@dataclass
class OptimizationResult:
    params: ControlParameterization
    controls: ControlSchedule = field(repr=False)
    terminal: GridFunction = field(repr=False)
    misfit: float
    initial_misfit: float
    log: list = field(default_factory=list)
    gradient_check: dict | None = None
    stop_reason: str = "iterations"

    def to_dict(self) -> dict:
        return {
            "misfit": self.misfit,
            "initial_misfit": self.initial_misfit,
            "iterations": len(self.log) - 1,
            "stop_reason": self.stop_reason,
            "horizon": self.params.horizon,
            "knots": self.params.knots.tolist(),
            "p_left": self.params.p_left.tolist(),
            "p_right": self.params.p_right.tolist(),
            "gradient_check": self.gradient_check,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def write_iteration_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "misfit", "step_size", "grad_norm"])
        for r in rows:
            w.writerow([r.iter, format_float(r.misfit), format_float(r.step_size), format_float(r.grad_norm)])


def _gradient_check(problem, params, grad, free):
    idx = np.flatnonzero(free)
    fd = finite_difference_gradient(params, problem, indices=idx)
    err = gradient_relative_error(grad[idx], fd[idx])
    return {"indices": idx.tolist(), "max_relative_error": float(err.max()) if len(err) else 0.0}


def optimize(problem: ControlProblem, iterations: int, m: int = 8, initial: ControlParameterization | None = None,
             step0: float = 1.0, gradient_check: bool = True, callback=None) -> OptimizationResult:
    """Armijo gradient descent with halving backtracking on the knot values.

    The first knot of each wall stays at ln h0 so the controls remain trace
    compatible. Non-convergence is reported through ``stop_reason``.
    ``callback(iter, params, terminal_values)`` sees every accepted iterate.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    T = problem.time_grid.horizon
    params = initial if initial is not None else problem.initial_guess(m)
    vec = params.vector.copy()
    m = params.m
    vec[0] = np.log(problem.h0.values[0])
    vec[m] = np.log(problem.h0.values[-1])
    params = ControlParameterization.from_vector(T, vec)
    free = np.ones(2 * m, dtype=bool)
    free[[0, m]] = False

    misfit, grad, h = _adjoint(problem, params, True)
    grad[~free] = 0.0
    initial_misfit = misfit
    check = _gradient_check(problem, params, grad, free) if gradient_check else None
    rows = [IterationRecord(0, misfit, 0.0, float(np.linalg.norm(grad)))]
    if callback is not None:
        callback(0, params, h[-1])
    alpha = step0
    reason = "iterations"
    for it in range(1, iterations + 1):
        gnorm2 = float(grad @ grad)
        if gnorm2 == 0.0:
            reason = "stationary"
            break
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial_vec = np.clip(vec - alpha * grad, -P_BOUND, P_BOUND)
            trial = ControlParameterization.from_vector(T, trial_vec)
            trial_misfit = problem.misfit(trial)
            if np.isfinite(trial_misfit) and trial_misfit <= misfit - ARMIJO_C * alpha * gnorm2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            reason = "line_search_failed"
            break
        vec, params = trial_vec, trial
        misfit, grad, h = _adjoint(problem, params, False)
        grad[~free] = 0.0
        rows.append(IterationRecord(it, misfit, alpha, float(np.linalg.norm(grad))))
        if callback is not None:
            callback(it, params, h[-1])
        alpha *= 2.0
    log.debug("optimize stopped after %d iterations (%s), misfit %.6g", len(rows) - 1, reason, misfit)
    controls = params.controls(problem.time_grid)
    return OptimizationResult(params, controls, GridFunction(problem.grid, h[-1]), misfit, initial_misfit,
                              rows, check, reason)


@dataclass
class ComparisonRecord:
    terminal_pairing: float
    pairing_initial: float
    slack: float
    budget: float
    respected: bool
    informational: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def certificate_vs_optimizer(result: OptimizationResult, report, budget: float = 1e-2,
                             mu: float | None = None) -> ComparisonRecord:
    """Terminal pairing of the optimized state against the certified initial pairing."""
    from .obstruction import dirac_pairing

    if abs(result.params.horizon - report.T_star) > 1e-12 * max(1.0, report.T_star):
        raise InconsistentSetup(f"optimizer horizon {result.params.horizon!r} != certificate horizon {report.T_star!r}")
    if result.terminal.grid.n_cells != report.n_cells:
        raise InconsistentSetup(f"optimizer grid {result.terminal.grid.n_cells} cells != report grid {report.n_cells}")
    if mu is not None and abs(mu - report.mu) > 1e-12:
        raise InconsistentSetup("viscosity differs between optimizer and certificate")
    weights = (1.0, -report.theta, 1.0)
    PT = dirac_pairing(report.xi, weights, result.terminal)
    slack = PT - report.pairing_initial
    return ComparisonRecord(PT, report.pairing_initial, slack, budget, bool(slack >= -budget), not report.passed)
