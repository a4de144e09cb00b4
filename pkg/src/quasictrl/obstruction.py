"""Duality pairings between controlled heat solutions and the dual certificate.

For h_t = mu h_xx with boundary data (v6, v7) and U from :mod:`quasictrl.dual`,

    B + P_T - P_0 = 0,
    B   = -mu int_0^T (U_x(t,0) v6(t) - U_x(t,1) v7(t)) dt,
    P_T = h(T, xi0) - theta h(T, xi1) + h(T, xi2),
    P_0 = int_0^1 U(0, x) h0(x) dx.

When the sign certificate holds and the controls are positive, B <= 0, hence
P_T >= P_0 for every admissible control. That inequality is the obstruction.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import dual
from .cole_hopf import quasi_solution
from .errors import BadDelta, CertificateInvalid, HorizonMismatch, NoPositiveDelta
from .heat import HeatProblem, HeatTrajectory, solve_heat
from .numerics import (
    ControlSchedule,
    Grid,
    GridFunction,
    PhysicalParams,
    derivative_values,
    format_float,
    h1_norm,
    time_integral,
    trapezoid_integral,
)

SMOOTHING_NODES = 20_001


def boundary_flux(sol: dual.DualSolution, tau) -> tuple[np.ndarray, np.ndarray]:
    """Raw U_x at both walls, rebuilt from the scaled fluxes so nothing cancels."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    left, right = dual.scaled_boundary_flux(sol, tau)
    d0 = min(sol.points)
    d1 = 1.0 - max(sol.points)
    return left * dual._leading_scale(d0, sol.mu, tau), right * dual._leading_scale(d1, sol.mu, tau)


def dirac_pairing(points, weights, f: GridFunction) -> float:
    """Sum of weights times the cubic-spline interpolant of ``f`` at ``points``."""
    spline = CubicSpline(f.x, f.values)
    return float(np.dot(weights, spline(np.asarray(points, dtype=float))))


def point_pairing(sol: dual.DualSolution, f: GridFunction) -> float:
    return dirac_pairing(sol.points, sol.weights, f)


def smoothed_pairing(sol: dual.DualSolution, f: GridFunction, tau: float = dual.TAU_MIN) -> float:
    """Pairing of ``f`` with U at backward time ``tau`` on a fine quadrature grid."""
    x = np.linspace(0.0, 1.0, SMOOTHING_NODES)
    vals = CubicSpline(f.x, f.values)(x) * dual.eval_U_images(sol, tau, x)
    return float(np.trapezoid(vals, x)) if hasattr(np, "trapezoid") else float(np.trapz(vals, x))


def initial_pairing(sol: dual.DualSolution, h0: GridFunction) -> float:
    return trapezoid_integral(h0.with_values(dual.eval_U(sol, 0.0, h0.x) * h0.values))


@dataclass
class DualityTerms:
    boundary_term: float
    pairing_terminal: float
    pairing_terminal_smoothed: float
    pairing_initial: float

    @property
    def residual(self) -> float:
        return self.boundary_term + self.pairing_terminal - self.pairing_initial


def _check_horizon(T: float, sol: dual.DualSolution):
    if abs(T - sol.T_star) > 1e-12 * max(1.0, sol.T_star):
        raise HorizonMismatch(f"heat horizon {T!r} differs from dual horizon {sol.T_star!r}")


def duality_terms(heat_traj: HeatTrajectory, controls: ControlSchedule, sol: dual.DualSolution,
                  h0: GridFunction, mu: float | None = None) -> DualityTerms:
    tg = heat_traj.time_grid
    _check_horizon(tg.horizon, sol)
    mu = sol.mu if mu is None else mu
    if not controls.is_positive():
        raise ValueError("duality pairing expects strictly positive controls")
    tau = np.maximum(sol.T_star - tg.t, dual.TAU_MIN)
    ux0, ux1 = boundary_flux(sol, tau)
    B = -mu * time_integral(ux0 * controls.left - ux1 * controls.right, tg)
    hT = heat_traj[-1]
    return DualityTerms(
        boundary_term=B,
        pairing_terminal=point_pairing(sol, hT),
        pairing_terminal_smoothed=smoothed_pairing(sol, hT),
        pairing_initial=initial_pairing(sol, h0),
    )


def duality_residual(heat_traj: HeatTrajectory, controls: ControlSchedule, sol: dual.DualSolution,
                     h0: GridFunction) -> float:
    """B + P_T - P_0; zero for exact solutions, so it measures discretization error."""
    return duality_terms(heat_traj, controls, sol, h0).residual


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def plateau_profile(x: np.ndarray, delta: float) -> np.ndarray:
    """1 on (delta/4, 3delta/4), 0 outside (delta/8, 7delta/8), C^2 in between."""
    w = delta / 8.0
    rise = _smoothstep((x - w) / w)
    fall = 1.0 - _smoothstep((x - 6.0 * w) / w)
    return np.minimum(rise, fall)


@dataclass
class AdversarialDatum:
    h0: GridFunction
    plateau: float
    pairing_initial: float


def adversarial_h0(sol: dual.DualSolution, delta: float, C_star: float, grid: Grid) -> AdversarialDatum:
    """Initial depth with plateaus 4 C*/delta^3 next to both walls and value 1 elsewhere."""
    if not 0 < delta < 0.5:
        raise BadDelta(f"delta must lie in (0, 1/2), got {delta!r}")
    if not C_star > 0:
        raise ValueError("C_star must be positive")
    plateau = 4.0 * C_star / delta**3
    x = grid.x
    bumps = plateau_profile(x, delta) + plateau_profile(1.0 - x, delta)
    values = 1.0 + (plateau - 1.0) * bumps
    values[0] = values[-1] = 1.0
    h0 = GridFunction(grid, values)
    return AdversarialDatum(h0, plateau, initial_pairing(sol, h0))


@dataclass
class ObstructionReport:
    case: str
    xi: list
    theta: float
    T_star: float
    mu: float
    n_cells: int
    delta: float | None
    C_star: float
    pairing_initial: float
    pairing_target: float
    gap: float
    passed: bool
    u_H1_lower_bound: float | None = None
    duality_residual: float | None = None
    pairing_terminal: float | None = None
    pairing_terminal_smoothed: float | None = None
    boundary_term: float | None = None
    extras: dict = field(default_factory=dict)

    def attach(self, terms: DualityTerms) -> "ObstructionReport":
        self.duality_residual = terms.residual
        self.pairing_terminal = terms.pairing_terminal
        self.pairing_terminal_smoothed = terms.pairing_terminal_smoothed
        self.boundary_term = terms.boundary_term
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _require_certificate(sol: dual.DualSolution, time_samples: int) -> dual.SignCertificate:
    cert = dual.verify_sign_certificate(sol, time_samples)
    if not cert.holds:
        raise CertificateInvalid(
            f"sign certificate fails at t={cert.worst_t:.6g} "
            f"(left margin {cert.min_margin_left:.3e}, right margin {cert.max_margin_right:.3e})"
        )
    return cert


def _delta_or_none(sol):
    try:
        return dual.extract_delta(sol)[0]
    except NoPositiveDelta:
        return None


def _base_report(case, sol, h0, pairing_target, gap, time_samples):
    _require_certificate(sol, time_samples)
    return ObstructionReport(
        case=case,
        xi=list(sol.points),
        theta=float(sol.theta),
        T_star=float(sol.T_star),
        mu=float(sol.mu),
        n_cells=h0.grid.n_cells,
        delta=_delta_or_none(sol),
        C_star=dual.U0_l2_bound(sol),
        pairing_initial=0.0,
        pairing_target=float(pairing_target),
        gap=0.0,
        passed=False,
    )


def null_control_obstruction(sol: dual.DualSolution, h0: GridFunction, K: float,
                             time_samples: int = 10_000) -> ObstructionReport:
    """Certified distance from every reachable h(T) to the constant state K.

    Since B <= 0 and K(2 - theta) <= 0, any control reaching K would force
    P_0 <= 0; a positive P_0 therefore yields the node-distance bound
    ``max_j |h(T, xi_j) - K| >= P_0 / (2 + theta)``.
    """
    if sol.theta < 2:
        raise CertificateInvalid(f"the null-control argument needs theta >= 2, got {sol.theta!r}")
    if not K > 0:
        raise ValueError("K must be positive")
    if np.any(h0.values <= 0):
        raise ValueError("h0 must be strictly positive")
    report = _base_report("null", sol, h0, K * (2.0 - sol.theta), 0.0, time_samples)
    P0 = initial_pairing(sol, h0)
    report.pairing_initial = P0
    report.gap = max(0.0, P0) / (2.0 + sol.theta)
    report.passed = report.gap > 0
    return report


def velocity_lower_bound(sol: dual.DualSolution, h1_at_points: np.ndarray, pairing_target: float,
                         pairing_initial: float) -> float | None:
    """Lower bound on |u(T) - u1|_{L2} (hence H1) for quasi-solutions, or None.

    Writing h(T) = K hhat1 exp(-phi) with phi = int_0^x (u - u1)/mu, the
    inequality P_T >= P_0 >= 0 forces |exp(-phi(xi_j)) - 1| >= beta at some j,
    beta = -P_1 / ((2 + theta) max_j h1(xi_j)), independently of K. Then
    |phi(xi_j)| >= log(1 + beta) and Cauchy-Schwarz gives the bound.
    """
    if pairing_target >= 0 or pairing_initial < 0:
        return None
    s = float(np.sum(np.abs(sol.weights)))
    beta = -pairing_target / (s * float(np.max(h1_at_points)))
    return sol.mu * math.log1p(beta) / math.sqrt(max(sol.points))


def target_obstruction(sol: dual.DualSolution, h0: GridFunction, h1: GridFunction,
                       time_samples: int = 10_000) -> ObstructionReport:
    """Certified node distance from every reachable h(T) to the target h1."""
    if np.any(h0.values <= 0) or np.any(h1.values <= 0):
        raise ValueError("h0 and h1 must be strictly positive")
    P1 = point_pairing(sol, h1)
    report = _base_report("target", sol, h0, P1, 0.0, time_samples)
    P0 = initial_pairing(sol, h0)
    report.pairing_initial = P0
    report.gap = max(0.0, P0 - P1) / float(np.sum(np.abs(sol.weights)))
    report.passed = report.gap > 0
    h1_pts = CubicSpline(h1.x, h1.values)(np.asarray(sol.points))
    report.u_H1_lower_bound = velocity_lower_bound(sol, h1_pts, P1, P0)
    return report


@dataclass
class ExperimentRow:
    control_id: str
    terminal_pairing: float
    u_H1_distance: float
    gap: float
    passed: bool


def row_threads() -> int:
    try:
        return max(1, int(os.environ.get("QUASICTRL_THREADS", "1")))
    except ValueError:
        return 1


def terminal_velocity(h: GridFunction, mu: float) -> GridFunction:
    return h.with_values(-mu * derivative_values(np.log(h.values), h.grid.dx))


def theorem_experiment(sol: dual.DualSolution, h0: GridFunction, target, control_suite: dict,
                       params: PhysicalParams, report: ObstructionReport | None = None,
                       budget: float = 1e-2) -> list[ExperimentRow]:
    """Run every control in ``control_suite`` and tabulate pairings and velocity distances.

    ``target`` is a float K (null-control case, u1 = 0) or a GridFunction h1.
    A row passes when its terminal pairing is at least P_0 - budget.
    """
    mu = params.mu
    P0 = initial_pairing(sol, h0)
    if isinstance(target, GridFunction):
        u1 = terminal_velocity(target, mu).values
    else:
        u1 = np.zeros(h0.grid.n_nodes)
    gap = report.gap if report is not None else math.nan

    def run(item):
        cid, controls = item
        _check_horizon(controls.time_grid.horizon, sol)
        traj = solve_heat(HeatProblem(mu, h0, controls))
        sw = quasi_solution(traj, params)
        uT = GridFunction(h0.grid, sw.u[-1])
        dist = h1_norm(uT.with_values(uT.values - u1))
        pairing = point_pairing(sol, traj[-1])
        return ExperimentRow(str(cid), pairing, dist, gap, bool(pairing >= P0 - budget))

    items = list(control_suite.items())
    if not items:
        return []
    workers = min(row_threads(), len(items))
    if workers == 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, items))


def write_experiment_csv(rows: list[ExperimentRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["control_id", "terminal_pairing", "u_H1_distance", "gap", "passed"])
        for r in rows:
            writer.writerow([r.control_id, format_float(r.terminal_pairing), format_float(r.u_H1_distance),
                             format_float(r.gap), str(r.passed).lower()])
