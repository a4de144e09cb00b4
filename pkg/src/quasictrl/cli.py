"""Command-line entry point: ``quasictrl <command> --config <path> [--out <dir>]``.

Exit codes: 0 success, 1 runtime or certificate failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, dual, families
from . import obstruction as ob
from .cole_hopf import chain_verify, quasi_controls, quasi_initial_velocity, quasi_solution
from .config import EXPERIMENTS, RunConfig, load
from .control import ControlProblem, certificate_vs_optimizer, optimize, write_iteration_log
from .errors import CertificateInvalid, ConfigError, DivergedChain, QuasiCtrlError, SearchExhausted
from .heat import HeatProblem, solve_heat
from .numerics import (
    ControlSchedule,
    Grid,
    GridFunction,
    PhysicalParams,
    TimeGrid,
    format_float,
    read_grid_function_csv,
)
from .shallow_water import SWTrajectory, momentum_residual, simulate, xt_norm_monitor

log = logging.getLogger("quasictrl")


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_trajectory_csv(path: str, t: np.ndarray, x: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value"])
        for k, tk in enumerate(t):
            ts = format_float(tk)
            for xi, v in zip(x, values[k]):
                w.writerow([ts, format_float(xi), format_float(v)])


def _finite_or_none(v):
    return None if v is None or not np.isfinite(v) else float(v)


def physical_params(cfg: RunConfig) -> PhysicalParams:
    return PhysicalParams(cfg.mu(), cfg.get("physics.fr"), cfg.friction())


def grids(cfg: RunConfig, horizon: float | None = None) -> tuple[Grid, TimeGrid]:
    T = cfg.get("grid.horizon") if horizon is None else horizon
    return Grid(cfg.get("grid.n_cells")), TimeGrid(cfg.get("grid.n_steps"), T)


def analytic_family(cfg: RunConfig, prefix: str):
    """The named closed-form family, or None for 'adversarial' and 'csv'."""
    name = cfg.get(f"{prefix}.family")
    mu = cfg.mu()
    if name == "constant":
        return families.Constant(cfg.get(f"{prefix}.value"))
    if name == "separable":
        return families.Separable(cfg.get(f"{prefix}.amplitude"), mu)
    if name == "exponential":
        return families.Exponential(cfg.get(f"{prefix}.a"), mu)
    if name == "bump":
        return families.Bump(cfg.get(f"{prefix}.base"), cfg.get(f"{prefix}.height"),
                             cfg.get(f"{prefix}.center"), cfg.get(f"{prefix}.width"))
    return None


def profile(cfg: RunConfig, prefix: str, grid: Grid, sol: dual.DualSolution | None = None) -> GridFunction:
    name = cfg.get(f"{prefix}.family")
    fam = analytic_family(cfg, prefix)
    if fam is not None:
        f = families.initial(fam, grid)
    elif name == "csv":
        f = read_grid_function_csv(cfg.resolve_path(cfg.get(f"{prefix}.path")))
        if f.grid != grid:
            raise ConfigError(f"{prefix}.path has {f.grid.n_cells} cells, grid.n_cells is {grid.n_cells}")
    else:
        if sol is None:
            raise ConfigError(f"{prefix}.family = adversarial needs a dual datum (use obstruct)")
        delta, _ = dual.extract_delta(sol)
        f = ob.adversarial_h0(sol, delta, dual.U0_l2_bound(sol), grid).h0
    if np.any(f.values <= 0):
        raise ConfigError(f"{prefix} profile must be strictly positive")
    return f


def dual_solution(cfg: RunConfig) -> tuple[dual.DualSolution, dict]:
    xi = tuple(cfg.get("dual.xi"))
    theta, T = cfg.get("dual.theta"), cfg.get("dual.T_star")
    mu = cfg.mu()
    samples = cfg.get("dual.time_samples")
    search = None
    if T == "search":
        T = dual.find_Tstar_for_theta(xi, theta, mu, samples)
        search = "T_star"
    elif theta == "search":
        theta = dual.find_theta_for_T(xi, T, mu, samples)
        search = "theta"
    sol = dual.build_dual(dual.DualData(xi, theta, T, mu))
    return sol, {"search": search}


# commands


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    params = physical_params(cfg)
    grid, tg = grids(cfg)
    fam = analytic_family(cfg, "h0")
    h0 = profile(cfg, "h0", grid)
    if hasattr(fam, "velocity"):
        u0 = GridFunction(grid, fam.velocity(0.0, grid.x))
    else:
        u0 = quasi_initial_velocity(h0, params.mu)
    if cfg.get("simulate.controls") == "quasi" and hasattr(fam, "velocity"):
        controls = ControlSchedule(tg, fam.velocity(tg.t, 0.0), fam.velocity(tg.t, 1.0))
    else:
        controls = ControlSchedule.constant(tg, u0.values[0], u0.values[-1])
    traj = simulate(h0, u0, controls, params)
    write_trajectory_csv(os.path.join(out, "h.csv"), tg.t, grid.x, traj.h)
    write_trajectory_csv(os.path.join(out, "u.csv"), tg.t, grid.x, traj.u)
    report = {"monitor": xt_norm_monitor(traj), "positive": traj.positive}
    if tg.n_levels >= 3:
        res = momentum_residual(traj, params)
        report["momentum_residual"] = {"max": float(res.max()), "terminal": float(res[-1])}
        if hasattr(fam, "velocity") and params.quasi_consistent:
            t = tg.t[:, None]
            exact = SWTrajectory(grid, tg, fam(t, grid.x[None, :]), fam.velocity(t, grid.x[None, :]), params)
            report["quasi_solution_residual"] = float(momentum_residual(exact, params).max())
    write_json(os.path.join(out, "monitor.json"), report)
    return 0


def cmd_certificate(cfg: RunConfig, out: str) -> int:
    try:
        sol, info = dual_solution(cfg)
    except SearchExhausted as exc:
        write_json(os.path.join(out, "certificate.json"), {"holds": False, "error": str(exc)})
        raise
    rep = dual.certificate_report(sol, cfg.get("dual.time_samples"))
    data = dict(rep.__dict__, **info)
    write_json(os.path.join(out, "certificate.json"), data)
    return 0


def _random_controls(tg: TimeGrid, left0: float, right0: float, rng: np.random.Generator) -> ControlSchedule:
    s = tg.t / tg.horizon
    a = rng.normal(0.0, 1.0, (2, 4))
    modes = np.array([np.sin((k + 1) * np.pi * s / 2.0) for k in range(4)])
    return ControlSchedule(tg, left0 * np.exp(a[0] @ modes), right0 * np.exp(a[1] @ modes))


def cmd_obstruct(cfg: RunConfig, out: str) -> int:
    sol, info = dual_solution(cfg)
    cert = dual.certificate_report(sol, cfg.get("dual.time_samples"))
    write_json(os.path.join(out, "certificate.json"), dict(cert.__dict__, **info))
    if not cert.holds:
        raise CertificateInvalid(f"sign certificate fails for T*={sol.T_star}, theta={sol.theta}")
    params = physical_params(cfg)
    grid, tg = grids(cfg, horizon=sol.T_star)
    h0 = profile(cfg, "h0", grid, sol)
    case = cfg.get("obstruct.case")
    samples = cfg.get("dual.time_samples")
    if case == "null":
        K = cfg.get("obstruct.K")
        report = ob.null_control_obstruction(sol, h0, K, samples)
        target, h1 = K, GridFunction(grid, np.full(grid.n_nodes, K))
    else:
        h1 = profile(cfg, "h1", grid, sol)
        report = ob.target_obstruction(sol, h0, h1, samples)
        target = h1

    reference = ControlSchedule.constant(tg, h0.values[0], h0.values[-1])
    ref_traj = solve_heat(HeatProblem(sol.mu, h0, reference))
    report.attach(ob.duality_terms(ref_traj, reference, sol, h0))

    rng = np.random.default_rng(cfg.get("obstruct.seed"))
    suite = {"constant": reference}
    for j in range(cfg.get("obstruct.random_controls")):
        suite[f"random{j}"] = _random_controls(tg, h0.values[0], h0.values[-1], rng)
    comparison = None
    if cfg.get("obstruct.compare_optimizer"):
        problem = ControlProblem(sol.mu, h0, h1, tg)
        result = optimize(problem, cfg.get("optimizer.iterations"), cfg.get("optimizer.knots"),
                          step0=cfg.get("optimizer.step0"), gradient_check=False)
        suite["optimizer"] = result.controls
        budget = cfg.get("obstruct.budget")
        comparison = certificate_vs_optimizer(result, report, budget, sol.mu).to_dict()
        comparison["misfit"] = result.misfit
        comparison["misfit_floor"] = report.gap**2 * grid.dx
    rows = ob.theorem_experiment(sol, h0, target, suite, params, report, cfg.get("obstruct.budget"))
    ob.write_experiment_csv(rows, os.path.join(out, "experiment.csv"))
    data = report.to_dict()
    data["u_H1_lower_bound"] = _finite_or_none(data["u_H1_lower_bound"])
    data["suite_passed"] = all(r.passed for r in rows)
    if comparison is not None:
        data["optimizer_comparison"] = comparison
    write_json(os.path.join(out, "obstruction.json"), data)
    return 0


def cmd_chain(cfg: RunConfig, out: str) -> int:
    params = physical_params(cfg)
    grid, tg = grids(cfg)
    fam = analytic_family(cfg, "h0")
    if cfg.get("chain.source") == "analytic":
        if fam is None or isinstance(fam, families.Bump):
            raise ConfigError("chain.source = analytic needs h0.family constant, separable or exponential")
        heat = families.sample(fam, grid, tg)
        traj = quasi_solution(heat, params)
        controls = quasi_controls(heat, params)
    else:
        h0 = profile(cfg, "h0", grid)
        u0 = quasi_initial_velocity(h0, params.mu)
        controls = ControlSchedule.constant(tg, u0.values[0], u0.values[-1])
        traj = simulate(h0, u0, controls, params)
    bad = cfg.get("chain.corrupt")
    if bad:
        traj = SWTrajectory(grid, tg, traj.h, traj.u + bad, params, traj.positive)
        controls = ControlSchedule(tg, controls.left + bad, controls.right + bad)
    path = os.path.join(out, "chain.json")
    try:
        report = chain_verify(traj, controls, params, cfg.get("chain.tol"))
    except DivergedChain as exc:
        if exc.report is not None:
            write_json(path, exc.report.__dict__)
        raise
    write_json(path, report.__dict__)
    return 0


def cmd_optimize(cfg: RunConfig, out: str) -> int:
    grid, tg = grids(cfg)
    h0 = profile(cfg, "h0", grid)
    h1 = profile(cfg, "h1", grid)
    problem = ControlProblem(cfg.mu(), h0, h1, tg)
    result = optimize(problem, cfg.get("optimizer.iterations"), cfg.get("optimizer.knots"),
                      step0=cfg.get("optimizer.step0"))
    write_iteration_log(result.log, os.path.join(out, "iterations.csv"))
    write_json(os.path.join(out, "result.json"), result.to_dict())
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "certificate": cmd_certificate,
    "obstruct": cmd_obstruct,
    "chain": cmd_chain,
    "optimize": cmd_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasictrl", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _metadata(command: str, cfg_path: str) -> dict:
    with open(cfg_path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return {
        "command": command,
        "config": os.path.abspath(cfg_path),
        "config_sha256": digest,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(f"config experiment is {cfg.experiment!r}, command is {args.command!r}")
        out = args.out or cfg.resolve_path(cfg.get("output.dir"))
        os.makedirs(out, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"quasictrl: config error: {exc}", file=sys.stderr)
        return 2
    try:
        code = COMMANDS[args.command](cfg, out)
        write_json(os.path.join(out, "metadata.json"), _metadata(args.command, args.config))
        return code
    except ConfigError as exc:
        print(f"quasictrl: config error: {exc}", file=sys.stderr)
        return 2
    except (QuasiCtrlError, ValueError, ArithmeticError) as exc:
        print(f"quasictrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        log.exception("unexpected failure")
        print(f"quasictrl: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
