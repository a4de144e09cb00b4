import math

import numpy as np
import pytest

from quasictrl import families
from quasictrl.cole_hopf import (
    PotentialState,
    ReducedControls,
    chain_verify,
    quasi_controls,
    quasi_initial_velocity,
    quasi_solution,
    v3_from_trace,
    v5_from_v3,
    velocity_to_w,
)
from quasictrl.errors import DivergedChain, PositivityLoss, PotentialOverflow
from quasictrl.heat import HeatTrajectory
from quasictrl.numerics import ControlSchedule, Grid, GridFunction, PhysicalParams, TimeGrid
from quasictrl.shallow_water import SWTrajectory

P = PhysicalParams(1.0, 1.0)


def test_velocity_to_w_examples():
    g = Grid(16)
    assert np.all(velocity_to_w(GridFunction(g, np.zeros(17)), 1.0, 0.0).values == 0)
    mu = 0.7
    w = velocity_to_w(GridFunction(g, np.full(17, mu)), mu, 0.0)
    assert np.allclose(w.values, -g.x, atol=1e-15)
    g = Grid(512)
    x = g.x
    u = -np.pi * np.cos(np.pi * x) / (1 + 0.1 * np.sin(np.pi * x)) * 0.1
    w = velocity_to_w(GridFunction(g, u), 1.0, 0.0)
    assert np.max(np.abs(w.values - np.log(1 + 0.1 * np.sin(np.pi * x)))) <= 1e-6


def test_velocity_to_w_affine_and_shift(rng):
    g = Grid(32)
    a, b = rng.normal(size=33), rng.normal(size=33)
    wa = velocity_to_w(GridFunction(g, a), 2.0, 0.0).values
    wb = velocity_to_w(GridFunction(g, b), 2.0, 0.0).values
    wab = velocity_to_w(GridFunction(g, 3 * a - b), 2.0, 0.0).values
    assert np.allclose(wab, 3 * wa - wb, atol=1e-12)
    shifted = velocity_to_w(GridFunction(g, a), 2.0, 1.5).values
    assert shifted[0] == 1.5
    assert np.allclose(shifted, wa + 1.5, atol=1e-14)


def test_v3_examples():
    assert v3_from_trace(0.0, 0.0, 1.0) == 0.0
    assert v3_from_trace(1.0, 0.0, 1.0) == -1.0
    with pytest.raises(ValueError):
        v3_from_trace(1.0, 0.0, 0.0)
    # h0 = 1 + 0.1 sin(pi x): u(0) = -0.1 pi and u_x(0) = pi^2 0.01, so v3 = 0
    exact = -(0.1 * math.pi) ** 2 + math.pi**2 * 0.01
    g = Grid(1024)
    u0 = families.Separable(0.1).velocity(0.0, g.x)
    ux0 = (-3 * u0[0] + 4 * u0[1] - u0[2]) / (2 * g.dx)
    assert v3_from_trace(u0[0], ux0, 1.0) == pytest.approx(exact, abs=1e-5)
    # traces of the numerically derived velocity converge at first order
    errs = []
    for n in (256, 512, 1024):
        g = Grid(n)
        u = quasi_initial_velocity(families.initial(families.Separable(0.1), g), 1.0).values
        errs.append(abs(v3_from_trace(u[0], (-3 * u[0] + 4 * u[1] - u[2]) / (2 * g.dx), 1.0) - exact))
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


def test_v5_examples():
    tg = TimeGrid(10, 1.0)
    assert np.all(v5_from_v3(np.zeros(11), tg) == 0)
    assert np.allclose(v5_from_v3(np.full(11, 2.5), tg), -2.5 * tg.t, atol=1e-14)
    tg = TimeGrid(10_000, 1.0)
    v5 = v5_from_v3(np.sin(tg.t), tg)
    assert v5[0] == 0.0
    assert np.max(np.abs(v5 - (np.cos(tg.t) - 1))) <= 1e-6


def test_quasi_solution_constant():
    g, tg = Grid(8), TimeGrid(4, 0.1)
    heat = HeatTrajectory(g, tg, np.full((5, 9), 3.0))
    traj = quasi_solution(heat, P)
    assert np.all(traj.u == 0)
    c = quasi_controls(heat, P)
    assert np.all(c.left == 0) and np.all(c.right == 0)


def test_quasi_solution_separable_closed_form():
    g, tg = Grid(256), TimeGrid(8, 0.1)
    f = families.Separable(0.1)
    traj = quasi_solution(families.sample(f, g, tg), P)
    exact = f.velocity(tg.t[:, None], g.x[None, :])
    assert np.max(np.abs(traj.u - exact)) < 1e-4
    c = quasi_controls(families.sample(f, g, tg), P)
    amp = 0.1 * math.pi * np.exp(-math.pi**2 * tg.t)
    assert np.allclose(c.left, -amp, atol=1e-4) and np.allclose(c.right, amp, atol=1e-4)


def test_quasi_solution_exponential_constant_velocity():
    g, tg = Grid(64), TimeGrid(8, 0.1)
    f = families.Exponential(1.3, 1.0)
    heat = families.sample(f, g, tg)
    assert np.allclose(quasi_solution(heat, P).u, -1.3, atol=1e-10)
    c = quasi_controls(heat, P)
    assert np.allclose(c.left, -1.3, atol=1e-10) and np.allclose(c.right, -1.3, atol=1e-10)


def test_quasi_solution_preconditions():
    g, tg = Grid(8), TimeGrid(2, 0.1)
    with pytest.raises(PositivityLoss):
        quasi_solution(HeatTrajectory(g, tg, np.zeros((3, 9))), P)
    with pytest.raises(ValueError):
        quasi_solution(HeatTrajectory(g, tg, np.ones((3, 9))), PhysicalParams(1.0, 1.0, r=0.2))


def round_trip_error(n):
    g, tg = Grid(n), TimeGrid(4, 0.1)
    h = families.sample(families.Separable(0.5), g, tg)
    traj = quasi_solution(h, P)
    errs = [np.max(np.abs(velocity_to_w(GridFunction(g, traj.u[k]), 1.0, math.log(h.values[k, 0])).values
                          - np.log(h.values[k]))) for k in range(len(tg.t))]
    return max(errs)


def test_round_trip_second_order():
    e = [round_trip_error(n) for n in (32, 64, 128)]
    assert e[-1] < 1e-4
    assert e[0] / e[1] >= 3 and e[1] / e[2] >= 3


def test_overflow_guard():
    g = Grid(4)
    with pytest.raises(PotentialOverflow):
        PotentialState(GridFunction(g, np.full(5, 701.0)))
    s = PotentialState(GridFunction(g, np.full(5, 0.5)))
    assert np.allclose(s.depth().values, math.exp(0.5))


def test_reduced_controls_invariant():
    tg = TimeGrid(4, 1.0)
    v3 = np.ones(5)
    ok = ReducedControls(tg, v3, np.zeros(5), v5_from_v3(v3, tg))
    assert np.all(ok.v6 > 0) and np.all(ok.v7 == 1.0)
    with pytest.raises(ValueError):
        ReducedControls(tg, v3, np.zeros(5), np.zeros(5))
    ReducedControls(tg, v3, np.zeros(5), np.zeros(5), heat_compatible=False)


def test_chain_constant():
    g, tg = Grid(16), TimeGrid(8, 0.1)
    traj = SWTrajectory(g, tg, np.ones((9, 17)), np.zeros((9, 17)), P)
    rep = chain_verify(traj, ControlSchedule.constant(tg, 0.0), P, 1e-12)
    assert rep.max_distance <= 1e-14 and rep.K_reconstructed == 1.0 and rep.K_integral == 0.0
    assert '"passed": true' in rep.to_json()


def separable_chain(n=256, corrupt=0.0):
    g, tg = Grid(n), TimeGrid(n, 0.1)
    heat = families.sample(families.Separable(0.1), g, tg)
    traj, c = quasi_solution(heat, P), quasi_controls(heat, P)
    if corrupt:
        traj = SWTrajectory(g, tg, traj.h, traj.u + corrupt, P)
        c = ControlSchedule(tg, c.left + corrupt, c.right + corrupt)
    return traj, c


def test_chain_separable_passes():
    traj, c = separable_chain()
    rep = chain_verify(traj, c, P, 1e-3)
    assert rep.passed and rep.max_distance <= 1e-3


def test_chain_corrupted_fails():
    traj, c = separable_chain(corrupt=0.1)
    with pytest.raises(DivergedChain) as info:
        chain_verify(traj, c, P, 1e-3)
    assert info.value.report is not None and not info.value.report.passed
    assert info.value.report.max_distance > 1e-3
