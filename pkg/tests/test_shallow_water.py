import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasictrl import families
from quasictrl.cole_hopf import quasi_controls, quasi_initial_velocity
from quasictrl.errors import CFLViolation, IncompatibleData, PositivityLoss
from quasictrl.heat import HeatProblem, solve_heat
from quasictrl.numerics import ControlSchedule, Grid, GridFunction, PhysicalParams, TimeGrid, l2_norm, trapezoid_integral
from quasictrl.shallow_water import (
    SWState,
    SWTrajectory,
    advance_mass,
    check_compatibility,
    mass_fluxes,
    max_stable_dt,
    momentum_residual,
    simulate,
    step,
    xt_norm_monitor,
)

P = PhysicalParams(1.0, 1.0)


def const_state(n, h=1.0, u=0.0):
    g = Grid(n)
    return SWState(GridFunction(g, np.full(n + 1, h)), GridFunction(g, np.full(n + 1, u)))


def sampled(family, n_cells, n_steps, T):
    g, tg = Grid(n_cells), TimeGrid(n_steps, T)
    t, x = tg.t[:, None], g.x[None, :]
    return SWTrajectory(g, tg, family(t, x), family.velocity(t, x), P)


def test_check_compatibility():
    g, tg = Grid(4), TimeGrid(2, 1.0)
    zero = GridFunction(g, np.zeros(5))
    assert check_compatibility(zero, ControlSchedule.constant(tg, 0.0), 1e-12)
    one = GridFunction(g, [1.0, 0, 0, 0, 0])
    assert not check_compatibility(one, ControlSchedule.constant(tg, 0.0), 1e-12)
    with pytest.raises(ValueError):
        check_compatibility(zero, ControlSchedule.constant(tg, 0.0), 0.0)


def test_quasi_controls_are_compatible():
    g, tg = Grid(64), TimeGrid(16, 0.1)
    f = families.Separable(0.1)
    h = families.sample(f, g, tg)
    u0 = quasi_initial_velocity(h[0], 1.0)
    assert check_compatibility(u0, quasi_controls(h, P), 1e-12)


def test_stationary_fixed_point():
    s = const_state(32, 1.7)
    new = step(s, P, 0.01, 0.0, 0.0)
    assert np.array_equal(new.h.values, s.h.values)
    assert np.array_equal(new.u.values, s.u.values)


def test_uniform_flow_decays_by_friction():
    eps, dt = 1e-2, 1e-3
    s = const_state(64, 1.0, eps)
    new = step(s, P, dt, eps, eps)
    assert np.allclose(new.h.values, 1.0, atol=1e-15)
    assert new.u.values[32] == pytest.approx(eps * (1 - P.r * dt), abs=10 * eps * dt**2)


def test_quasi_solution_one_step_local_error():
    f = families.Separable(0.1)
    errs = []
    for n in (32, 64, 128):
        g, dt = Grid(n), 0.1 / n
        s = SWState(GridFunction(g, f(0.0, g.x)), GridFunction(g, f.velocity(0.0, g.x)))
        new = step(s, P, dt, f.velocity(dt, 0.0), f.velocity(dt, 1.0))
        err = np.hypot(l2_norm(new.h.with_values(new.h.values - f(dt, g.x))),
                       l2_norm(new.u.with_values(new.u.values - f.velocity(dt, g.x))))
        errs.append(err / dt)
    # error per unit time is O(dt + dx^2)
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


def test_cfl_violation():
    s = const_state(16, 1.0, 2.0)
    with pytest.raises(CFLViolation):
        step(s, P, 2 * max_stable_dt(s), 2.0, 2.0)


def test_positivity_loss_reports_time_index():
    n, U = 16, 1.0
    g = Grid(n)
    u = np.full(n + 1, U)
    u[0] = -U
    h0, u0 = GridFunction(g, np.ones(n + 1)), GridFunction(g, u)
    dt = max_stable_dt(SWState(h0, u0)) * (1 + 1e-12)
    controls = ControlSchedule(TimeGrid(3, 3 * dt), -U, U)
    with pytest.raises(PositivityLoss) as info:
        simulate(h0, u0, controls, P)
    assert info.value.time_index == 1


def test_incompatible_controls_rejected():
    s = const_state(8)
    with pytest.raises(IncompatibleData):
        simulate(s.h, s.u, ControlSchedule.constant(TimeGrid(4, 0.1), 0.5), P)


def test_constant_trajectory():
    s = const_state(16, 2.0)
    traj = simulate(s.h, s.u, ControlSchedule.constant(TimeGrid(10, 1.0), 0.0), P)
    assert np.all(traj.h == 2.0) and np.all(traj.u == 0.0) and traj.positive
    assert np.all(momentum_residual(traj, P) == 0.0)
    mon = xt_norm_monitor(traj)
    assert mon["sup_h_H2"] == pytest.approx(2.0) and mon["u_L2H2"] == 0 and mon["u_H1L2"] == 0


def simulate_quasi(n):
    g, tg = Grid(n), TimeGrid(n, 0.1)
    f = families.Separable(0.1)
    h0 = families.initial(f, g)
    u0 = GridFunction(g, f.velocity(0.0, g.x))
    controls = ControlSchedule(tg, f.velocity(tg.t, 0.0), f.velocity(tg.t, 1.0))
    traj = simulate(h0, u0, controls, P)
    return traj, f


def test_simulate_quasi_solution_converges():
    errs = []
    for n in (64, 128, 256):
        traj, f = simulate_quasi(n)
        errs.append(l2_norm(GridFunction(traj.grid, traj.h[-1] - f(0.1, traj.grid.x))))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8


def test_monitor_bounded_under_refinement():
    mons = [xt_norm_monitor(simulate_quasi(n)[0]) for n in (32, 64, 128)]
    for key in mons[0]:
        vals = [m[key] for m in mons]
        assert all(np.isfinite(vals)) and min(vals) >= 0
        assert max(vals) <= 1.1 * min(vals) + 1e-12


def test_sampled_quasi_residual_converges():
    res = [momentum_residual(sampled(families.Separable(0.1), n, n * n // 8, 0.1), P).max()
           for n in (16, 32, 64)]
    assert res[0] / res[1] >= 3 and res[1] / res[2] >= 3


def test_exponential_residual_and_cancellation():
    f = families.Exponential(1.0, 1.0)
    r1 = momentum_residual(sampled(f, 128, 128, 0.1), P).max()
    r2 = momentum_residual(sampled(f, 256, 256, 0.1), P).max()
    assert r2 <= 5e-3 and r1 / r2 >= 3
    h = f(0.0, Grid(8).x)
    assert np.allclose(P.r * h * f.velocity(0.0, 0.0) + h * 1.0 / P.fr**2, 0.0, atol=1e-14)


def test_non_solution_residual_bounded_away():
    res = []
    for n in (32, 64, 128):
        g, tg = Grid(n), TimeGrid(n, 0.1)
        heat = families.sample(families.Separable(0.5), g, tg)
        traj = SWTrajectory(g, tg, heat.values, np.zeros_like(heat.values), P)
        res.append(momentum_residual(traj, P).max())
    assert min(res) > 0.1
    assert res[-1] >= 0.9 * res[0]


states = st.integers(0, 10**6)


@settings(max_examples=40, deadline=None)
@given(states)
def test_mass_balance(seed):
    r = np.random.default_rng(seed)
    n = 24
    g = Grid(n)
    h = 1.0 + 0.5 * r.uniform(size=n + 1)
    u = r.normal(0, 1, n + 1)
    dt = 0.5 * g.dx / np.max(np.abs(u))
    h_new = advance_mass(h, u, dt, g.dx)
    change = trapezoid_integral(GridFunction(g, h_new)) - trapezoid_integral(GridFunction(g, h))
    expected = -dt * (h[-1] * u[-1] - h[0] * u[0])
    assert change == pytest.approx(expected, abs=1e-13)
    flux = mass_fluxes(h, u)
    assert flux[0] == h[0] * u[0] and flux[-1] == h[-1] * u[-1]


@settings(max_examples=40, deadline=None)
@given(states)
def test_positivity_or_error(seed):
    r = np.random.default_rng(seed)
    n = 16
    g = Grid(n)
    h = np.exp(r.normal(0, 1, n + 1))
    u = r.normal(0, 2, n + 1)
    s = SWState(GridFunction(g, h), GridFunction(g, u))
    try:
        new = step(s, P, max_stable_dt(s), u[0], u[-1])
    except PositivityLoss:
        return
    assert np.all(new.h.values > 0)
