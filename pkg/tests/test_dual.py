import json
import math

import numpy as np
import pytest

from quasictrl import dual
from quasictrl.errors import NoPositiveDelta, SearchExhausted, TooCloseToSingularTime

from conftest import T_CERT, XI


def build(theta=2.0, T=T_CERT, xi=XI, mu=1.0):
    return dual.build_dual(dual.DualData(xi, theta, T, mu))


def brute_U(xi, theta, tau, x, mu=1.0, terms=50):
    """Independent plain-loop summation of the sine series."""
    total = 0.0
    for n in range(1, terms + 1):
        c = 2 * (math.sin(n * math.pi * xi[0]) - theta * math.sin(n * math.pi * xi[1]) + math.sin(n * math.pi * xi[2]))
        total += c * math.exp(-mu * n * n * math.pi**2 * tau) * math.sin(n * math.pi * x)
    return total


def test_data_validation():
    for bad in [dict(xi=(0.5, 0.25, 0.75)), dict(theta=0.0), dict(T_star=-1.0), dict(N_max=0)]:
        kwargs = dict(xi=XI, theta=2.0, T_star=0.1) | bad
        with pytest.raises(ValueError):
            dual.DualData(**kwargs)


def test_coefficients():
    sol = build()
    c = sol.coefficients
    assert c[0] == pytest.approx(2 * (math.sqrt(2) - 2), abs=1e-14)
    assert abs(c[1]) < 1e-14
    n = np.arange(1, len(c) + 1)
    # sin(n pi xi) loses about n ulps
    assert np.all(np.abs(c[1::2]) <= 1e-14 * n[1::2])
    assert np.all(np.abs(c) <= 2 * (2 + sol.theta) + 1e-12)
    single = dual.dirac_dual((0.5,), (2.0,), 0.1, N_max=8)
    assert np.allclose(single.coefficients, [4, 0, -4, 0, 4, 0, -4, 0], atol=1e-13)


def test_eval_U_walls_and_sign():
    sol = build(T=2.0)
    assert eval_both(sol, 0.5) == (0.0, 0.0)
    assert dual.eval_U(sol, 0.0, 0.5) < 0


def eval_both(sol, t):
    return dual.eval_U(sol, t, 0.0), dual.eval_U(sol, t, 1.0)


def test_single_dirac_value():
    sol = dual.dirac_dual((0.5,), (1.0,), 0.1)
    a = math.pi**2 * 0.1
    two_term = 2 * (math.exp(-a) + math.exp(-9 * a))
    assert dual.eval_U(sol, 0.0, 0.5) == pytest.approx(two_term, abs=1e-5)
    brute = sum(2 * math.sin(n * math.pi / 2) ** 2 * math.exp(-n * n * a) for n in range(1, 51))
    assert dual.eval_U(sol, 0.0, 0.5) == pytest.approx(brute, abs=1e-10)


def test_single_dirac_flux():
    sol = dual.dirac_dual((0.5,), (1.0,), 0.1)
    a = math.pi**2 * 0.1
    left, right = dual.eval_Ux_boundary(sol, 0.0)
    assert left == pytest.approx(2 * math.pi * (math.exp(-a) - 3 * math.exp(-9 * a) + 5 * math.exp(-25 * a)), abs=1e-9)
    assert left == pytest.approx(2.3393, abs=1e-3)
    assert right == pytest.approx(-left, abs=1e-12)


def test_flux_symmetry_and_large_time_sign():
    sol = build()
    left, right = dual.eval_Ux_boundary(sol, 0.0)
    assert right == pytest.approx(-left, rel=1e-12)
    late = build(T=2.0)
    assert dual.eval_Ux_boundary(late, 0.0)[0] < 0


def test_brute_force_agreement(rng):
    T = 0.2
    sol = build(T=T)
    for _ in range(100):
        tau = rng.uniform(0.01, T)
        x = rng.uniform(0, 1)
        assert dual.eval_U(sol, T - tau, x) == pytest.approx(brute_U(XI, 2.0, tau, x), abs=1e-10)


def test_images_match_series(rng):
    sol = build(T=0.2)
    x = rng.uniform(0, 1, 50)
    for tau in (0.01, 0.05, 0.2):
        assert np.allclose(dual.eval_U_images(sol, tau, x), dual.eval_U(sol, 0.2 - tau, x), atol=1e-12)


def test_scaled_flux_continuous_across_switch():
    sol = build(T=0.2)
    eps = 1e-9
    a = dual.scaled_boundary_flux(sol, np.array([dual.IMAGE_SWITCH - eps, dual.IMAGE_SWITCH + eps]))
    assert a[0][0] == pytest.approx(a[0][1], rel=1e-6)
    tau = np.array([0.02, 0.1])
    left, _ = dual.scaled_boundary_flux(sol, tau)
    raw = [dual.eval_Ux_boundary(sol, 0.2 - t)[0] / dual._leading_scale(0.25, 1.0, t) for t in tau]
    assert np.allclose(left, raw, rtol=1e-9)


def test_singular_time_guard():
    sol = build()
    with pytest.raises(TooCloseToSingularTime):
        dual.eval_U(sol, T_CERT - 1e-7, 0.5)
    with pytest.raises(TooCloseToSingularTime):
        dual.eval_Ux_boundary(sol, T_CERT)


def _d2_4th(f, h):
    return (-f(2 * h) + 16 * f(h) - 30 * f(0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h)


def _d1_4th(f, h):
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


def test_backward_residual(rng):
    T, mu = 0.3, 0.8
    sol = build(T=T, mu=mu)
    for _ in range(20):
        t = rng.uniform(0.0, T - 0.02)
        x = rng.uniform(0.1, 0.9)
        ut = _d1_4th(lambda s: dual.eval_U(sol, t + s, x), 2e-4)
        uxx = _d2_4th(lambda s: dual.eval_U(sol, t, x + s), 2e-3)
        assert abs(-ut - mu * uxx) <= 1e-6


def test_tail_bound(rng):
    sol = build(T=0.5)
    n = np.arange(1, 11)
    for _ in range(20):
        tau = rng.uniform(0.01, 0.5)
        x = rng.uniform(0, 1)
        terms = sol.coefficients[:10] * np.exp(-(n * math.pi) ** 2 * tau) * np.sin(n * math.pi * x)
        N = 5
        assert abs(terms[N:].sum()) <= dual.value_tail_bound(sol.amplitude, 1.0, tau, N)


def test_distributional_limit():
    sol = build(T=0.5)
    x = np.linspace(0, 1, 40_001)
    phi = x * (1 - x) * np.exp(x)
    target = np.dot(sol.weights, np.interp(XI, x, phi))
    errs = [abs(np.trapezoid(dual.eval_U(sol, 0.5 - tau, x) * phi, x) - target) for tau in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]


def test_symmetry():
    sol = build(xi=(0.2, 0.5, 0.8), T=0.1)
    x = np.linspace(0, 1, 101)
    assert np.allclose(dual.eval_U(sol, 0.03, x), dual.eval_U(sol, 0.03, 1 - x), atol=1e-12)


def test_certificate_holds_small_time():
    sol = build(T=0.005)
    cert = dual.verify_sign_certificate(sol, 100_000)
    assert cert.holds and cert.min_margin_left > 0 and cert.max_margin_right < 0


def test_certificate_fails_large_time():
    cert = dual.verify_sign_certificate(build(T=2.0))
    assert not cert.holds and cert.min_margin_left < 0
    left, _ = dual.scaled_boundary_flux(build(T=2.0), np.array([2.0]))
    assert left[0] < 0


def test_certificate_near_positive_datum():
    cert = dual.verify_sign_certificate(build(theta=1e-6, T=0.01))
    assert cert.holds


def test_certificate_sample_floor():
    with pytest.raises(ValueError):
        dual.verify_sign_certificate(build(), 10)


def test_find_Tstar():
    T = dual.find_Tstar_for_theta(XI, 2.0)
    assert 0 < T <= 1 and T == T_CERT
    assert dual.verify_sign_certificate(build(T=T)).min_margin_left >= 1e-10
    # the search returns the largest passing dyadic value
    assert not dual.verify_sign_certificate(build(T=2 * T)).holds
    assert dual.find_Tstar_for_theta(XI, 1e-6) == 1.0


def test_find_theta():
    theta = dual.find_theta_for_T(XI, 0.005)
    assert dual.verify_sign_certificate(build(theta=theta, T=0.005)).holds
    theta2 = dual.find_theta_for_T(XI, T_CERT)
    assert dual.verify_sign_certificate(build(theta=theta2, T=T_CERT)).holds
    assert dual.find_theta_for_T(XI, 1e-12) == 1.0


def test_search_exhausted(monkeypatch):
    monkeypatch.setattr(dual, "MAX_HALVINGS", 2)
    with pytest.raises(SearchExhausted):
        dual.find_Tstar_for_theta(XI, 2.0)


def test_U0_bound():
    single = dual.dirac_dual((0.5,), (1.0,), 0.1)
    a = math.pi**2 * 0.1
    assert dual.U0_l2_bound(single) == pytest.approx(math.sqrt(2 * math.exp(-2 * a) + 2 * math.exp(-18 * a)), abs=1e-5)
    late = build(T=1.0)
    assert dual.U0_l2_bound(late) == pytest.approx(abs(late.coefficients[0]) / math.sqrt(2) * math.exp(-math.pi**2), rel=1e-6)
    sol = build(T=0.005)
    c = dual.U0_l2_bound(sol)
    x = np.linspace(0, 1, 20_001)
    direct = math.sqrt(np.trapezoid(dual.eval_U(sol, 0.0, x) ** 2, x))
    assert np.isfinite(c) and c >= direct * (1 - 1e-8) and c == pytest.approx(direct, rel=1e-6)


def test_extract_delta(sol):
    delta, ratio = dual.extract_delta(sol)
    assert delta > 0 and ratio >= delta
    with pytest.raises(NoPositiveDelta):
        dual.extract_delta(build(T=2.0))
    doubled = sol.with_coefficients(2 * sol.coefficients)
    assert dual.extract_delta(doubled)[0] >= delta


def test_certificate_report_json(sol):
    data = json.loads(dual.certificate_report(sol).to_json())
    assert set(data) == {"xi", "theta", "T_star", "mu", "holds", "min_margin_left", "max_margin_right", "C_star", "delta"}
    assert data["holds"] and data["delta"] == 0.125
