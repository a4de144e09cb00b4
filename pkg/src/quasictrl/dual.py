"""Backward heat solutions with a Dirac-combination final datum.

``U`` solves ``-U_t - mu U_xx = 0`` on (0, T*) x (0, 1) with homogeneous
Dirichlet data and ``U(T*) = delta_{xi0} - theta delta_{xi1} + delta_{xi2}``.
With ``tau = T* - t`` it is represented exactly by

    U = sum_n c_n exp(-mu n^2 pi^2 tau) sin(n pi x),
    c_n = 2 (sin(n pi xi0) - theta sin(n pi xi1) + sin(n pi xi2)),

and, for small ``tau``, by the equivalent method-of-images Gaussian sum. The
sign certificate asks for ``U_x(t, 0) > 0`` and ``U_x(t, 1) < 0`` on (0, T*).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoPositiveDelta, SearchExhausted, TooCloseToSingularTime

TAU_MIN = 1e-6
TAIL_TOL = 1e-12
SEARCH_MARGIN = 1e-10
MAX_HALVINGS = 60
# below this value of mu * tau the image sum is used for boundary fluxes
IMAGE_SWITCH = 0.05
_IMAGE_SHIFTS = np.arange(-3, 4)


@dataclass(frozen=True)
class DualData:
    xi: tuple[float, float, float]
    theta: float
    T_star: float
    mu: float = 1.0
    N_max: int | None = None

    def __post_init__(self):
        xi = tuple(float(v) for v in self.xi)
        if len(xi) != 3 or not (0 < xi[0] < xi[1] < xi[2] < 1):
            raise ValueError(f"need 0 < xi0 < xi1 < xi2 < 1, got {self.xi!r}")
        object.__setattr__(self, "xi", xi)
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta!r}")
        if not self.T_star > 0:
            raise ValueError(f"T_star must be positive, got {self.T_star!r}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if self.N_max is not None and self.N_max < 1:
            raise ValueError("N_max must be at least 1")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (1.0, -float(self.theta), 1.0)


@dataclass(frozen=True)
class DualSolution:
    """Sine coefficients of U for weights ``weights`` at ``points``."""

    points: tuple[float, ...]
    weights: tuple[float, ...]
    T_star: float
    mu: float
    coefficients: np.ndarray = field(repr=False)
    data: DualData | None = None

    @property
    def theta(self) -> float:
        return -self.weights[1] if self.data is None else self.data.theta

    @property
    def amplitude(self) -> float:
        """Uniform bound on |c_n|."""
        return 2.0 * float(np.sum(np.abs(self.weights)))

    @property
    def N_max(self) -> int:
        return self.coefficients.shape[0]

    def with_coefficients(self, coefficients) -> "DualSolution":
        return DualSolution(self.points, self.weights, self.T_star, self.mu, np.asarray(coefficients, dtype=float), self.data)


def _series_coefficients(points, weights, n_terms: int) -> np.ndarray:
    n = np.arange(1, n_terms + 1)[:, None]
    return 2.0 * (np.asarray(weights)[None, :] * np.sin(n * math.pi * np.asarray(points)[None, :])).sum(axis=1)


def value_tail_bound(amplitude: float, mu: float, tau: float, n_terms: int) -> float:
    a = mu * math.pi**2 * tau
    n = n_terms
    return amplitude * math.exp(-a * n * n) / (1.0 - math.exp(-a * (2 * n + 1)))


def flux_tail_bound(amplitude: float, mu: float, tau: float, n_terms: int) -> float:
    """Bound on sum_{n>N} |c_n| n pi e^{-a n^2}; infinite if the summand is not yet decreasing."""
    a = mu * math.pi**2 * tau
    m = n_terms + 1
    if m * m * 2.0 * a < 1.0:
        return math.inf
    e = math.exp(-a * m * m)
    return amplitude * math.pi * (m * e + e / (2.0 * a))


def terms_needed(amplitude: float, mu: float, tau: float, tol: float = TAIL_TOL, flux: bool = False) -> int:
    bound = flux_tail_bound if flux else value_tail_bound
    a = mu * math.pi**2 * tau
    n = max(1, int(math.sqrt(max(math.log(max(amplitude, 1.0) / tol), 1.0) / a)) - 2)
    while bound(amplitude, mu, tau, n) > tol:
        n += 1
    return n


def dirac_dual(points, weights, T_star: float, mu: float = 1.0, N_max: int | None = None,
               data: DualData | None = None) -> DualSolution:
    """Series solution for an arbitrary Dirac combination on (0, 1)."""
    points = tuple(float(p) for p in points)
    weights = tuple(float(w) for w in weights)
    if len(points) != len(weights) or not points:
        raise ValueError("points and weights must have equal nonzero length")
    if not all(0 < p < 1 for p in points):
        raise ValueError("Dirac points must lie in (0, 1)")
    if N_max is None:
        amp = 2.0 * sum(abs(w) for w in weights)
        tau = min(TAU_MIN, T_star)
        N_max = max(terms_needed(amp, mu, tau), terms_needed(amp, mu, tau, flux=True))
    return DualSolution(points, weights, float(T_star), float(mu), _series_coefficients(points, weights, N_max), data)


def build_dual(data: DualData) -> DualSolution:
    return dirac_dual(data.xi, data.weights, data.T_star, data.mu, data.N_max, data)


def _tau(sol: DualSolution, t: float) -> float:
    tau = sol.T_star - float(t)
    if tau < TAU_MIN:
        raise TooCloseToSingularTime(f"t={t!r} is within {TAU_MIN} of the Dirac time T*={sol.T_star!r}")
    return tau


def _n_terms(sol: DualSolution, tau: float, flux: bool = False) -> int:
    n = terms_needed(sol.amplitude, sol.mu, tau, flux=flux)
    if n > sol.N_max:
        raise ValueError(f"series needs {n} terms but only {sol.N_max} are stored")
    return n


def _decay(sol: DualSolution, tau: float, n_terms: int) -> np.ndarray:
    n = np.arange(1, n_terms + 1)
    return sol.coefficients[:n_terms] * np.exp(-sol.mu * math.pi**2 * n * n * tau)


def eval_U(sol: DualSolution, t: float, x):
    """Series value of U(t, x); ``x`` may be an array. Tail below 1e-12."""
    tau = _tau(sol, t)
    N = _n_terms(sol, tau)
    b = _decay(sol, tau, N)
    xa = np.asarray(x, dtype=float)
    flat = xa.reshape(-1)
    out = np.empty(flat.shape)
    n = np.arange(1, N + 1) * math.pi
    chunk = max(1, 2_000_000 // N)
    for s in range(0, flat.size, chunk):
        out[s:s + chunk] = np.sin(np.outer(flat[s:s + chunk], n)) @ b
    # the walls are exact zeros; sin(n pi) is not in floating point
    out[(flat == 0.0) | (flat == 1.0)] = 0.0
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def eval_U_images(sol: DualSolution, tau: float, x) -> np.ndarray:
    """U at backward time ``tau`` from the Dirichlet heat kernel image sum."""
    if not tau > 0:
        raise TooCloseToSingularTime("image sum needs tau > 0")
    x = np.asarray(x, dtype=float)
    four = 4.0 * sol.mu * tau
    norm = 1.0 / math.sqrt(math.pi * four)
    k = 2.0 * np.arange(-6, 7)
    out = np.zeros(x.shape)
    for p, w in zip(sol.points, sol.weights):
        for shift in k:
            out += w * norm * (np.exp(-((x - p + shift) ** 2) / four) - np.exp(-((x + p + shift) ** 2) / four))
    return out


def eval_Ux_boundary(sol: DualSolution, t: float) -> tuple[float, float]:
    """Series values of U_x(t, 0) and U_x(t, 1)."""
    tau = _tau(sol, t)
    N = _n_terms(sol, tau, flux=True)
    b = _decay(sol, tau, N) * (np.arange(1, N + 1) * math.pi)
    sign = np.where(np.arange(1, N + 1) % 2 == 0, 1.0, -1.0)
    return float(b.sum()), float((b * sign).sum())


def _leading_scale(d: float, mu: float, tau: np.ndarray) -> np.ndarray:
    """Flux of a unit Dirac at distance d from the wall, nearest image only."""
    return d / (mu * tau * np.sqrt(4.0 * math.pi * mu * tau)) * np.exp(-d * d / (4.0 * mu * tau))


def scaled_boundary_flux(sol: DualSolution, tau) -> tuple[np.ndarray, np.ndarray]:
    """``U_x(0) / s_0(tau)`` and ``U_x(1) / s_1(tau)`` computed without underflow.

    ``s_0`` and ``s_1`` are the (positive) fluxes of a unit Dirac placed at the
    datum point nearest to each wall; dividing by them keeps the signs and
    makes margins meaningful as ``tau -> 0``, where the raw fluxes vanish
    faster than any power of ``tau``.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau <= 0):
        raise TooCloseToSingularTime("boundary flux needs tau > 0")
    pts = np.asarray(sol.points)
    w = np.asarray(sol.weights)
    d0 = float(pts.min())
    d1 = float(1.0 - pts.max())
    mu = sol.mu
    left = np.empty_like(tau)
    right = np.empty_like(tau)

    small = mu * tau <= IMAGE_SWITCH
    if np.any(small):
        ts = tau[small][None, None, :]
        four = 4.0 * mu * ts
        z0 = (pts[None, :] + 2.0 * _IMAGE_SHIFTS[:, None])[..., None]
        z1 = (1.0 - pts[None, :] + 2.0 * _IMAGE_SHIFTS[:, None])[..., None]
        ww = w[None, :, None]
        left[small] = (ww * (z0 / d0) * np.exp(-(z0 * z0 - d0 * d0) / four)).sum(axis=(0, 1))
        right[small] = -(ww * (z1 / d1) * np.exp(-(z1 * z1 - d1 * d1) / four)).sum(axis=(0, 1))
    for i in np.flatnonzero(~small):
        N = max(terms_needed(sol.amplitude, mu, tau[i], flux=True), 1)
        n = np.arange(1, N + 1)
        c = _series_coefficients(sol.points, sol.weights, N) if N > sol.N_max else sol.coefficients[:N]
        b = c * np.exp(-mu * math.pi**2 * n * n * tau[i]) * n * math.pi
        left[i] = b.sum() / _leading_scale(d0, mu, tau[i])
        right[i] = (b * np.where(n % 2 == 0, 1.0, -1.0)).sum() / _leading_scale(d1, mu, tau[i])
    return left, right


@dataclass
class SignCertificate:
    holds: bool
    min_margin_left: float
    max_margin_right: float
    worst_t: float
    samples: int


def sample_times(T_star: float, time_samples: int) -> np.ndarray:
    floor = min(TAU_MIN, T_star / time_samples)
    return np.linspace(0.0, T_star - floor, time_samples)


def verify_sign_certificate(sol: DualSolution, time_samples: int = 10_000) -> SignCertificate:
    """Sampled check of U_x(t, 0) > 0 and U_x(t, 1) < 0 on [0, T* - tau_min].

    Margins are the normalized fluxes of :func:`scaled_boundary_flux`. This is
    a dense numerical check, not a proof.
    """
    if time_samples < 100:
        raise ValueError("time_samples must be at least 100")
    t = sample_times(sol.T_star, time_samples)
    left, right = scaled_boundary_flux(sol, sol.T_star - t)
    worst = np.minimum(left, -right)
    i = int(np.argmin(worst))
    return SignCertificate(
        holds=bool(np.all(left > 0) and np.all(right < 0)),
        min_margin_left=float(left.min()),
        max_margin_right=float(right.max()),
        worst_t=float(t[i]),
        samples=int(time_samples),
    )


def _passes(cert: SignCertificate) -> bool:
    return cert.holds and cert.min_margin_left >= SEARCH_MARGIN and cert.max_margin_right <= -SEARCH_MARGIN


def find_Tstar_for_theta(xi, theta: float, mu: float = 1.0, time_samples: int = 10_000) -> float:
    """Largest dyadic T* = 2^-k (k = 0..60) whose sign certificate holds."""
    for k in range(MAX_HALVINGS + 1):
        T = 2.0**-k
        sol = build_dual(DualData(tuple(xi), theta, T, mu))
        if _passes(verify_sign_certificate(sol, time_samples)):
            return T
    raise SearchExhausted(f"no T* in [2^-{MAX_HALVINGS}, 1] certifies xi={tuple(xi)}, theta={theta}")


def find_theta_for_T(xi, T_star: float, mu: float = 1.0, time_samples: int = 10_000) -> float:
    """First theta in 1, 1/2, 1/4, ... whose sign certificate holds at ``T_star``."""
    if not T_star > 0:
        raise ValueError("T_star must be positive")
    for k in range(MAX_HALVINGS + 1):
        theta = 2.0**-k
        sol = build_dual(DualData(tuple(xi), theta, T_star, mu))
        if _passes(verify_sign_certificate(sol, time_samples)):
            return theta
    raise SearchExhausted(f"no theta in [2^-{MAX_HALVINGS}, 1] certifies xi={tuple(xi)} at T*={T_star}")


def U0_l2_bound(sol: DualSolution) -> float:
    """Upper bound C* on the L2 norm of U(0, .) from the squared series plus its tail."""
    tau = sol.T_star
    if tau < TAU_MIN:
        raise TooCloseToSingularTime("U(0) norm needs T* >= tau_min")
    amp = sol.amplitude
    # squared coefficients decay like exp(-2 a n^2): reuse the value bound with 2 mu
    N = min(terms_needed(amp * amp / 2.0, 2.0 * sol.mu, tau), sol.N_max)
    n = np.arange(1, N + 1)
    c = sol.coefficients[:N]
    s = float(np.sum(0.5 * c * c * np.exp(-2.0 * sol.mu * math.pi**2 * n * n * tau)))
    tail = value_tail_bound(amp * amp / 2.0, 2.0 * sol.mu, tau, N)
    return math.sqrt(s + tail)


DELTA_EXPONENTS = range(1, 21)
DELTA_SAMPLES = 1000


def extract_delta(sol: DualSolution) -> tuple[float, float]:
    """Largest dyadic delta with U(0,x) >= delta x near 0 and >= delta (1-x) near 1.

    Returns ``(delta, ratio)`` where ratio is the sampled minimum of
    U(0,x)/x and U(0,x)/(1-x) over the two boundary strips.
    """
    for k in DELTA_EXPONENTS:
        delta = 2.0**-k
        s = np.linspace(0.0, delta, DELTA_SAMPLES + 1)[1:]
        left = eval_U(sol, 0.0, s) / s
        right = eval_U(sol, 0.0, 1.0 - s) / s
        ratio = float(min(left.min(), right.min()))
        if ratio >= delta:
            return delta, ratio
    raise NoPositiveDelta("no dyadic delta in [2^-20, 1/2] gives a linear lower bound")


@dataclass
class CertificateReport:
    xi: list
    theta: float
    T_star: float
    mu: float
    holds: bool
    min_margin_left: float
    max_margin_right: float
    C_star: float | None
    delta: float | None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def certificate_report(sol: DualSolution, time_samples: int = 10_000) -> CertificateReport:
    cert = verify_sign_certificate(sol, time_samples)
    C_star = U0_l2_bound(sol) if sol.T_star >= TAU_MIN else None
    delta = None
    if cert.holds and C_star is not None:
        try:
            delta, _ = extract_delta(sol)
        except NoPositiveDelta:
            delta = None
    return CertificateReport(
        xi=list(sol.points),
        theta=float(sol.theta),
        T_star=float(sol.T_star),
        mu=float(sol.mu),
        holds=cert.holds,
        min_margin_left=cert.min_margin_left,
        max_margin_right=cert.max_margin_right,
        C_star=C_star,
        delta=delta,
    )
