"""Closed-form solutions, their norms, and samplers onto the torus.

Two families live here. The pseudo-conformal family on ℝ²

    v(t) = μ^{-1} exp(i b (−x² + y²) / (4μ)) / (1 + (x² + y²)/μ²),   μ = a + b t,

blows up at T = −a/b. Its fractional Sobolev norms have no elementary form;
they are evaluated from an exact Laplace-type representation of the Fourier
transform (see ``_LambdaRule``). The diagonal family

    u(t, x, y) = exp(i t u₀(x + y)²) u₀(x + y)

solves the cubic equation with E switched off exactly on T², since P kills
functions of x + y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Protocol, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .spectral import (
    Field,
    Spectrum,
    TorusGrid,
    _forward,
    _inverse,
    density_E,
    hs_norm,
    make_grid,
    p_symbol,
)

__all__ = [
    "OzawaParams",
    "OzawaNorms",
    "ProfileSpec",
    "Bump",
    "OzawaSolution",
    "DiagonalSolution",
    "TorusSample",
    "ozawa_v",
    "ozawa_norms",
    "annulus_hs",
    "hyperbolic_explicit",
    "growth_curve",
    "stationary_profile",
    "sample_on_torus",
    "pde_residual",
    "STATIONARY_AMPLITUDE",
]

# 2√2 / (1 + r²) is stationary for i u_t + P u = −|u|²u + E(|u|²)u; the
# displayed family uses amplitude 1, which carries mass π.
STATIONARY_AMPLITUDE = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class OzawaParams:
    a: float = 0.1
    b: float = -0.1
    R: float = 100.0
    amplitude: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.a > 0:
            problems.append(f"a must be positive, got {self.a}")
        if not self.b < 0:
            problems.append(f"b must be negative, got {self.b}")
        if not self.R > 0:
            problems.append(f"window radius R must be positive, got {self.R}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def T(self) -> float:
        return -self.a / self.b

    def mu(self, t: float) -> float:
        if not t < self.T:
            raise ValueError(f"t = {t} is not before the blow-up time T = {self.T}")
        return self.a + self.b * t

    def kappa(self, t: float) -> float:
        """Chirp strength of the profile in the self-similar variable x/μ."""
        return self.b * self.mu(t) / 4.0


def stationary_profile(x, y):
    return 1.0 / (1.0 + np.asarray(x) ** 2 + np.asarray(y) ** 2)


def ozawa_v(t, x, y, params: OzawaParams = OzawaParams()):
    mu = params.mu(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phase = np.exp(1j * params.b * (y * y - x * x) / (4.0 * mu))
    return params.amplitude / mu * phase / (1.0 + (x * x + y * y) / mu**2)


def _ozawa_dt(t, x, y, params: OzawaParams):
    mu = params.mu(t)
    b = params.b
    r2 = x * x + y * y
    logd = -b / mu - 1j * b * b * (y * y - x * x) / (4.0 * mu * mu) + 2.0 * b * r2 / (mu * (mu * mu + r2))
    return ozawa_v(t, x, y, params) * logd


# --- Fourier-side quadrature for W_κ(X) = e^{iκ(−X₁² + X₂²)} / (1 + |X|²) ------------
#
# From 1/(1+r²) = ∫₀^∞ e^{−λ(1+r²)} dλ each λ-slice is a Gaussian chirp, so
#   Ŵ(η) = π ∫ e^{−λ} (λ²+κ²)^{−1/2} exp(−η₁²/(4(λ+iκ)) − η₂²/(4(λ−iκ))) dλ,
# up to a unimodular factor. Pairing two slices and integrating over η with the
# weight |η|^{2s} gives a double λ-integral with kernel
#   |A|^{−(s+1)} P_s(Re A/|A|),   A = 1/(4(λ+iκ)) + 1/(4(λ'−iκ)),
# where P_s is the Legendre function. The rule below integrates over
# σ = λ + λ' on a log scale and over the split ρ = λ/σ ∈ (0, 1/2] by symmetry;
# the region σ < σ₀ is added in closed form.


def _panels(a, b, npan, order):
    x, w = leggauss(order)
    edges = np.linspace(a, b, npan + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


@dataclass(frozen=True)
class _LambdaRule:
    kappa: float
    weights: np.ndarray
    A: np.ndarray
    sigma0: float


@lru_cache(maxsize=128)
def _lambda_rule(kappa: float, ns: int = 40, nr: int = 20, order: int = 12) -> _LambdaRule:
    k = abs(kappa)
    s0 = k * 1e-8 if k > 0 else 1e-16
    u, wu = _panels(math.log(s0), math.log(50.0), ns, order)
    sig = np.exp(u)
    wsig = wu * sig
    v, wv = _panels(-40.0, 0.0, nr, order)
    rho = 0.5 * np.exp(v)
    wrho = wv * rho
    S, R = np.meshgrid(sig, rho, indexing="ij")
    W = 2.0 * np.outer(wsig, wrho)
    lam, lamp = R * S, (1.0 - R) * S
    A = 0.25 / (lam + 1j * kappa) + 0.25 / (lamp - 1j * kappa)
    K = np.exp(-S) * S / np.sqrt((lam**2 + kappa**2) * (lamp**2 + kappa**2))
    return _LambdaRule(kappa, (W * K).ravel(), A.ravel(), s0)


def _hdot_sq_profile(kappa: float, s: float, rule: Optional[_LambdaRule] = None) -> float:
    """‖W_κ‖²_{Ḣ^s(ℝ²)} for 0 ≤ s < 1."""
    r = rule or _lambda_rule(kappa)
    aA = np.abs(r.A)
    x = np.clip(r.A.real / aA, -1.0, 1.0)
    val = math.pi * special.gamma(s + 1) / 4.0 * float(
        np.sum(r.weights * aA ** (-(s + 1)) * special.hyp2f1(-s, s + 1, 1, (1 - x) / 2))
    )
    if kappa != 0:
        val += math.pi * special.gamma(s + 1) * 4**s * abs(kappa) ** (2 * s) * r.sigma0 ** (1 - s) / (1 - s)
    return val


def _gap_over_tau(rule: _LambdaRule, tau: float) -> float:
    """(π − ∫ e^{−τ|η|²}|Ŵ|² dη/(2π)²) / τ, written without cancellation."""
    A = rule.A
    aA = np.abs(A)
    aB = np.abs(A + tau)
    val = math.pi / 4.0 * float(np.sum(rule.weights * (2.0 * A.real + tau) / ((aA + aB) * aA * aB)))
    if rule.kappa != 0:
        val += 4.0 * math.pi * rule.kappa**2 * math.log1p(rule.sigma0 / (4.0 * rule.kappa**2 * tau))
    return val


def _hs_sq_inhomogeneous(mu: float, kappa: float, s: float) -> tuple[float, float]:
    """‖v‖²_{H^s} for unit amplitude, by subordination of (1 + |ξ|²)^s, with an error estimate.

    (1+z)^s − 1 = s/Γ(1−s) ∫₀^∞ (1 − e^{−tz}) e^{−t} t^{−1−s} dt, and the inner
    η-integral is (2π)^{-2}∫(1 − e^{−τ|η|²})|Ŵ|², τ = t/μ². In v = log t the
    integrand is e^{(1−s)v − t} g(τ)/μ² with g = gap/τ.
    """
    if s == 0:
        return math.pi, 0.0
    rule = _lambda_rule(kappa)
    v_lo = max(-40.0 / (1.0 - s), 2.0 * math.log(mu) - 600.0)
    v_hi = math.log(80.0)

    def f(v):
        t = math.exp(v)
        return math.exp((1.0 - s) * v - t) * _gap_over_tau(rule, t / mu**2) / mu**2

    pts = [p for p in (2.0 * math.log(mu) - 10.0, 2.0 * math.log(mu), -5.0, 0.0) if v_lo < p < v_hi]
    val, abserr = integrate.quad(f, v_lo, v_hi, points=pts, limit=400, epsabs=0.0, epsrel=1e-11)
    tail = f(v_lo) / (1.0 - s)
    c = s / special.gamma(1.0 - s)
    return math.pi + c * (val + tail), c * (abserr + tail)


@dataclass(frozen=True)
class OzawaNorms:
    t: float
    s: float
    mu: float
    kappa: float
    params: OzawaParams
    l2: float
    l2_truncation: float
    l4: float
    l4_truncation: float
    hs: float
    hs_error: float
    hs_dot: float
    hs_dot_error: float

    def annulus_hs(self, eps: float = 1.0, A: float = 10.0, homogeneous: bool = False) -> float:
        return annulus_hs(self.t, self.s, self.params, eps, A, homogeneous=homogeneous)[0]


def _disk_quad(power, R_scaled):
    """2π∫₀^{R} r (1+r²)^(−power) dr by quadrature in x = log(1+r²), where the integrand is π e^{−(power−1)x}."""
    top = math.log1p(R_scaled * R_scaled)
    val, err = integrate.quad(lambda x: math.pi * math.exp(-(power - 1) * x), 0.0, top,
                              limit=200, epsabs=0.0, epsrel=1e-12)
    return val, err


def ozawa_norms(t: float, s: float, params: OzawaParams = OzawaParams()) -> OzawaNorms:
    """Norms of v(t). L² and L⁴ are over the disk |x| ≤ R; H^s and Ḣ^s are over ℝ².

    Truncation fields hold the mass (resp. L⁴ mass) outside the disk, which is
    what the disk value misses relative to ℝ².
    """
    if s >= 1:
        raise ValueError(f"s = {s} is not below 1: the profile 1/(1+r²) is not in H¹(ℝ²)")
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    mu = params.mu(t)
    kappa = params.kappa(t)
    amp2 = params.amplitude**2
    Rs = params.R / mu
    m2, _ = _disk_quad(2, Rs)
    m4, _ = _disk_quad(4, Rs)
    l2_tail = math.pi / (1 + Rs * Rs)
    l4_tail = math.pi / 3 * (1 + Rs * Rs) ** -3
    hdot = _hdot_sq_profile(kappa, s)
    coarse = _hdot_sq_profile(kappa, s, _lambda_rule(kappa, 30, 15, 12))
    hs_sq, hs_err = _hs_sq_inhomogeneous(mu, kappa, s)
    hs_dot = math.sqrt(amp2 * mu ** (-2 * s) * hdot)
    return OzawaNorms(
        t=t, s=s, mu=mu, kappa=kappa, params=params,
        l2=math.sqrt(amp2 * m2), l2_truncation=math.sqrt(amp2 * l2_tail),
        l4=(amp2**2 * m4 / mu**2) ** 0.25, l4_truncation=(amp2**2 * l4_tail / mu**2) ** 0.25,
        hs=math.sqrt(amp2 * hs_sq), hs_error=0.5 * math.sqrt(amp2) * hs_err / math.sqrt(hs_sq),
        hs_dot=hs_dot, hs_dot_error=0.5 * hs_dot * abs(hdot - coarse) / hdot,
    )


def smooth_step(x):
    """C^∞ step: 0 for x ≤ 0, 1 for x ≥ 1, built from exp(−1/x)."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    y = 1.0 - x
    b = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Bump:
    """Radial cutoff equal to 1 for r ≤ r0 and 0 for r ≥ r1."""

    r0: float
    r1: float

    def __post_init__(self):
        if not (0 < self.r0 < self.r1):
            raise ValueError(f"bump radii must satisfy 0 < r0 < r1, got r0={self.r0}, r1={self.r1}")

    def __call__(self, r):
        return 1.0 - smooth_step((np.asarray(r) - self.r0) / (self.r1 - self.r0))


def annulus_cutoff(r, eps, A):
    """1 on eps ≤ r ≤ A, 0 for r ≤ eps/2 and r ≥ A + eps, smooth in between."""
    r = np.asarray(r)
    inner = smooth_step((r - eps / 2) / (eps / 2))
    outer = 1.0 - smooth_step((r - A) / eps)
    return inner * outer


MAX_ANNULUS_GRID = 4096


def annulus_hs(t, s, params: OzawaParams = OzawaParams(), eps: float = 1.0, A: float = 10.0,
               homogeneous: bool = False) -> tuple[float, float]:
    """H^s norm of χ·v(t), χ a smooth cutoff to eps ≤ |x| ≤ A, with a spectral-tail error estimate.

    The product has compact support, so it is computed exactly as a periodic
    function on a box containing the support, resolved against the chirp frequency.
    """
    if not 0 < eps < A:
        raise ValueError(f"need 0 < eps < A, got eps={eps}, A={A}")
    mu = params.mu(t)
    outer = A + eps
    half = 1.05 * outer
    kmax = abs(params.b) * outer / (2 * mu) + 40.0 / eps
    h = math.pi / (1.5 * kmax)
    n = sfft.next_fast_len(int(math.ceil(2 * half / h)))
    n += n % 2
    if n > MAX_ANNULUS_GRID:
        raise ValueError(
            f"t = {t} needs a {n}² grid to resolve the chirp (cap {MAX_ANNULUS_GRID}); sample further from T"
        )
    g = make_grid(half / math.pi, n, n)
    X, Y = g.mesh
    X = X - half
    Y = Y - half
    vals = ozawa_v(t, X, Y, params) * annulus_cutoff(np.hypot(X, Y), eps, A)
    spec = Spectrum(g, _forward(g, vals))
    value = hs_norm(spec, s, homogeneous=homogeneous)
    e = np.abs(spec.coeffs) ** 2
    r = np.maximum(np.abs(g.m), np.abs(g.n)) / (n / 2)
    err = value * math.sqrt(float(e[r > 5 / 6].sum() / max(e.sum(), 1e-300)))
    return value, err


# --- diagonal family --------------------------------------------------------------


@dataclass(frozen=True)
class ProfileSpec:
    """u₀(θ) = c₀ + Σ_k (cos_k cos kθ + sin_k sin kθ), k ≥ 1."""

    cos: tuple[float, ...] = (2.0, 1.0)
    sin: tuple[float, ...] = ()
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin))
        vals = self.cos + self.sin + (self.amplitude,)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("profile coefficients must be finite reals")
        if not self.cos:
            raise ValueError("profile needs at least the constant coefficient")

    @property
    def degree(self) -> int:
        return max(len(self.cos) - 1, len(self.sin))

    @property
    def is_constant(self) -> bool:
        return all(c == 0 for c in self.cos[1:]) and all(c == 0 for c in self.sin)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.cos[0])
        for k, c in enumerate(self.cos[1:], start=1):
            out = out + c * np.cos(k * theta)
        for k, c in enumerate(self.sin, start=1):
            out = out + c * np.sin(k * theta)
        return self.amplitude * out

    def max_abs_slope_of_square(self) -> float:
        """Upper bound on |d(u₀²)/dθ| = 2|u₀ u₀'| from coefficient sums."""
        s0 = abs(self.amplitude) * (sum(abs(c) for c in self.cos) + sum(abs(c) for c in self.sin))
        s1 = abs(self.amplitude) * sum(k * abs(c) for k, c in
                                       list(enumerate(self.cos))[1:] + list(enumerate(self.sin, start=1)))
        return 2 * s0 * s1


def hyperbolic_explicit(t, x, y, profile: ProfileSpec):
    u0 = profile(np.asarray(x) + np.asarray(y))
    return np.exp(1j * t * u0 * u0) * u0


def growth_curve(profile: ProfileSpec, s: float, t_list: Sequence[float]) -> np.ndarray:
    """‖u(t)‖_{H^s(T²)} of the diagonal solution, from a 1-D spectral computation.

    With g(θ) = e^{itu₀²}u₀ = Σ ĝ_k e^{ikθ}, u has coefficient 2πĝ_k on the mode
    (k, k), so ‖u‖²_{H^s} = 4π² Σ (1 + 2k²)^s |ĝ_k|².
    """
    if profile.is_constant:
        raise ValueError("constant profile: its norms do not grow")
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    out = []
    slope = profile.max_abs_slope_of_square()
    for t in t_list:
        band = abs(t) * slope + profile.degree
        M = sfft.next_fast_len(max(256, int(4 * band) + 64))
        while True:
            theta = 2 * math.pi * np.arange(M) / M
            gk = sfft.fft(hyperbolic_explicit(t, theta, 0.0, profile)) / M
            k = sfft.fftfreq(M, 1.0 / M)
            e = np.abs(gk) ** 2
            if e[np.abs(k) > M / 4].sum() <= 1e-24 * e.sum() or M > 2**22:
                break
            M = sfft.next_fast_len(2 * M)
        out.append(2 * math.pi * math.sqrt(float(np.sum((1 + 2 * k * k) ** s * e))))
    return np.asarray(out)


# --- solutions and torus sampling ------------------------------------------------------


class AnalyticSolution(Protocol):
    sigma: int
    e_enabled: bool
    needs_cutoff: bool

    def value(self, t, X, Y): ...

    def time_derivative(self, t, X, Y): ...


@dataclass(frozen=True)
class DiagonalSolution:
    """exp(it u₀(x+y)²) u₀(x+y); exact for the equation without E on T²_L with integer L."""

    profile: ProfileSpec
    sigma: int = 1
    e_enabled: bool = False
    needs_cutoff: bool = False

    def value(self, t, X, Y):
        return hyperbolic_explicit(t, X, Y, self.profile)

    def time_derivative(self, t, X, Y):
        u0 = self.profile(X + Y)
        return 1j * u0 * u0 * self.value(t, X, Y)


@dataclass(frozen=True)
class OzawaSolution:
    """Pseudo-conformal family centered in the torus cell; exact on ℝ² only with σ = −1 and amplitude 2√2."""

    params: OzawaParams = OzawaParams(a=1.0, b=-1.0, amplitude=STATIONARY_AMPLITUDE)
    sigma: int = -1
    e_enabled: bool = True
    needs_cutoff: bool = True

    def value(self, t, X, Y):
        return ozawa_v(t, X, Y, self.params)

    def time_derivative(self, t, X, Y):
        return _ozawa_dt(t, X, Y, self.params)


@dataclass
class TorusSample:
    field: Field
    t: float
    residual: np.ndarray = field(repr=False)
    cutoff: Optional[Bump] = None

    @property
    def residual_max(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def label(self) -> str:
        return "exact solution" if self.cutoff is None else "truncation, not exact solution"


def pde_residual(u: np.ndarray, ut: np.ndarray, grid: TorusGrid, sigma: int, e_enabled: bool) -> np.ndarray:
    """i u_t + P u + |u|²u + σE(|u|²)u, with P and E applied spectrally without filtering."""
    Pu = _inverse(grid, _forward(grid, u) * p_symbol(grid))
    V = np.abs(u) ** 2
    if e_enabled:
        V = V + sigma * density_E(grid, u, dealias=False)
    return 1j * ut + Pu + V * u


def sample_on_torus(solution, grid: TorusGrid, t: float = 0.0, cutoff: Optional[Bump] = None) -> TorusSample:
    """Sample a closed-form solution on the grid nodes and measure its PDE residual.

    Solutions defined on ℝ² are centered in the cell and must be cut off by a
    bump that fits inside the inscribed disk of radius πL.
    """
    X, Y = grid.mesh
    if solution.needs_cutoff:
        if cutoff is None:
            raise ValueError("this solution lives on ℝ²; a bump cutoff is required to place it on the torus")
        X = X - math.pi * grid.L
        Y = Y - math.pi * grid.L
    if cutoff is not None and cutoff.r1 > math.pi * grid.L:
        raise ValueError(f"bump radius r1={cutoff.r1} exceeds the inscribed torus radius {math.pi * grid.L}")
    u = solution.value(t, X, Y)
    ut = solution.time_derivative(t, X, Y)
    if cutoff is not None:
        chi = cutoff(np.hypot(X, Y))
        u = u * chi
        ut = ut * chi
    res = pde_residual(u, ut, grid, solution.sigma, solution.e_enabled)
    return TorusSample(Field(grid, u), t, res, cutoff)
