"""Space-time spectra on a finite window and numerical probes of Strichartz-type estimates.

Time is handled on a window [0, T_w] sampled at nt points. A coefficient
trajectory c_{m,n}(t_j) is tapered and transformed with the unitary convention

    ĉ(τ_k) = Δt / √(2π) · Σ_j ψ(t_j) c(t_j) e^{−iτ_k t_j},   τ_k = 2πk / T_w,

so Σ_k Δτ |ĉ(τ_k)|² = Σ_j Δt |ψ c(t_j)|² exactly. The default window T_w = 2πL²
puts every value of the P symbol (m² − n²)/L² on the τ lattice, so free
solutions occupy the taper's own bins and nothing leaks between them.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.polynomial.legendre import leggauss

from .spectral import (
    EmptyBoxWarning,
    FreqBox,
    Spectrum,
    TorusGrid,
    _sup_distance_numerators,
    box_mask,
    e_symbol,
    hs_weight,
    make_grid,
    p_symbol,
)

__all__ = [
    "SpaceTimeSpectrum",
    "ModBand",
    "BilinearStats",
    "UniformityReport",
    "ProbeStats",
    "TrilinearResult",
    "space_time_transform",
    "free_evolution",
    "random_space_time",
    "required_nt",
    "default_window",
    "modulation_bands",
    "delta_QR",
    "linf_band_bound",
    "l4_band_bound",
    "xsb_norm",
    "taper_hb_norm",
    "bilinear_norm",
    "bilinear_ratio",
    "bilinear_uniformity",
    "l4_spacetime_norm",
    "semiclassical_l4",
    "trilinear_probe",
    "trilinear_ensemble",
    "trilinear_adversarial",
    "DEFAULT_B",
    "DEFAULT_B_PRIME",
]

DEFAULT_B = 0.55
DEFAULT_B_PRIME = 0.45
QUAD_RTOL = 1e-6

Taper = Literal["hann", "none"]


def _even_fast_len(n: int) -> int:
    m = sfft.next_fast_len(max(int(n), 2))
    while m % 2:
        m = sfft.next_fast_len(m + 1)
    return m


def _taper(name: str, nt: int) -> np.ndarray:
    if name == "hann":
        return np.sin(np.pi * np.arange(nt) / nt) ** 2
    if name == "none":
        return np.ones(nt)
    raise ValueError(f"unknown taper {name!r}; use 'hann' or 'none'")


@dataclass(frozen=True)
class SpaceTimeSpectrum:
    grid: TorusGrid
    T_w: float
    coeffs: np.ndarray = field(repr=False)
    taper: str = "hann"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != self.grid.shape:
            raise ValueError(f"coefficients must have shape (nt, {self.grid.nx}, {self.grid.ny}), got {c.shape}")
        if c.shape[0] % 2 or c.shape[0] < 2:
            raise ValueError(f"nt must be even and positive, got {c.shape[0]}")
        if not self.T_w > 0:
            raise ValueError(f"window length must be positive, got {self.T_w}")
        object.__setattr__(self, "coeffs", c)

    @property
    def nt(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dt(self) -> float:
        return self.T_w / self.nt

    @property
    def dtau(self) -> float:
        return 2 * math.pi / self.T_w

    @property
    def tau(self) -> np.ndarray:
        return sfft.fftfreq(self.nt, 1.0 / self.nt) * self.dtau

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    def l2(self) -> float:
        """Space-time L² norm on the window."""
        return math.sqrt(self.dtau * float(np.sum(np.abs(self.coeffs) ** 2)))

    def trajectory(self) -> np.ndarray:
        """Tapered spatial coefficients at the sample times."""
        return sfft.ifft(self.coeffs, axis=0) * (self.nt * math.sqrt(2 * math.pi) / self.T_w)

    def values(self, pad: int = 1) -> np.ndarray:
        """Samples u(t_j, x) on a grid refined ``pad`` times in every direction."""
        c = _pad(self.coeffs, pad) if pad > 1 else self.coeffs
        nt, nx, ny = c.shape
        traj = sfft.ifft(c, axis=0) * (nt * math.sqrt(2 * math.pi) / self.T_w)
        return sfft.ifft2(traj, axes=(1, 2)) * (nx * ny / self.grid.period)

    def bracket(self) -> np.ndarray:
        """⟨τ − p(m, n)⟩ on the lattice."""
        return np.sqrt(1.0 + (self.tau[:, None, None] - p_symbol(self.grid)[None]) ** 2)

    def with_coeffs(self, coeffs, flags=()) -> "SpaceTimeSpectrum":
        return replace(self, coeffs=coeffs, flags=tuple(flags))


def _pad(c: np.ndarray, pad: int) -> np.ndarray:
    """Zero-pad an FFT-ordered array by an integer factor in every axis."""
    out = c
    for axis in range(c.ndim):
        n = out.shape[axis]
        m = n * pad
        half = n // 2
        shape = list(out.shape)
        shape[axis] = m
        big = np.zeros(shape, dtype=complex)
        src = [slice(None)] * c.ndim
        dst = [slice(None)] * c.ndim
        src[axis], dst[axis] = slice(0, half), slice(0, half)
        big[tuple(dst)] = out[tuple(src)]
        src[axis], dst[axis] = slice(half, n), slice(m - (n - half), m)
        big[tuple(dst)] = out[tuple(src)]
        out = big
    return out


def _values_to_spectrum(vals: np.ndarray, grid: TorusGrid, T_w: float) -> np.ndarray:
    nt, nx, ny = vals.shape
    spatial = sfft.fft2(vals, axes=(1, 2)) * (grid.period / (nx * ny))
    return sfft.fft(spatial, axis=0) * (T_w / nt / math.sqrt(2 * math.pi))


def default_window(L: float) -> float:
    return 2 * math.pi * L * L


def space_time_transform(grid: TorusGrid, trajectory: np.ndarray, T_w: Optional[float] = None,
                         taper: Taper = "hann") -> SpaceTimeSpectrum:
    """Taper and time-transform spatial coefficients sampled at t_j = j·T_w/nt."""
    T_w = default_window(grid.L) if T_w is None else float(T_w)
    traj = np.asarray(trajectory, dtype=complex)
    if traj.ndim != 3 or traj.shape[0] % 2:
        raise ValueError(f"trajectory must have shape (nt, nx, ny) with nt even, got {traj.shape}")
    nt = traj.shape[0]
    psi = _taper(taper, nt)
    c = sfft.fft(traj * psi[:, None, None], axis=0) * (T_w / nt / math.sqrt(2 * math.pi))
    return SpaceTimeSpectrum(grid, T_w, c, taper)


def free_evolution(u0: Spectrum, nt: int, T_w: Optional[float] = None, taper: Taper = "hann") -> SpaceTimeSpectrum:
    """Windowed ψ(t)·e^{itP}u₀."""
    g = u0.grid
    T_w = default_window(g.L) if T_w is None else float(T_w)
    t = np.arange(nt) * (T_w / nt)
    traj = u0.coeffs[None] * np.exp(1j * t[:, None, None] * p_symbol(g)[None])
    return space_time_transform(g, traj, T_w, taper)


def required_nt(grid: TorusGrid, mask: np.ndarray, reach: float, T_w: Optional[float] = None) -> int:
    """Smallest even nt whose τ lattice covers p ± reach over the masked modes."""
    T_w = default_window(grid.L) if T_w is None else float(T_w)
    p = p_symbol(grid)[mask]
    top = (float(np.max(np.abs(p))) if p.size else 0.0) + reach
    n = 2 * (int(math.ceil(top * T_w / (2 * math.pi))) + 2)
    return _even_fast_len(n)


def random_space_time(grid: TorusGrid, mask: np.ndarray, nt: int, rng: np.random.Generator,
                      max_modulation: float = 4.0, T_w: Optional[float] = None) -> SpaceTimeSpectrum:
    """Standard complex Gaussian coefficients on mask × {⟨τ − p⟩ < max_modulation}."""
    T_w = default_window(grid.L) if T_w is None else float(T_w)
    st = SpaceTimeSpectrum(grid, T_w, np.zeros((nt,) + grid.shape, complex))
    keep = mask[None] & (st.bracket() < max_modulation)
    c = (rng.standard_normal(keep.shape) + 1j * rng.standard_normal(keep.shape)) / math.sqrt(2)
    return st.with_coeffs(np.where(keep, c, 0))


# --- modulation bands --------------------------------------------------------


@dataclass(frozen=True)
class ModBand:
    """R ≤ ⟨τ − p⟩ < 2R. The outer face is open so that bands tile."""

    R: float

    def __post_init__(self):
        R = float(self.R)
        if not (R >= 1 and math.log2(R).is_integer()):
            raise ValueError(f"band index must be a power of 2 at least 1, got {self.R}")
        object.__setattr__(self, "R", R)

    def mask(self, st: SpaceTimeSpectrum) -> np.ndarray:
        br = st.bracket()
        return (br >= self.R) & (br < 2 * self.R)

    def measure(self) -> float:
        """Length of {y : R ≤ ⟨y⟩ < 2R}."""
        R = self.R
        return 2 * (math.sqrt(4 * R * R - 1) - math.sqrt(max(R * R - 1, 0.0)))


def modulation_bands(st: SpaceTimeSpectrum) -> list[ModBand]:
    top = float(np.max(st.bracket()))
    out, R = [], 1.0
    while R <= top:
        out.append(ModBand(R))
        R *= 2
    return out


def delta_QR(st: SpaceTimeSpectrum, box: Optional[FreqBox], band: Optional[ModBand]) -> SpaceTimeSpectrum:
    """Orthogonal projection onto box × band; either factor may be None for no restriction."""
    keep = np.ones(st.coeffs.shape, dtype=bool)
    if box is not None:
        keep &= box_mask(st.grid, box)[None]
    if band is not None:
        keep &= band.mask(st)
    flags = ()
    if not keep.any():
        flags = ("empty",)
        warnings.warn("projection onto an empty frequency/modulation set", EmptyBoxWarning, stacklevel=2)
    return st.with_coeffs(np.where(keep, st.coeffs, 0), flags)


def _lattice_count(grid: TorusGrid, box: FreqBox) -> int:
    return int(np.count_nonzero(box_mask(grid, box)))


def linf_band_bound(st: SpaceTimeSpectrum, box: FreqBox, band: ModBand, pad: int = 2) -> float:
    """‖Δ_{Q,R}u‖_{L∞L∞} / ((|Q|/L²)^{1/2} R^{1/2} ‖Δ_{Q,R}u‖_{L²L²}), |Q| counting lattice points.

    The supremum is taken over a grid refined ``pad`` times, so it never exceeds the true one.
    """
    w = delta_QR(st, box, band)
    norm = w.l2()
    if norm == 0:
        raise ZeroDivisionError("projected data vanish; the ratio is undefined")
    count = _lattice_count(st.grid, box)
    sup = float(np.max(np.abs(w.values(pad))))
    return sup / (math.sqrt(count / st.grid.L**2) * math.sqrt(band.R) * norm)


def l4_band_bound(st: SpaceTimeSpectrum, box: FreqBox, band: ModBand, pad: int = 2) -> float:
    """‖Δ_{Q,R}u‖_{L⁴L⁴} / ((|Q|/L²)^{1/4} R^{1/4} ‖Δ_{Q,R}u‖_{L²L²}) by quadrature on the refined grid."""
    w = delta_QR(st, box, band)
    norm = w.l2()
    if norm == 0:
        raise ZeroDivisionError("projected data vanish; the ratio is undefined")
    count = _lattice_count(st.grid, box)
    vals = w.values(pad)
    nt, nx, ny = vals.shape
    cell = (w.T_w / nt) * (st.grid.period**2 / (nx * ny))
    l4 = (cell * float(np.sum(np.abs(vals) ** 4))) ** 0.25
    return l4 / ((count / st.grid.L**2) ** 0.25 * band.R**0.25 * norm)


# --- Bourgain norms ------------------------------------------------------------


def xsb_norm(st: SpaceTimeSpectrum, s: float, b: float) -> float:
    w = hs_weight(st.grid, s)[None] * st.bracket() ** (2 * b)
    return math.sqrt(st.dtau * float(np.sum(w * np.abs(st.coeffs) ** 2)))


def taper_hb_norm(T_w: float, nt: int, b: float, taper: Taper = "hann") -> float:
    """(Σ_k Δτ ⟨τ_k⟩^{2b} |ψ̂(τ_k)|²)^{1/2} for the sampled taper."""
    psi_hat = sfft.fft(_taper(taper, nt)) * (T_w / nt / math.sqrt(2 * math.pi))
    tau = sfft.fftfreq(nt, 1.0 / nt) * (2 * math.pi / T_w)
    return math.sqrt((2 * math.pi / T_w) * float(np.sum((1 + tau**2) ** b * np.abs(psi_hat) ** 2)))


# --- exact-product quadratures ------------------------------------------------------


def _modes_in(box: FreqBox, L) -> np.ndarray:
    """Integer points of a box, as an (k, 2) array."""
    a, b, R = float(box.a), float(box.b), float(box.upper)
    m = np.arange(math.floor(L * (a - R)) - 1, math.ceil(L * (a + R)) + 2)
    n = np.arange(math.floor(L * (b - R)) - 1, math.ceil(L * (b + R)) + 2)
    M, N = np.meshgrid(m, n, indexing="ij")
    D, S = _sup_distance_numerators(box, L, M, N)
    lo, hi = box.lower, box.upper
    keep = (D * lo.denominator >= lo.numerator * S)
    keep &= (D * hi.denominator < hi.numerator * S) if box.upper_open else (D * hi.denominator <= hi.numerator * S)
    return np.column_stack([M[keep], N[keep]]).astype(np.int64)


class _ModeGrid:
    """Coefficients on an arbitrary set of modes, evaluated on an M×M grid large enough for products."""

    def __init__(self, L: float, mode_sets: Sequence[np.ndarray], degree: int):
        K = max(int(np.max(np.abs(ms))) for ms in mode_sets)
        self.M = _even_fast_len(degree * K + 2)
        self.L = L
        self.period = 2 * math.pi * L

    def place(self, modes, coeffs, t=0.0):
        arr = np.zeros((self.M, self.M), complex)
        p = (modes[:, 0] ** 2 - modes[:, 1] ** 2) / self.L**2
        arr[modes[:, 0] % self.M, modes[:, 1] % self.M] = coeffs * np.exp(1j * t * p)
        return sfft.ifft2(arr) * (self.M * self.M / self.period)

    @property
    def cell(self) -> float:
        return (self.period / self.M) ** 2


def _p_span(modes, L):
    p = (modes[:, 0] ** 2 - modes[:, 1] ** 2) / L**2
    return float(p.min()), float(p.max())


def _gauss_time(f, t0, t1, bandwidth, nodes=None):
    """∫_{t0}^{t1} f by Gauss-Legendre.

    Without ``nodes`` the size comes from the integrand's time bandwidth and is
    doubled until the value moves by less than 1e−6; with ``nodes`` the rule is
    applied once. Returns (value, nodes used, relative change at the last doubling).
    """
    half = 0.5 * (t1 - t0)

    def rule(n):
        x, w = leggauss(n)
        return half * sum(wi * f(t0 + half * (xi + 1)) for xi, wi in zip(x, w))

    if nodes is not None:
        return rule(nodes), nodes, math.nan
    nodes = int(math.ceil(0.6 * bandwidth * half)) + 12
    value = rule(nodes)
    change = math.inf
    for _ in range(6):
        finer = rule(2 * nodes)
        change = abs(finer - value) / max(abs(finer), 1e-300)
        nodes, value = 2 * nodes, finer
        if change < QUAD_RTOL:
            break
    return value, nodes, change


def bilinear_norm(L: float, modes1, c1, modes2, c2, t_range=(0.0, 1.0), nodes=None):
    """‖e^{itP}u₁ · e^{itP}u₂‖_{L²(t_range × T²_L)} with the spatial integral exact.

    Returns (norm, nodes, relative change at the last doubling).
    """
    modes1, modes2 = np.asarray(modes1), np.asarray(modes2)
    grid = _ModeGrid(L, [modes1, modes2], 4)
    lo1, hi1 = _p_span(modes1, L)
    lo2, hi2 = _p_span(modes2, L)
    band = (hi1 + hi2) - (lo1 + lo2)

    def integrand(t):
        w = grid.place(modes1, c1, t) * grid.place(modes2, c2, t)
        return grid.cell * float(np.sum(np.abs(w) ** 2))

    val, n, change = _gauss_time(integrand, t_range[0], t_range[1], band, nodes)
    return math.sqrt(max(val, 0.0)), n, change


def l4_spacetime_norm(L: float, modes, coeffs, t_range, nodes=None):
    """‖e^{itP}u‖_{L⁴(t_range × T²_L)}. Returns (norm, nodes, relative change at the last doubling)."""
    modes = np.asarray(modes)
    grid = _ModeGrid(L, [modes], 4)
    lo, hi = _p_span(modes, L)

    def integrand(t):
        return grid.cell * float(np.sum(np.abs(grid.place(modes, coeffs, t)) ** 4))

    val, n, change = _gauss_time(integrand, t_range[0], t_range[1], 2 * (hi - lo), nodes)
    return max(val, 0.0) ** 0.25, n, change


def _gaussian(rng, k):
    return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2)


def _cell_rng(seed: int, *keys) -> np.random.Generator:
    ints = [int(seed)] + [int(round(k * 1_000_000)) % (2**63) for k in keys]
    return np.random.default_rng(ints)


# --- bilinear probe -----------------------------------------------------------


@dataclass
class BilinearStats:
    N1: int
    N2: int
    L: float
    center1: tuple[float, float]
    center2: tuple[float, float]
    ratios: np.ndarray = field(repr=False)
    nodes: int
    quad_change: float
    seed: int
    seconds: float

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def std(self) -> float:
        return float(np.std(self.ratios))


def _check_dyadic(*Ns):
    for N in Ns:
        if not (isinstance(N, (int, np.integer)) and N >= 1 and (N & (N - 1)) == 0):
            raise ValueError(f"dyadic sizes must be powers of 2, got {N!r}")


def bilinear_ratio(N1: int, N2: int, center1=(0, 0), center2=(0, 0), L: float = 1.0,
                   trials: int = 50, seed: int = 0) -> BilinearStats:
    """Ratios ‖e^{itP}u₁ e^{itP}u₂‖_{L²([0,1]×T²_L)} / (min(N1,N2)^{1/2}‖u₁‖‖u₂‖) for Gaussian data on annuli.

    The time quadrature size is fixed on the first trial by doubling until the
    value settles to 1e−6, then reused for the cell (all trials share the band).
    """
    _check_dyadic(N1, N2)
    start = time.perf_counter()
    m1 = _modes_in(FreqBox.annulus(N1, center1), L)
    m2 = _modes_in(FreqBox.annulus(N2, center2), L)
    if not len(m1) or not len(m2):
        raise ValueError(f"annulus N1={N1} or N2={N2} holds no lattice point at L={L}")
    rng = _cell_rng(seed, N1, N2, L, *center1, *center2)
    ratios, nodes, change = [], None, math.nan
    for k in range(trials):
        c1, c2 = _gaussian(rng, len(m1)), _gaussian(rng, len(m2))
        if nodes is None:
            val, nodes, change = bilinear_norm(L, m1, c1, m2, c2)
        else:
            val = bilinear_norm(L, m1, c1, m2, c2, nodes=nodes)[0]
        ratios.append(val / (math.sqrt(min(N1, N2)) * np.linalg.norm(c1) * np.linalg.norm(c2)))
    return BilinearStats(N1, N2, float(L), tuple(center1), tuple(center2), np.asarray(ratios),
                         int(nodes), float(change), int(seed), time.perf_counter() - start)


def _bilinear_cost(N1, N2, L, centers) -> float:
    K = L * (max(abs(c) for c in centers) + 2 * max(N1, N2))
    return (4 * K + 2) ** 2 * (K / L) ** 2


@dataclass
class UniformityReport:
    cells: list[BilinearStats]
    spreads: dict[tuple[int, int], float]
    shift_factors: dict[tuple[int, int], float]
    complete: bool
    violation: Optional[str]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violation is None and self.complete


def bilinear_uniformity(Ls: Sequence[float] = (1, 2, 4, 8), Ns: Sequence[int] = (1, 2, 4, 8, 16),
                        trials: int = 50, seed: int = 0, spread_max: float = 4.0,
                        shift: tuple[float, float] = (3, 5), shift_max: float = 1.5,
                        budget_s: Optional[float] = None) -> UniformityReport:
    """Sweep (N1 ≤ N2) × L with centered and shifted annuli, cheapest pairs first.

    A pair is judged once all its L values are in: the spread is max/min of the
    per-L max ratios, and the shift factor compares shifted to centered maxima.
    The sweep stops at the first violation or when the time budget runs out.
    """
    pairs = [(a, b) for a in Ns for b in Ns if a <= b]
    pairs.sort(key=lambda ab: max(_bilinear_cost(ab[0], ab[1], L, shift) for L in Ls))
    start = time.perf_counter()
    cells, spreads, shifts = [], {}, {}
    for N1, N2 in pairs:
        centered, moved = [], []
        for L in Ls:
            if budget_s is not None and time.perf_counter() - start > budget_s:
                return UniformityReport(cells, spreads, shifts, False, None,
                                        [f"time budget {budget_s:g}s exhausted before ({N1},{N2})"])
            c = bilinear_ratio(N1, N2, L=L, trials=trials, seed=seed)
            sh = bilinear_ratio(N1, N2, shift, shift, L=L, trials=trials, seed=seed)
            cells += [c, sh]
            centered.append(c.max)
            moved.append(sh.max)
        spreads[(N1, N2)] = max(centered) / min(centered)
        shifts[(N1, N2)] = max(max(a / b, b / a) for a, b in zip(moved, centered))
        if spreads[(N1, N2)] > spread_max:
            return UniformityReport(cells, spreads, shifts, False,
                                    f"max ratio spreads by {spreads[(N1, N2)]:.3g} across L at (N1,N2)=({N1},{N2})")
        if shifts[(N1, N2)] > shift_max:
            return UniformityReport(cells, spreads, shifts, False,
                                    f"shifted annuli differ by {shifts[(N1, N2)]:.3g} at (N1,N2)=({N1},{N2})")
    return UniformityReport(cells, spreads, shifts, True, None)


# --- semiclassical L⁴ --------------------------------------------------------------


@dataclass
class ProbeStats:
    label: str
    ratios: np.ndarray = field(repr=False)
    nodes: int
    quad_change: float
    seed: int

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def std(self) -> float:
        return float(np.std(self.ratios))


def semiclassical_l4(h: float, trials: int = 50, seed: int = 0, shape: Literal["annulus", "cube"] = "annulus",
                     start: float = 0.0, modes=None, coeffs=None) -> ProbeStats:
    """‖e^{itP}v₀‖_{L⁴(J×T²)} / ‖v₀‖_{L²} on T² (L = 1) with J = [start, start + h].

    Random data fill the annulus h⁻¹ ≤ max(|m|,|n|) ≤ 2h⁻¹ (or the cube of side 2h⁻¹);
    explicit ``modes``/``coeffs`` replace the ensemble with a single trial.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    inv = 1.0 / h
    N = int(round(inv))
    if abs(inv - N) > 1e-12:
        raise ValueError(f"1/h must be an integer power of 2, got {inv}")
    _check_dyadic(N)
    J = (start, start + h)
    if modes is not None:
        modes = np.asarray(modes)
        c = np.asarray(coeffs, dtype=complex)
        val, nodes, change = l4_spacetime_norm(1.0, modes, c, J)
        return ProbeStats("explicit", np.array([val / np.linalg.norm(c)]), nodes, change, seed)
    box = FreqBox.annulus(N) if shape == "annulus" else FreqBox.cube(2 * N)
    ms = _modes_in(box, 1.0)
    rng = _cell_rng(seed, N, 1 if shape == "annulus" else 2)
    ratios, nodes, change = [], None, math.nan
    for _ in range(trials):
        c = _gaussian(rng, len(ms))
        if nodes is None:
            val, nodes, change = l4_spacetime_norm(1.0, ms, c, J)
        else:
            val = l4_spacetime_norm(1.0, ms, c, J, nodes=nodes)[0]
        ratios.append(val / np.linalg.norm(c))
    return ProbeStats(f"{shape} h={h:g}", np.asarray(ratios), int(nodes), float(change), seed)


# --- trilinear probe ------------------------------------------------------------------


@dataclass
class TrilinearResult:
    ratio: float
    cubic_ratio: float
    numerator: float
    cubic_numerator: float
    denominators: tuple[float, float, float]


def _space_time_mask(st: SpaceTimeSpectrum) -> np.ndarray:
    g = st.grid
    k = sfft.fftfreq(st.nt, 1.0 / st.nt)
    inside_t = 3 * np.abs(k) < st.nt
    inside_x = (3 * np.abs(g.m) < g.nx) & (3 * np.abs(g.n) < g.ny)
    return inside_t[:, None, None] & inside_x[None]


def trilinear_probe(u1: SpaceTimeSpectrum, u2: SpaceTimeSpectrum, u3: SpaceTimeSpectrum,
                    s: float = 0.75, b: float = DEFAULT_B, b_prime: float = DEFAULT_B_PRIME) -> TrilinearResult:
    """‖E(u₁u₂)u₃‖_{X^{s,−b′}} / Π‖u_i‖_{X^{s,b}}, with the plain cubic product alongside.

    Inputs are cut to the 2/3 band in space and time, then multiplied on a grid
    refined twice, where the cubic products are free of aliasing.
    """
    ref = u1
    for u in (u2, u3):
        if u.grid != ref.grid or u.nt != ref.nt or u.T_w != ref.T_w:
            raise ValueError("trilinear inputs must share grid, window and nt")
    mask = _space_time_mask(ref)
    parts = [u.with_coeffs(np.where(mask, u.coeffs, 0)) for u in (u1, u2, u3)]
    dens = [xsb_norm(u, s, b) for u in parts]
    if min(dens) == 0:
        raise ZeroDivisionError("an input has zero X^{s,b} norm")
    g = ref.grid
    big = make_grid(g.L, 2 * g.nx, 2 * g.ny)
    v1, v2, v3 = (u.values(pad=2) for u in parts)
    pair = _values_to_spectrum(v1 * v2, big, ref.T_w) * e_symbol(big)[None]
    pair_vals = SpaceTimeSpectrum(big, ref.T_w, pair, ref.taper).values()
    out = SpaceTimeSpectrum(big, ref.T_w, _values_to_spectrum(pair_vals * v3, big, ref.T_w), ref.taper)
    cubic = SpaceTimeSpectrum(big, ref.T_w, _values_to_spectrum(v1 * v2 * v3, big, ref.T_w), ref.taper)
    num = xsb_norm(out, s, -b_prime)
    cnum = xsb_norm(cubic, s, -b_prime)
    den = dens[0] * dens[1] * dens[2]
    return TrilinearResult(num / den, cnum / den, num, cnum, tuple(dens))


def _trilinear_grid(extent: int, L: float = 1.0):
    n = 3 * int(math.ceil(extent * L)) + 4
    n += n % 2
    return make_grid(L, n, n)


def _trilinear_nt(grid: TorusGrid, extent_mask: np.ndarray, reach: float) -> int:
    nt = 3 * required_nt(grid, extent_mask, reach) // 2 + 2
    return nt + nt % 2


def trilinear_ensemble(extent: int, trials: int = 200, s: float = 0.75, seed: int = 0,
                       b: float = DEFAULT_B, b_prime: float = DEFAULT_B_PRIME) -> ProbeStats:
    """Trilinear ratios for independent Gaussian space-time data with |m|, |n| ≤ extent and ⟨τ − p⟩ < 4."""
    g = _trilinear_grid(extent)
    mask = box_mask(g, FreqBox.cube(extent))
    nt = _trilinear_nt(g, mask, 4.0)
    rng = _cell_rng(seed, extent, s)
    ratios = []
    for _ in range(trials):
        us = [random_space_time(g, mask, nt, rng) for _ in range(3)]
        ratios.append(trilinear_probe(*us, s=s, b=b, b_prime=b_prime).ratio)
    return ProbeStats(f"trilinear extent={extent}", np.asarray(ratios), nt, math.nan, seed)


def trilinear_adversarial(extent: int, trials: int = 50, s: float = 0.75, seed: int = 0,
                          b: float = DEFAULT_B, b_prime: float = DEFAULT_B_PRIME) -> ProbeStats:
    """The two factors inside E at the lowest frequencies, the third at the top dyadic shell."""
    g = _trilinear_grid(extent)
    low = box_mask(g, FreqBox.cube(1))
    top = max(1, extent // 2)
    high = box_mask(g, FreqBox(0, 0, top, extent, "annulus"))
    nt = _trilinear_nt(g, low | high, 4.0)
    rng = _cell_rng(seed, extent, s, 7)
    ratios = []
    for _ in range(trials):
        u1 = random_space_time(g, low, nt, rng)
        u2 = random_space_time(g, low, nt, rng)
        u3 = random_space_time(g, high, nt, rng)
        ratios.append(trilinear_probe(u1, u2, u3, s=s, b=b, b_prime=b_prime).ratio)
    return ProbeStats(f"adversarial extent={extent}", np.asarray(ratios), nt, math.nan, seed)
