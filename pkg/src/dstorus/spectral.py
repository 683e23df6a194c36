"""Grids, the orthonormal Fourier pair on the scaled torus, and diagonal multipliers.

The torus T²_L has period 2πL on both axes. Coefficients are taken against the
orthonormal basis e_{m,n}(x, y) = (2πL)^{-1} exp(i(m x + n y)/L), so that
Σ|c(m,n)|² equals the L² norm of the field.

Spectra are stored in FFT order: row index i holds frequency m = fftfreq(nx)·nx,
which places the Nyquist mode on the negative side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "Field",
    "Spectrum",
    "FreqBox",
    "EmptyBoxWarning",
    "make_grid",
    "transform",
    "inverse_transform",
    "basis_field",
    "p_symbol",
    "e_symbol",
    "apply_P",
    "apply_E",
    "solve_phi",
    "propagate_linear",
    "hs_norm",
    "lp_norm",
    "box_mask",
    "project_box",
    "dyadic_boxes",
    "dealias_mask",
    "density_E",
    "nonlinear_term",
]


class EmptyBoxWarning(UserWarning):
    """A frequency box missed every representable lattice point."""


@dataclass(frozen=True)
class TorusGrid:
    L: float
    nx: int
    ny: int

    def __post_init__(self):
        problems = []
        if not (isinstance(self.L, (int, float)) and math.isfinite(self.L) and self.L > 0):
            problems.append(f"scale L must be a positive finite number, got {self.L!r}")
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
                problems.append(f"{name} must be an integer, got {n!r}")
            elif n < 4:
                problems.append(f"{name} must be at least 4, got {n}")
            elif n % 2:
                problems.append(f"{name} must be even, got odd value {n}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.L

    @property
    def dx(self) -> float:
        return self.period / self.nx

    @property
    def dy(self) -> float:
        return self.period / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def weight(self) -> float:
        """Quadrature weight per node, (2πL)²/(nx·ny)."""
        return self.period**2 / (self.nx * self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return self.period * np.arange(self.nx) / self.nx

    @cached_property
    def y(self) -> np.ndarray:
        return self.period * np.arange(self.ny) / self.ny

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def m(self) -> np.ndarray:
        """Integer x-frequencies in FFT order, shape (nx, 1)."""
        return np.rint(sfft.fftfreq(self.nx, 1.0 / self.nx)).astype(np.int64)[:, None]

    @cached_property
    def n(self) -> np.ndarray:
        """Integer y-frequencies in FFT order, shape (1, ny)."""
        return np.rint(sfft.fftfreq(self.ny, 1.0 / self.ny)).astype(np.int64)[None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        """Physical |ξ|² = (m² + n²)/L² on the spectral lattice."""
        return (self.m**2 + self.n**2) / self.L**2

    def index(self, m: int, n: int) -> tuple[int, int]:
        """Array position of frequency (m, n); raises if it is not representable."""
        if not (-self.nx // 2 <= m < self.nx // 2 and -self.ny // 2 <= n < self.ny // 2):
            raise IndexError(f"frequency ({m}, {n}) outside the {self.nx}x{self.ny} lattice")
        return m % self.nx, n % self.ny

    def with_scale(self, L: float) -> "TorusGrid":
        return TorusGrid(L, self.nx, self.ny)


def make_grid(L: float, nx: int, ny: int) -> TorusGrid:
    if isinstance(L, (int, np.integer)) and not isinstance(L, bool):
        L = float(L)
    return TorusGrid(L, nx, ny)


def _check_values(grid: TorusGrid, values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != grid.shape:
        raise ValueError(f"{what} shape {arr.shape} does not match grid {grid.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Field:
    """Grid values u(x_j, y_k), row-major with x along axis 0."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, "field"))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)


@dataclass(frozen=True)
class Spectrum:
    """Orthonormal-basis coefficients c(m, n) in FFT order."""

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _check_values(self.grid, self.coeffs, "spectrum"))

    def __getitem__(self, mn: tuple[int, int]) -> complex:
        return complex(self.coeffs[self.grid.index(*mn)])

    def centered(self) -> np.ndarray:
        """Coefficients rearranged so that index [nx/2, ny/2] is (0, 0)."""
        return sfft.fftshift(self.coeffs)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def map(self, multiplier: np.ndarray) -> "Spectrum":
        return Spectrum(self.grid, self.coeffs * multiplier)


def _forward(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    return sfft.fft2(values) * (grid.period / (grid.nx * grid.ny))


def _inverse(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifft2(coeffs) * (grid.nx * grid.ny / grid.period)


def transform(u: Field) -> Spectrum:
    return Spectrum(u.grid, _forward(u.grid, u.values))


def inverse_transform(spec: Spectrum) -> Field:
    return Field(spec.grid, _inverse(spec.grid, spec.coeffs))


def basis_field(grid: TorusGrid, m: int, n: int) -> Field:
    """Samples of e_{m,n} on the grid nodes."""
    X, Y = grid.mesh
    return Field(grid, np.exp(1j * (m * X + n * Y) / grid.L) / grid.period)


def p_symbol(grid: TorusGrid) -> np.ndarray:
    """Symbol (m² − n²)/L² of P = −∂²_x + ∂²_y."""
    return (grid.m**2 - grid.n**2) / grid.L**2


def e_symbol(grid: TorusGrid) -> np.ndarray:
    """Symbol 2m²/(m² + n²) of E, zero at the origin. Independent of L."""
    m2 = (grid.m**2).astype(float)
    r2 = m2 + grid.n**2
    out = np.zeros(grid.shape)
    np.divide(2.0 * m2, r2, out=out, where=r2 > 0)
    return out


def apply_P(spec: Spectrum) -> Spectrum:
    return spec.map(p_symbol(spec.grid))


def apply_E(spec: Spectrum) -> Spectrum:
    return spec.map(e_symbol(spec.grid))


def solve_phi(rho: Spectrum, tol: float = 1e-10) -> Spectrum:
    """Mean-zero solution of Δφ = ∂_x ρ; then 2∂_xφ = E(ρ)."""
    g = rho.grid
    c = rho.coeffs
    # Hermitian partner of (m, n) is (−m, −n); the negative Nyquist row maps to itself.
    partner = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
    scale = max(np.max(np.abs(c)), 1e-300)
    if np.max(np.abs(c - partner)) > tol * scale:
        raise ValueError("density spectrum is not Hermitian; rho must come from a real field")
    r2 = (g.m**2 + g.n**2).astype(float)
    mult = np.zeros(g.shape, dtype=complex)
    np.divide(-1j * g.m * g.L, r2, out=mult, where=r2 > 0)
    return rho.map(mult)


def propagate_linear(spec: Spectrum, t: float) -> Spectrum:
    """Free flow e^{itP}."""
    return spec.map(np.exp(1j * t * p_symbol(spec.grid)))


def hs_weight(grid: TorusGrid, s: float, homogeneous: bool = False) -> np.ndarray:
    if homogeneous:
        k2 = grid.k2
        w = np.zeros(grid.shape)
        np.power(k2, s, out=w, where=k2 > 0)
        return w
    return (1.0 + grid.k2) ** s


def hs_norm(spec: Spectrum, s: float, homogeneous: bool = False) -> float:
    """Sobolev norm with weight (1 + |ξ|²)^s, or the seminorm with |ξ|^{2s} off the origin."""
    w = hs_weight(spec.grid, s, homogeneous)
    return float(np.sqrt(np.sum(w * np.abs(spec.coeffs) ** 2)))


def lp_norm(u: Field, p: float | Literal["inf"]) -> float:
    a = np.abs(u.values)
    if p in (np.inf, "inf", "∞"):
        return float(a.max())
    if p not in (2, 4):
        raise ValueError(f"p must be 2, 4 or inf, got {p!r}")
    return float((u.grid.weight * np.sum(a**p)) ** (1.0 / p))


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    # str() keeps the value the caller wrote (0.1 → 1/10) rather than its binary expansion.
    return Fraction(str(float(v)))


@dataclass(frozen=True)
class FreqBox:
    """{lower ≤ max(|m/L − a|, |n/L − b|) ≤ upper} with exact rational tests.

    A cube has lower = 0. Set ``upper_open`` to exclude the outer face, which is
    what a disjoint dyadic partition needs.
    """

    a: Fraction
    b: Fraction
    lower: Fraction
    upper: Fraction
    shape: Literal["annulus", "cube"]
    upper_open: bool = False

    def __post_init__(self):
        for name in ("a", "b", "lower", "upper"):
            object.__setattr__(self, name, _as_fraction(getattr(self, name)))
        if self.shape not in ("annulus", "cube"):
            raise ValueError(f"shape must be 'annulus' or 'cube', got {self.shape!r}")
        if self.shape == "cube" and self.lower != 0:
            raise ValueError("a cube has no inner radius")
        if self.lower < 0 or self.upper < self.lower:
            raise ValueError(f"radii must satisfy 0 ≤ lower ≤ upper, got {self.lower}, {self.upper}")

    @classmethod
    def annulus(cls, N, center=(0, 0)) -> "FreqBox":
        N = _as_fraction(N)
        return cls(center[0], center[1], N, 2 * N, "annulus")

    @classmethod
    def cube(cls, N, center=(0, 0)) -> "FreqBox":
        return cls(center[0], center[1], Fraction(0), N, "cube")

    def contains(self, m: int, n: int, L) -> bool:
        Lf = _as_fraction(L)
        d = max(abs(Fraction(m) / Lf - self.a), abs(Fraction(n) / Lf - self.b))
        above = d >= self.lower
        below = d < self.upper if self.upper_open else d <= self.upper
        return bool(above and below)


def _sup_distance_numerators(box: FreqBox, L, m: np.ndarray, n: np.ndarray):
    """Integers D(m, n) and a scale S with max(|m/L − a|, |n/L − b|) = D/S exactly."""
    Lf = _as_fraction(L)
    p, q = Lf.numerator, Lf.denominator
    A = math.lcm(box.a.denominator, box.b.denominator)
    ka = box.a.numerator * (A // box.a.denominator) * p
    kb = box.b.numerator * (A // box.b.denominator) * p
    big = max(abs(ka), abs(kb), q * A * (int(np.max(np.abs(m))) + int(np.max(np.abs(n))) + 1))
    dtype = np.int64 if big < 2**60 else object
    dm = np.abs(m.astype(dtype) * (q * A) - ka)
    dn = np.abs(n.astype(dtype) * (q * A) - kb)
    return np.maximum(dm, dn), p * A


def box_mask(grid: TorusGrid, box: FreqBox) -> np.ndarray:
    D, S = _sup_distance_numerators(box, grid.L, grid.m, grid.n)
    lo, hi = box.lower, box.upper
    above = D * lo.denominator >= lo.numerator * S
    scaled = D * hi.denominator
    below = scaled < hi.numerator * S if box.upper_open else scaled <= hi.numerator * S
    return np.asarray(above & below, dtype=bool)


def project_box(spec: Spectrum, box: FreqBox) -> Spectrum:
    """Orthogonal projection Δ_Q. Warns with EmptyBoxWarning when no mode lies in the box."""
    mask = box_mask(spec.grid, box)
    if not mask.any():
        warnings.warn(f"{box} holds no representable frequency", EmptyBoxWarning, stacklevel=2)
    return Spectrum(spec.grid, np.where(mask, spec.coeffs, 0))


def dyadic_boxes(grid: TorusGrid, center=(0, 0)) -> list[tuple[int, FreqBox]]:
    """Disjoint dyadic pieces covering the lattice.

    The N = 1 piece is the cube max < 2 (it carries the zero mode). For N ≥ 2 the
    pieces are N ≤ max < 2N.
    """
    top = max(grid.nx, grid.ny) / (2 * grid.L) + max(abs(float(center[0])), abs(float(center[1])))
    pieces = [(1, FreqBox(center[0], center[1], 0, 2, "cube", upper_open=True))]
    N = 2
    while N <= top:
        pieces.append((N, FreqBox(center[0], center[1], N, 2 * N, "annulus", upper_open=True)))
        N *= 2
    return pieces


def dealias_mask(grid: TorusGrid) -> np.ndarray:
    """2/3 rule: keep |m| < nx/3 and |n| < ny/3."""
    return (3 * np.abs(grid.m) < grid.nx) & (3 * np.abs(grid.n) < grid.ny)


def density_E(grid: TorusGrid, values: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Real potential E(|u|²) evaluated spectrally on the grid."""
    rho_hat = _forward(grid, np.abs(values) ** 2)
    mult = e_symbol(grid)
    if dealias:
        mult = mult * dealias_mask(grid)
    return _inverse(grid, rho_hat * mult).real


def nonlinear_term(u: Field, sigma: int = 1, e_enabled: bool = True, dealias: bool = True) -> Field:
    """−|u|²u − σE(|u|²)u with 2/3-rule filtering of input and product."""
    if sigma not in (1, -1):
        raise ValueError(f"sigma must be +1 or -1, got {sigma!r}")
    g = u.grid
    vals = u.values
    mask = dealias_mask(g) if dealias else None
    if dealias:
        vals = _inverse(g, _forward(g, vals) * mask)
    V = np.abs(vals) ** 2
    if e_enabled:
        V = V + sigma * density_E(g, vals, dealias)
    out = -V * vals
    if dealias:
        out = _inverse(g, _forward(g, out) * mask)
    return Field(g, out)
