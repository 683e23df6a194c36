"""Initial fields named by the ``initial`` config section."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .exact import STATIONARY_AMPLITUDE, Bump, DiagonalSolution, OzawaParams, OzawaSolution, ProfileSpec, sample_on_torus
from .spectral import Field, FreqBox, TorusGrid, _inverse, box_mask

__all__ = ["initial_field"]


def initial_field(kind: str, grid: TorusGrid, *, amplitude: float = 1.0, width: float = 1.0, cx: float = 1.0,
                  sy: float = 0.5, profile_cos=(2.0, 1.0), profile_sin=(), k_max: int = 4,
                  seed: Optional[int] = None) -> Field:
    """Build u₀ on ``grid``.

    zero       u₀ = 0
    gaussian   A exp(−r²/(width·L)²) about the cell center
    exp_trig   A exp(cx cos(x/L) + sy sin(y/L))
    hypnls     the diagonal profile A·u₀(x + y) with the given Fourier coefficients
    ozawa      the pseudo-conformal profile at t = 0, scaled by A and cut off inside the cell
    random     Gaussian coefficients on max(|m|,|n|)/L ≤ k_max, scaled to L² norm A (needs a seed)
    """
    X, Y = grid.mesh
    L = grid.L
    if kind == "zero":
        return Field(grid, np.zeros(grid.shape, complex))
    if kind == "gaussian":
        r2 = (X - math.pi * L) ** 2 + (Y - math.pi * L) ** 2
        return Field(grid, (amplitude * np.exp(-r2 / (width * L) ** 2)).astype(complex))
    if kind == "exp_trig":
        return Field(grid, (amplitude * np.exp(cx * np.cos(X / L) + sy * np.sin(Y / L))).astype(complex))
    if kind == "hypnls":
        prof = ProfileSpec(cos=tuple(profile_cos), sin=tuple(profile_sin), amplitude=amplitude)
        return sample_on_torus(DiagonalSolution(prof), grid, 0.0).field
    if kind == "ozawa":
        sol = OzawaSolution(OzawaParams(a=1.0, b=-1.0, amplitude=STATIONARY_AMPLITUDE * amplitude))
        return sample_on_torus(sol, grid, 0.0, Bump(0.6 * math.pi * L, 0.95 * math.pi * L)).field
    if kind == "random":
        if seed is None:
            raise ValueError("random initial data need an explicit seed (run.seed or --seed)")
        rng = np.random.default_rng(seed)
        mask = box_mask(grid, FreqBox.cube(k_max))
        c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * mask
        norm = float(np.sqrt(np.sum(np.abs(c) ** 2)))
        if norm == 0:
            raise ValueError(f"k_max={k_max} selects no modes on this grid")
        return Field(grid, _inverse(grid, c * (amplitude / norm)))
    raise ValueError(f"unknown initial kind {kind!r}")
