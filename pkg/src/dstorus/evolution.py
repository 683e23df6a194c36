"""Strang-split time integration, run diagnostics, blow-up detection and rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import optimize

from .spectral import (
    Field,
    TorusGrid,
    _forward,
    _inverse,
    dealias_mask,
    density_E,
    e_symbol,
    hs_weight,
    make_grid,
    p_symbol,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "RateFit",
    "BlowupReport",
    "ScaledState",
    "FitError",
    "COMPLETED",
    "RESOLUTION_LIMITED",
    "NORM_THRESHOLD",
    "nonlinear_substep",
    "strang_step",
    "run_simulation",
    "detect_blowup",
    "fit_rate",
    "tail_fraction",
    "mass_concentration",
    "rescale_field",
    "rescale_solution",
    "in_theorem_range",
]

COMPLETED = "completed"
RESOLUTION_LIMITED = "resolution_limited_blowup"
NORM_THRESHOLD = "norm_threshold"

CONCENTRATION_DIVISORS = (2, 4, 8, 16)
MIN_FIT_SAMPLES = 8
# A resolved window must at least double the norm before a power law is fitted to it.
MIN_FIT_GROWTH = 2.0


def in_theorem_range(s: float) -> bool:
    return 0.5 < s < 1.0


@dataclass(frozen=True)
class SolverConfig:
    L: float = 1.0
    nx: int = 128
    ny: int = 128
    s_list: tuple[float, ...] = (0.75,)
    dt0: float = 1e-3
    t_end: float = 1.0
    sigma: int = 1
    e_enabled: bool = True
    adaptive: bool = True
    dealias: bool = True
    dt_min_factor: float = 1e-6
    linf_max: float = 1e3
    tail_max: float = 1e-4
    sample_dt: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "s_list", tuple(float(s) for s in self.s_list))
        problems = []
        try:
            make_grid(self.L, self.nx, self.ny)
        except ValueError as exc:
            problems.append(str(exc))
        if not self.dt0 > 0:
            problems.append(f"dt0 must be positive, got {self.dt0}")
        if not self.t_end > 0:
            problems.append(f"t_end must be positive, got {self.t_end}")
        if self.sigma not in (1, -1):
            problems.append(f"sigma must be +1 or -1, got {self.sigma}")
        if not 0 < self.tail_max < 1:
            problems.append(f"tail_max must lie in (0, 1), got {self.tail_max}")
        if not self.linf_max > 0:
            problems.append(f"linf_max must be positive, got {self.linf_max}")
        if not 0 < self.dt_min_factor <= 1:
            problems.append(f"dt_min_factor must lie in (0, 1], got {self.dt_min_factor}")
        if not self.sample_dt > 0:
            problems.append(f"sample_dt must be positive, got {self.sample_dt}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def grid(self) -> TorusGrid:
        return make_grid(self.L, self.nx, self.ny)

    @property
    def theorem_range(self) -> dict[float, bool]:
        return {s: in_theorem_range(s) for s in self.s_list}

    def expected_rows(self) -> int:
        """Sample rows of a run that reaches t_end."""
        k = int(math.floor(self.t_end / self.sample_dt + 1e-9))
        partial = self.t_end - k * self.sample_dt > 1e-12 * max(1.0, self.t_end)
        return k + 1 + int(partial)


@dataclass
class Trajectory:
    s_list: tuple[float, ...]
    times: list[float] = field(default_factory=list)
    l2: list[float] = field(default_factory=list)
    hs: dict[float, list[float]] = field(default_factory=dict)
    linf: list[float] = field(default_factory=list)
    l4acc: list[float] = field(default_factory=list)
    tail: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    steps: int = 0
    final: Optional[Field] = None

    def __post_init__(self):
        for s in self.s_list:
            self.hs.setdefault(s, [])

    def append(self, t, l2, hs_values, linf, l4acc, tail, dt):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample time {t} does not advance past {self.times[-1]}")
        self.times.append(float(t))
        self.l2.append(float(l2))
        for s, v in zip(self.s_list, hs_values):
            self.hs[s].append(float(v))
        self.linf.append(float(linf))
        self.l4acc.append(float(l4acc))
        self.tail.append(float(min(max(tail, 0.0), 1.0)))
        self.dt.append(float(dt))

    def __len__(self):
        return len(self.times)

    @property
    def mass_drift(self) -> float:
        """Largest relative change of the L² norm from its initial value."""
        if not self.l2 or self.l2[0] == 0:
            return 0.0
        a = np.asarray(self.l2)
        return float(np.max(np.abs(a - a[0])) / a[0])

    def columns(self) -> list[str]:
        return ["t", "l2"] + [f"hs_{s:g}" for s in self.s_list] + ["linf", "l4acc", "tail_frac", "dt"]

    def table(self) -> np.ndarray:
        cols = [self.times, self.l2] + [self.hs[s] for s in self.s_list]
        cols += [self.linf, self.l4acc, self.tail, self.dt]
        return np.column_stack([np.asarray(c, dtype=float) for c in cols]) if self.times else np.zeros((0, len(cols)))

    def truncated(self, t_max: float) -> "Trajectory":
        out = Trajectory(self.s_list)
        for i, t in enumerate(self.times):
            if t > t_max:
                break
            out.append(t, self.l2[i], [self.hs[s][i] for s in self.s_list], self.linf[i],
                       self.l4acc[i], self.tail[i], self.dt[i])
        return out


class FitError(ValueError):
    """Data unsuitable for a power-law blow-up fit."""


@dataclass(frozen=True)
class RateFit:
    T_est: float
    p_est: float
    C_est: float
    residual: float
    window: tuple[float, float]
    n_samples: int
    p_stderr: float
    p_uncertainty: float
    ill_conditioned: bool
    s: Optional[float] = None

    @property
    def meets_lower_bound(self) -> Optional[bool]:
        """p ≥ s/2: the slowest blow-up rate permitted for H^s data."""
        return None if self.s is None else self.p_est >= self.s / 2

    @property
    def conformal_gap(self) -> Optional[float]:
        return None if self.s is None else abs(self.p_est - self.s)

    @property
    def classification(self) -> str:
        if self.s is None:
            return "unclassified"
        if self.p_est < self.s / 2 - 0.1:
            return "below lower bound"
        if self.conformal_gap <= 0.02:
            return "pseudo-conformal rate"
        if self.p_est >= self.s / 2:
            return "consistent with lower bound"
        return "marginal"

    def as_dict(self) -> dict:
        return {
            "T_est": self.T_est,
            "p_est": self.p_est,
            "C_est": self.C_est,
            "residual": self.residual,
            "window_start": self.window[0],
            "window_end": self.window[1],
            "n_samples": self.n_samples,
            "p_stderr": self.p_stderr,
            "p_uncertainty": self.p_uncertainty,
            "ill_conditioned": self.ill_conditioned,
            "s": self.s,
            "lower_bound": None if self.s is None else self.s / 2,
            "meets_lower_bound": self.meets_lower_bound,
            "conformal_gap": self.conformal_gap,
            "classification": self.classification,
        }


def _validate_fit_data(times, values):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape:
        raise FitError("times and values must be 1-D arrays of equal length")
    if len(t) < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} samples, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise FitError("non-finite samples")
    if np.any(np.diff(t) <= 0):
        raise FitError("times must be strictly increasing")
    if np.any(v <= 0):
        raise FitError("values must be positive")
    if np.any(np.diff(v) <= 0):
        raise FitError("values must increase over the fit window (no growth to fit)")
    return t, v


def _fit_core(t, v):
    logv = np.log(v)
    span = t[-1] - t[0]

    def inner(T):
        X = np.column_stack([np.ones_like(t), -np.log(T - t)])
        coef, *_ = np.linalg.lstsq(X, logv, rcond=None)
        r = X @ coef - logv
        return float(r @ r), coef

    lo, hi = math.log(span * 1e-10), math.log(span * 1e2)
    res = optimize.minimize_scalar(
        lambda z: inner(t[-1] + math.exp(z))[0], bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    # The bounded search never evaluates the end points; check the upper one explicitly.
    z = res.x
    if inner(t[-1] + math.exp(hi))[0] < inner(t[-1] + math.exp(z))[0]:
        z = hi
    T = t[-1] + math.exp(z)
    rss, (logC, p) = inner(T)
    ill = (hi - z) < 1e-3 * (hi - lo)
    # Gauss-Newton covariance of (log C, p, T).
    d = T - t
    J = np.column_stack([np.ones_like(t), -np.log(d), -p / d])
    dof = max(len(t) - 3, 1)
    sigma2 = rss / dof
    try:
        cov = sigma2 * np.linalg.inv(J.T @ J)
        p_err = float(math.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        p_err = float("inf")
        ill = True
    C = math.exp(logC) if logC < 700 else math.inf
    return T, float(p), C, float(math.sqrt(rss / len(t))), p_err, ill


def fit_rate(times: Sequence[float], values: Sequence[float], s: Optional[float] = None) -> RateFit:
    """Fit v(t) ≈ C (T − t)^{−p} over (T, p, C).

    T is searched on a log scale beyond the last sample with the linear fit for
    (log C, p) solved inside. The reported uncertainty is the larger of the
    Gauss-Newton standard error and the spread of refits on the leading and
    trailing two-thirds of the window.
    """
    t, v = _validate_fit_data(times, values)
    T, p, C, resid, p_err, ill = _fit_core(t, v)
    spread = 0.0
    k = max(MIN_FIT_SAMPLES, (2 * len(t)) // 3)
    if k < len(t):
        for sl in (slice(0, k), slice(len(t) - k, None)):
            spread = max(spread, abs(_fit_core(t[sl], v[sl])[1] - p))
    floor = 1e-7 * (1.0 + abs(p))
    return RateFit(
        T_est=T, p_est=p, C_est=C, residual=resid, window=(float(t[0]), float(t[-1])),
        n_samples=len(t), p_stderr=p_err, p_uncertainty=max(p_err, spread, floor),
        ill_conditioned=bool(ill), s=s,
    )


@dataclass
class BlowupReport:
    status: str
    stop_time: float
    fits: dict[float, RateFit] = field(default_factory=dict)
    fit_notes: dict[float, str] = field(default_factory=dict)
    concentration_radii: tuple[float, ...] = ()
    concentration: list[tuple[float, tuple[float, ...]]] = field(default_factory=list)
    initial_tail: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def is_blowup(self) -> bool:
        return self.status != COMPLETED

    @property
    def finite_time_fits(self) -> dict[float, RateFit]:
        """Fits that locate a finite blow-up time inside the search range."""
        return {s: f for s, f in self.fits.items() if not f.ill_conditioned}


def nonlinear_substep(u: Field, dt: float, sigma: int = 1, e_enabled: bool = True, dealias: bool = True) -> Field:
    """Exact flow of i u_t = −(|u|² + σE(|u|²)) u over dt.

    |u| is conserved pointwise along this flow, so V is frozen and the update is a phase.
    """
    return Field(u.grid, _phase_step(u.grid, u.values, dt, sigma, e_enabled, dealias))


def _phase_step(grid, vals, dt, sigma, e_enabled, dealias):
    V = np.abs(vals) ** 2
    if e_enabled:
        V = V + sigma * density_E(grid, vals, dealias)
    return vals * _cis(dt * V)


def _cis(phase):
    out = np.empty(phase.shape, dtype=complex)
    np.cos(phase, out=out.real)
    np.sin(phase, out=out.imag)
    return out


class _Stepper:
    """Strang step on coefficient arrays with multipliers cached.

    m² − n² takes few distinct integer values, so each half-step multiplier is
    built on that value table and gathered, which matters when dt changes every step.
    """

    def __init__(self, config: SolverConfig):
        self.cfg = config
        g = self.grid = config.grid
        d = (g.m**2 - g.n**2).astype(np.int64)
        self.levels = np.arange(int(d.min()), int(d.max()) + 1, dtype=float) / g.L**2
        self.level_index = d - int(d.min())
        self.mask = dealias_mask(g) if config.dealias else None
        self.tail_mask = _tail_mask(g, config.dealias)
        # E acts on the real density, so a half-spectrum transform suffices.
        half = g.ny // 2 + 1
        emult = e_symbol(g)[:, :half]
        if self.mask is not None:
            emult = emult * self.mask[:, :half]
        self.emult = emult
        self._last: tuple[float, np.ndarray] = (math.nan, None)

    def half(self, dt):
        if self._last[0] == dt:
            return self._last[1]
        h = _cis(0.5 * dt * self.levels)[self.level_index]
        if self.mask is not None:
            h = h * self.mask
        self._last = (dt, h)
        return h

    def potential(self, vals):
        rho = vals.real**2 + vals.imag**2
        if not self.cfg.e_enabled:
            return rho
        e = sfft.irfft2(sfft.rfft2(rho) * self.emult, s=rho.shape)
        return rho + self.cfg.sigma * e

    def step(self, coeffs, dt):
        g = self.grid
        H = self.half(dt)
        vals = _inverse(g, coeffs * H)
        vals = vals * _cis(dt * self.potential(vals))
        return _forward(g, vals) * H

    def tail(self, coeffs):
        e = coeffs.real**2 + coeffs.imag**2
        total = e.sum()
        return 0.0 if total == 0 else float(e[self.tail_mask].sum() / total)


def strang_step(u: Field, dt: float, config: SolverConfig) -> Field:
    """Half linear step, exact nonlinear phase, half linear step. The 2/3 mask rides on the linear halves."""
    if dt == 0 or not math.isfinite(dt):
        raise ValueError(f"dt must be finite and nonzero, got {dt}")
    st = _Stepper(config)
    out = _inverse(u.grid, st.step(_forward(u.grid, u.values), dt))
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after Strang step")
    return Field(u.grid, out)


def _tail_mask(grid: TorusGrid, dealias: bool) -> np.ndarray:
    kx = grid.nx / 3 if dealias else grid.nx / 2
    ky = grid.ny / 3 if dealias else grid.ny / 2
    return np.maximum(np.abs(grid.m) / kx, np.abs(grid.n) / ky) >= 0.5


def tail_fraction(grid: TorusGrid, coeffs: np.ndarray, dealias: bool = True) -> float:
    """Share of L² energy in the top octave of the retained band."""
    e = np.abs(coeffs) ** 2
    total = e.sum()
    if total == 0:
        return 0.0
    return float(e[_tail_mask(grid, dealias)].sum() / total)


def mass_concentration(u: Field, radii: Sequence[float]) -> tuple[float, ...]:
    """Fraction of ‖u‖²_{L²} inside balls of the given radii about the density peak."""
    g = u.grid
    rho = np.abs(u.values) ** 2
    total = rho.sum()
    if total == 0:
        return tuple(0.0 for _ in radii)
    i, j = np.unravel_index(np.argmax(rho), rho.shape)
    X, Y = g.mesh
    P = g.period
    dx = (X - g.x[i] + P / 2) % P - P / 2
    dy = (Y - g.y[j] + P / 2) % P - P / 2
    d2 = dx * dx + dy * dy
    return tuple(float(rho[d2 <= r * r].sum() / total) for r in radii)


def _diagnostics(grid, coeffs, vals, weights):
    e = np.abs(coeffs) ** 2
    l2 = math.sqrt(e.sum())
    hs = [math.sqrt(float(np.sum(w * e))) for w in weights]
    a = np.abs(vals)
    return l2, hs, float(a.max()), float(grid.weight * np.sum(a**4))


def run_simulation(
    u0: Field,
    config: SolverConfig,
    *,
    t0: float = 0.0,
    l4acc0: float = 0.0,
    on_sample: Optional[Callable[[int, float, Field], None]] = None,
    trajectory: Optional[Trajectory] = None,
) -> tuple[Trajectory, BlowupReport]:
    """Integrate from t0 to t_end, sampling every sample_dt.

    Steps are shortened so that every sample time is hit exactly; this makes a
    restart from a sampled state reproduce the uninterrupted run. ``on_sample``
    receives (row index, time, state) after each row is recorded; pass an empty
    ``trajectory`` to read the recorded row from inside that callback.
    """
    cfg = config
    g = cfg.grid
    if u0.grid.shape != g.shape or u0.grid.L != g.L:
        raise ValueError(f"initial field grid {u0.grid} does not match config grid {g}")
    st = _Stepper(cfg)
    weights = [hs_weight(g, s) for s in cfg.s_list]
    radii = tuple(cfg.L / k for k in CONCENTRATION_DIVISORS)
    if trajectory is None:
        traj = Trajectory(cfg.s_list)
    elif len(trajectory) or tuple(trajectory.s_list) != cfg.s_list:
        raise ValueError("a supplied trajectory must be empty and track the config's s_list")
    else:
        traj = trajectory
    coeffs = _forward(g, u0.values)
    vals = u0.values.copy()
    tail0 = st.tail(coeffs)
    report = BlowupReport(COMPLETED, t0, concentration_radii=radii, initial_tail=tail0)
    if tail0 > cfg.tail_max / 10:
        msg = f"initial tail fraction {tail0:.3g} exceeds tail_max/10; data may be under-resolved"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        report.notes.append(msg)

    def record(t, dt_used):
        l2, hs, linf, q4 = _diagnostics(g, coeffs, vals, weights)
        traj.append(t, l2, hs, linf, l4acc, st.tail(coeffs), dt_used)
        report.concentration.append((t, mass_concentration(Field(g, vals), radii)))
        if on_sample is not None:
            on_sample(len(traj) - 1, t, Field(g, vals))
        return linf, q4

    l4acc = float(l4acc0)
    k0 = int(math.floor(t0 / cfg.sample_dt + 1e-9))
    t = float(t0)
    linf, q4 = record(t, 0.0)
    status = detect_blowup(traj, cfg)
    k_next = k0 + 1
    dt_min = cfg.dt0 * cfg.dt_min_factor
    while status == COMPLETED:
        t_sample = min(k_next * cfg.sample_dt, cfg.t_end)
        if t_sample <= t + 1e-12 * max(1.0, abs(t)):
            if t_sample >= cfg.t_end:
                break
            k_next += 1
            continue
        dt = cfg.dt0 / (1.0 + linf * linf) if cfg.adaptive else cfg.dt0
        dt = min(max(dt, dt_min), cfg.dt0)
        hit = t + dt >= t_sample - 1e-12 * max(1.0, t_sample)
        if hit:
            dt = t_sample - t
        new = st.step(coeffs, dt)
        new_vals = _inverse(g, new)
        traj.steps += 1
        if not (np.all(np.isfinite(new)) and np.all(np.isfinite(new_vals))):
            status = RESOLUTION_LIMITED
            report.notes.append(f"non-finite state in step starting at t={t:.17g}")
            break
        coeffs, vals = new, new_vals
        if hit:
            # Samples carry grid values only, so re-derive the spectrum from them; a
            # restart from a saved sample then retraces the uninterrupted run bit for bit.
            coeffs = _forward(g, vals)
        a = np.abs(vals)
        q4_new = float(g.weight * np.sum(a**4))
        l4acc += 0.5 * dt * (q4 + q4_new)
        q4, linf = q4_new, float(a.max())
        t = t_sample if hit else t + dt
        crossed = linf > cfg.linf_max or st.tail(coeffs) > cfg.tail_max
        if hit or crossed:
            linf, q4 = record(t, dt)
            if hit:
                k_next += 1
            status = detect_blowup(traj, cfg)
            if hit and t >= cfg.t_end:
                break

    traj.final = Field(g, vals)
    report.status = status
    report.stop_time = traj.times[-1]
    if status != COMPLETED:
        _attach_fits(traj, cfg, report)
    return traj, report


def detect_blowup(traj: Trajectory, config: SolverConfig) -> str:
    """Status at the first sample crossing a threshold; norm_threshold wins ties."""
    if not len(traj):
        raise ValueError("empty trajectory")
    for linf, tail in zip(traj.linf, traj.tail):
        if linf > config.linf_max:
            return NORM_THRESHOLD
        if tail > config.tail_max:
            return RESOLUTION_LIMITED
    return COMPLETED


def stop_index(traj: Trajectory, config: SolverConfig) -> Optional[int]:
    for k, (linf, tail) in enumerate(zip(traj.linf, traj.tail)):
        if linf > config.linf_max or tail > config.tail_max:
            return k
    return None


def fit_window(times, values, tails, tail_max) -> tuple[int, int]:
    """Trailing index range [i0, i1) of resolved, strictly growing samples within two decades of the peak."""
    i1 = len(times)
    while i1 > 0 and tails[i1 - 1] >= tail_max:
        i1 -= 1
    if i1 == 0:
        return 0, 0
    vmax = max(values[:i1])
    i0 = i1 - 1
    while i0 > 0 and values[i0 - 1] < values[i0] and values[i0 - 1] >= vmax / 100:
        i0 -= 1
    return i0, i1


def _attach_fits(traj: Trajectory, cfg: SolverConfig, report: BlowupReport):
    for s in cfg.s_list:
        vals = traj.hs[s]
        i0, i1 = fit_window(traj.times, vals, traj.tail, cfg.tail_max)
        if i1 - i0 < MIN_FIT_SAMPLES:
            report.fit_notes[s] = (
                f"fit omitted: only {i1 - i0} growing resolved samples in the trailing window; "
                "reduce sample_dt or widen the run"
            )
            continue
        growth = vals[i1 - 1] / vals[i0]
        if growth < MIN_FIT_GROWTH:
            report.fit_notes[s] = (
                f"fit omitted: the norm grew only by a factor {growth:.4g} over the resolved window, "
                "too little to separate a blow-up law from slow growth"
            )
            continue
        try:
            report.fits[s] = fit_rate(traj.times[i0:i1], vals[i0:i1], s=s)
        except FitError as exc:
            report.fit_notes[s] = f"fit omitted: {exc}"
            continue
        if report.fits[s].ill_conditioned:
            report.fit_notes[s] = "ill-conditioned: blow-up time ran to the search bound; widen the window"


# --- scaling -----------------------------------------------------------------

LAMBDA_RANGE = (1e-6, 1e6)


def rescale_field(u: Field, lam: float) -> Field:
    """v(x) = λ u(λx) on T²_{L/λ}.

    Nodes map onto nodes, so the grid values scale by λ and the orthonormal
    coefficients stay exactly the same.
    """
    if not (math.isfinite(lam) and LAMBDA_RANGE[0] <= lam <= LAMBDA_RANGE[1]):
        raise ValueError(f"scale factor {lam!r} outside [{LAMBDA_RANGE[0]:g}, {LAMBDA_RANGE[1]:g}]")
    g = u.grid
    return Field(make_grid(g.L / lam, g.nx, g.ny), lam * u.values)


@dataclass(frozen=True)
class ScaledState:
    source: Field
    tau: float
    s: float
    lam: float
    field: Field

    @property
    def target_scale(self) -> float:
        return self.field.grid.L


def rescale_solution(u: Field, s: float, tau: float = 0.0) -> ScaledState:
    """Choose λ = ‖u‖_{H^s}^{−1/s} so the rescaled field has homogeneous H^s seminorm at most 1."""
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    c = _forward(u.grid, u.values)
    norm = math.sqrt(float(np.sum(hs_weight(u.grid, s) * np.abs(c) ** 2)))
    if norm == 0:
        raise ValueError("cannot rescale the zero field")
    lam = norm ** (-1.0 / s)
    return ScaledState(u, float(tau), float(s), lam, rescale_field(u, lam))
