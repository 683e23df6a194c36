import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dstorus.evolution import (
    COMPLETED,
    NORM_THRESHOLD,
    RESOLUTION_LIMITED,
    FitError,
    SolverConfig,
    Trajectory,
    detect_blowup,
    fit_rate,
    nonlinear_substep,
    rescale_field,
    rescale_solution,
    run_simulation,
    strang_step,
    tail_fraction,
)
from dstorus.exact import DiagonalSolution, OzawaParams, ProfileSpec, ozawa_norms
from dstorus.spectral import (
    Field,
    _forward,
    _inverse,
    dealias_mask,
    hs_norm,
    make_grid,
    propagate_linear,
    transform,
)


def l2(grid, a):
    return math.sqrt(grid.weight * float(np.sum(np.abs(a) ** 2)))


def smooth_data(grid, amp=0.5):
    X, Y = grid.mesh
    return Field(grid, amp * np.exp(np.cos(X / grid.L)) * (1 + 0.3 * np.sin(Y / grid.L + 0.2))
                 + 0.2j * amp * np.cos(2 * X / grid.L - Y / grid.L))


def band_limited(grid, seed, kmax=4, amp=0.3):
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape, complex)
    for m in range(-kmax, kmax + 1):
        for n in range(-kmax, kmax + 1):
            c[grid.index(m, n)] = amp * (rng.normal() + 1j * rng.normal()) / (1 + m * m + n * n)
    return Field(grid, _inverse(grid, c))


# --- configuration ---------------------------------------------------------


def test_config_collects_all_problems():
    with pytest.raises(ValueError) as exc:
        SolverConfig(dt0=0, t_end=-1, tail_max=2, nx=7)
    msg = str(exc.value)
    for key in ("dt0", "t_end", "tail_max", "even"):
        assert key in msg


def test_config_theorem_range_labels():
    cfg = SolverConfig(s_list=(0.4, 0.75, 1.2))
    assert cfg.theorem_range == {0.4: False, 0.75: True, 1.2: False}


@pytest.mark.parametrize("t_end,dt,rows", [(1.0, 0.01, 101), (1.0, 0.3, 5), (0.05, 0.05, 2)])
def test_expected_rows(t_end, dt, rows):
    assert SolverConfig(t_end=t_end, sample_dt=dt).expected_rows() == rows


# --- substeps ---------------------------------------------------------------


def test_substep_on_constant():
    g = make_grid(1.0, 16, 16)
    c = 0.7 - 0.2j
    out = nonlinear_substep(Field(g, np.full(g.shape, c)), 0.3)
    np.testing.assert_allclose(out.values, c * np.exp(1j * 0.3 * abs(c) ** 2), atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1.0, 1.0), st.sampled_from([1, -1]))
def test_substep_preserves_modulus(seed, dt, sigma):
    g = make_grid(1.0, 16, 16)
    rng = np.random.default_rng(seed)
    u = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    out = nonlinear_substep(u, dt, sigma=sigma)
    np.testing.assert_allclose(np.abs(out.values), np.abs(u.values), rtol=1e-13, atol=1e-13)


def test_substep_first_order_expansion():
    g = make_grid(1.0, 32, 32)
    u = smooth_data(g)
    from dstorus.spectral import density_E

    V = np.abs(u.values) ** 2 + density_E(g, u.values)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        out = nonlinear_substep(u, dt)
        errs.append(np.abs(out.values - u.values - 1j * dt * V * u.values).max())
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_strang_reduces_to_linear_flow_without_amplitude():
    g = make_grid(1.0, 32, 32)
    u = band_limited(g, 0, amp=1e-200)
    out = strang_step(u, 0.37, SolverConfig(nx=32, ny=32))
    ref = propagate_linear(transform(u), 0.37)
    np.testing.assert_allclose(_forward(g, out.values), ref.coeffs, rtol=1e-12, atol=1e-214)


def test_strang_rejects_bad_dt():
    g = make_grid(1.0, 16, 16)
    with pytest.raises(ValueError):
        strang_step(band_limited(g, 0), 0.0, SolverConfig(nx=16, ny=16))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, -1]))
def test_strang_mass_and_reversibility(seed, sigma):
    # The cubic phase reaches |k| = 12 from kmax = 4; the 64 grid keeps that inside the 2/3 band.
    g = make_grid(1.0, 64, 64)
    cfg = SolverConfig(nx=64, ny=64, sigma=sigma)
    u = band_limited(g, seed)
    v = strang_step(u, 0.01, cfg)
    assert abs(l2(g, v.values) - l2(g, u.values)) < 1e-12
    back = strang_step(v, -0.01, cfg)
    assert np.abs(back.values - u.values).max() < 1e-10


def test_strang_second_order():
    g = make_grid(1.0, 64, 64)
    u = smooth_data(g)

    def run(dt, T=0.4):
        cfg = SolverConfig(nx=64, ny=64, dt0=dt, t_end=T, adaptive=False, sample_dt=T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tr, _ = run_simulation(u, cfg)
        return tr.final.values

    ref = run(2.5e-4)
    errs = [l2(g, run(dt) - ref) for dt in (0.02, 0.01, 0.005)]
    slope = np.polyfit(np.log([0.02, 0.01, 0.005]), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


# --- runs -------------------------------------------------------------------


def test_small_data_completes_with_conserved_mass():
    g = make_grid(1.0, 64, 64)
    cfg = SolverConfig(nx=64, ny=64, dt0=2e-3, t_end=1.0, sample_dt=0.05)
    tr, rep = run_simulation(band_limited(g, 1, amp=0.2), cfg)
    assert rep.status == COMPLETED
    assert not rep.fits
    assert len(tr) == cfg.expected_rows()
    assert tr.times[-1] == 1.0
    assert tr.mass_drift < 1e-8
    assert all(b > a for a, b in zip(tr.times, tr.times[1:]))
    assert all(0 <= x <= 1 for x in tr.tail)
    assert all(b >= a for a, b in zip(tr.l4acc, tr.l4acc[1:]))


def test_diagonal_solution_reproduced():
    g = make_grid(1.0, 128, 128)
    sol = DiagonalSolution(ProfileSpec())
    X, Y = g.mesh
    cfg = SolverConfig(nx=128, ny=128, dt0=1e-3, t_end=1.0, e_enabled=False, adaptive=False, sample_dt=0.1)
    tr, rep = run_simulation(Field(g, sol.value(0.0, X, Y)), cfg)
    exact = sol.value(1.0, X, Y)
    assert rep.status == COMPLETED
    assert l2(g, tr.final.values - exact) / l2(g, exact) < 1e-6


def test_restart_from_sample_is_bitwise():
    g = make_grid(1.0, 32, 32)
    cfg = SolverConfig(nx=32, ny=32, dt0=5e-3, t_end=0.3, sample_dt=0.05)
    u0 = band_limited(g, 2, amp=1.0)
    saved = {}
    full, _ = run_simulation(u0, cfg, on_sample=lambda k, t, u: saved.setdefault(k, (t, u.values.copy())))
    t_mid, v_mid = saved[3]
    rest, _ = run_simulation(Field(g, v_mid), cfg, t0=t_mid, l4acc0=full.l4acc[3])
    assert rest.times == full.times[3:]
    assert np.array_equal(rest.final.values, full.final.values)
    assert rest.l4acc == full.l4acc[3:]


def test_nonfinite_state_is_reported(monkeypatch):
    from dstorus import evolution

    real_step = evolution._Stepper.step
    calls = {"n": 0}

    def poisoned(self, coeffs, dt):
        calls["n"] += 1
        out = real_step(self, coeffs, dt)
        if calls["n"] == 7:
            out[0, 0] = np.nan
        return out

    monkeypatch.setattr(evolution._Stepper, "step", poisoned)
    g = make_grid(1.0, 16, 16)
    cfg = SolverConfig(nx=16, ny=16, dt0=1e-2, t_end=0.2, sample_dt=0.02, adaptive=False)
    tr, rep = run_simulation(band_limited(g, 0, kmax=2), cfg)
    assert rep.status == RESOLUTION_LIMITED
    assert any("non-finite" in n for n in rep.notes)
    assert tr.times[-1] == pytest.approx(0.06)
    assert np.all(np.isfinite(tr.table()))
    assert np.all(np.isfinite(tr.final.values))


def test_focusing_run_stops_with_consistent_fits():
    g = make_grid(1.0, 64, 64)
    X, Y = g.mesh
    u = Field(g, np.exp(np.cos(X) + 0.5 * np.sin(Y)))
    cfg = SolverConfig(nx=64, ny=64, dt0=1e-3, t_end=5.0, s_list=(0.6, 0.9), sample_dt=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr, rep = run_simulation(u, cfg)
    assert rep.status == RESOLUTION_LIMITED
    assert rep.stop_time == tr.times[-1] < 5.0
    for s in cfg.s_list:
        assert s in rep.fits or "fit omitted" in rep.fit_notes[s]
        if s in rep.fits:
            assert rep.fits[s].p_est >= s / 2 - 0.1
            assert rep.fits[s].window[1] <= rep.stop_time
    assert len(rep.concentration) == len(tr)
    assert rep.concentration_radii == (0.5, 0.25, 0.125, 0.0625)


def test_underresolved_start_warns():
    g = make_grid(1.0, 16, 16)
    rng = np.random.default_rng(0)
    u = Field(g, 1e-3 * (rng.normal(size=g.shape) + 0j))
    with pytest.warns(RuntimeWarning, match="tail"):
        run_simulation(u, SolverConfig(nx=16, ny=16, t_end=0.01, tail_max=0.5))


# --- blow-up detection ------------------------------------------------------------


def make_traj(linf, tail):
    tr = Trajectory((0.75,))
    for k, (a, b) in enumerate(zip(linf, tail)):
        tr.append(0.1 * k, 1.0, [1.0], a, 0.0, b, 0.01)
    return tr


def test_detect_blowup_cases():
    cfg = SolverConfig(linf_max=10.0, tail_max=1e-4)
    assert detect_blowup(make_traj([1, 1, 1], [0, 0, 0]), cfg) == COMPLETED
    assert detect_blowup(make_traj([1, 1, 1], [0, 0, 0.1]), cfg) == RESOLUTION_LIMITED
    tr = make_traj([1, 5, 11, 20], [0, 0, 0, 0])
    assert detect_blowup(tr, cfg) == NORM_THRESHOLD
    from dstorus.evolution import stop_index

    assert tr.times[stop_index(tr, cfg)] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        detect_blowup(Trajectory((0.75,)), cfg)


def test_tail_fraction_bounds():
    g = make_grid(1.0, 32, 32)
    c = np.zeros(g.shape, complex)
    c[g.index(1, 0)] = 1
    assert tail_fraction(g, c) == 0.0
    c[g.index(8, 0)] = 1
    assert tail_fraction(g, c) == pytest.approx(0.5)


# --- rate fits ----------------------------------------------------------------


def test_fit_recovers_synthetic_rate():
    t = np.linspace(0.5, 0.99, 50)
    fit = fit_rate(t, 2 * (1 - t) ** -0.5, s=0.75)
    assert fit.T_est == pytest.approx(1.0, abs=1e-6)
    assert fit.p_est == pytest.approx(0.5, abs=1e-6)
    assert fit.C_est == pytest.approx(2.0, rel=1e-5)
    assert fit.T_est > t[-1]
    assert fit.meets_lower_bound
    assert fit.window == (0.5, 0.99)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 1.5), st.floats(0.5, 3.0), st.floats(0.01, 0.3))
def test_fit_exact_on_model_class(p, C, gap):
    T = 1.0
    t = np.linspace(0.0, T - gap, 30)
    fit = fit_rate(t, C * (T - t) ** -p)
    assert fit.p_est == pytest.approx(p, abs=1e-5)
    assert fit.T_est == pytest.approx(T, abs=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 1.2))
def test_subwindow_refit_within_uncertainty(seed, p):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.3, 0.95, 40)
    v = (1 - t) ** -p * np.exp(1e-3 * rng.normal(size=t.size))
    v = np.maximum.accumulate(v) * (1 + 1e-9 * np.arange(t.size))
    fit = fit_rate(t, v)
    sub = fit_rate(t[-30:], v[-30:])
    assert abs(sub.p_est - fit.p_est) <= fit.p_uncertainty + 1e-12


def test_fit_rejects_bad_series():
    t = np.linspace(0, 1, 10)
    with pytest.raises(FitError, match="increase"):
        fit_rate(t, np.ones(10))
    with pytest.raises(FitError, match="positive"):
        fit_rate(t, np.linspace(-1, 1, 10))
    with pytest.raises(FitError, match="at least"):
        fit_rate(t[:5], np.arange(1, 6))


def test_fit_on_exact_conformal_family():
    p = OzawaParams()
    t = np.linspace(0.5, 0.99, 25) * p.T
    vals = [ozawa_norms(x, 0.8, p).hs for x in t]
    fit = fit_rate(t, vals, s=0.8)
    assert fit.p_est == pytest.approx(0.8, abs=0.02)
    assert fit.classification == "pseudo-conformal rate"


# --- scaling ------------------------------------------------------------------


def test_rescale_bounds():
    g = make_grid(1.0, 16, 16)
    with pytest.raises(ValueError):
        rescale_field(Field(g, np.ones(g.shape, complex)), 1e7)
    with pytest.raises(ValueError):
        rescale_solution(Field(g, np.zeros(g.shape, complex)), 0.75)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.55, 0.95), st.floats(0.1, 20.0))
def test_rescaled_state_properties(seed, s, amp):
    g = make_grid(1.0, 32, 32)
    u = band_limited(g, seed, amp=amp)
    st_ = rescale_solution(u, s, tau=0.3)
    v = st_.field
    assert v.grid.L == pytest.approx(1.0 / st_.lam)
    assert abs(l2(v.grid, v.values) - l2(g, u.values)) <= 1e-10 * l2(g, u.values)
    assert hs_norm(transform(v), s, homogeneous=True) <= 1 + 1e-8
    assert hs_norm(transform(v), s, homogeneous=True) == pytest.approx(
        st_.lam**s * hs_norm(transform(u), s, homogeneous=True), rel=1e-10)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_scaling_covariance(lam):
    g = make_grid(1.0, 32, 32)
    u = band_limited(g, 5, amp=1.0)
    t_v, dt_v = 0.01, 1e-3

    cfg_u = SolverConfig(L=1.0, nx=32, ny=32, dt0=lam**2 * dt_v, t_end=lam**2 * t_v,
                         sample_dt=lam**2 * t_v, adaptive=False)
    tr_u, _ = run_simulation(u, cfg_u)
    path1 = rescale_field(tr_u.final, lam)

    v0 = rescale_field(u, lam)
    cfg_v = SolverConfig(L=v0.grid.L, nx=32, ny=32, dt0=dt_v, t_end=t_v, sample_dt=t_v, adaptive=False)
    tr_v, _ = run_simulation(v0, cfg_v)
    assert tr_u.steps == tr_v.steps
    assert l2(path1.grid, path1.values - tr_v.final.values) < 1e-8
