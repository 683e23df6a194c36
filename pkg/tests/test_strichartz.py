import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dstorus.spectral import EmptyBoxWarning, FreqBox, Spectrum, box_mask, hs_norm, hs_weight, make_grid
from dstorus.strichartz import (
    ModBand,
    SpaceTimeSpectrum,
    bilinear_norm,
    bilinear_ratio,
    delta_QR,
    free_evolution,
    l4_band_bound,
    linf_band_bound,
    modulation_bands,
    random_space_time,
    required_nt,
    semiclassical_l4,
    space_time_transform,
    taper_hb_norm,
    trilinear_adversarial,
    trilinear_ensemble,
    trilinear_probe,
    xsb_norm,
)


def random_spectrum(g, rng, box=None):
    c = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    if box is not None:
        c = np.where(box_mask(g, box), c, 0)
    return Spectrum(g, c)


def small_st(seed=0, L=1.0, nx=12, nt=24):
    g = make_grid(L, nx, nx)
    rng = np.random.default_rng(seed)
    return random_space_time(g, np.ones(g.shape, bool), nt, rng, max_modulation=12.0)


def inner(a, b):
    return a.dtau * np.vdot(a.coeffs, b.coeffs)


# --- transform ------------------------------------------------------------------


def test_plancherel_in_time():
    g = make_grid(1.0, 8, 8)
    rng = np.random.default_rng(0)
    traj = rng.standard_normal((16, 8, 8)) + 1j * rng.standard_normal((16, 8, 8))
    for taper in ("hann", "none"):
        spec = space_time_transform(g, traj, T_w=3.0, taper=taper)
        psi = np.sin(np.pi * np.arange(16) / 16) ** 2 if taper == "hann" else np.ones(16)
        direct = math.sqrt((3.0 / 16) * np.sum(np.abs(traj * psi[:, None, None]) ** 2))
        assert spec.l2() == pytest.approx(direct, rel=1e-12)
        np.testing.assert_allclose(spec.trajectory(), traj * psi[:, None, None], atol=1e-12)


def test_transform_rejects_odd_nt():
    g = make_grid(1.0, 4, 4)
    with pytest.raises(ValueError):
        space_time_transform(g, np.zeros((5, 4, 4)))
    with pytest.raises(ValueError):
        space_time_transform(g, np.zeros((4, 4, 4)), taper="gauss")


def test_free_data_stay_in_first_band():
    g = make_grid(1.0, 16, 16)
    box = FreqBox.cube(4)
    u0 = random_spectrum(g, np.random.default_rng(1), box)
    nt = required_nt(g, box_mask(g, box), 4.0)
    spec = free_evolution(u0, nt)
    first = delta_QR(spec, None, ModBand(1)).l2() ** 2
    assert 1 - first / spec.l2() ** 2 < 1e-3


def test_bands_partition_box_projection():
    spec = small_st(2)
    box = FreqBox.annulus(2)
    whole = delta_QR(spec, box, None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyBoxWarning)
        total = sum(delta_QR(spec, box, b).coeffs for b in modulation_bands(spec))
    np.testing.assert_allclose(total, whole.coeffs, atol=1e-10)


def test_band_rejects_non_dyadic():
    for R in (0.5, 3, 0):
        with pytest.raises(ValueError):
            ModBand(R)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4]), st.sampled_from([1, 2]), st.booleans())
def test_projections_are_orthogonal(seed, R, N, use_box):
    u, v = small_st(seed), small_st(seed + 1)
    box = FreqBox.annulus(N) if use_box else None
    P = lambda w: delta_QR(w, box, ModBand(R))
    Pu = P(u)
    np.testing.assert_allclose(P(Pu).coeffs, Pu.coeffs, atol=1e-12)
    assert abs(inner(Pu, v) - inner(u, P(v))) <= 1e-10 * u.l2() * v.l2()
    assert Pu.l2() <= u.l2() * (1 + 1e-12)


def test_disjoint_box_gives_flagged_zero():
    spec = small_st(3)
    far = FreqBox(100, 100, 0, 1, "cube")
    with pytest.warns(EmptyBoxWarning):
        out = delta_QR(spec, far, ModBand(1))
    assert out.flags == ("empty",)
    assert not out.coeffs.any()
    with pytest.raises(ZeroDivisionError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyBoxWarning)
            linf_band_bound(spec, far, ModBand(1))


# --- proven bounds -----------------------------------------------------------------


def atom(g, T_w, nt, m, n, k, c=1.0 + 0.5j):
    coeffs = np.zeros((nt,) + g.shape, complex)
    coeffs[k % nt, m % g.nx, n % g.ny] = c
    return SpaceTimeSpectrum(g, T_w, coeffs)


def test_single_atom_bounds_closed_form():
    g = make_grid(1.0, 8, 8)
    T_w, nt = 2 * math.pi, 16
    c = 1.0 + 0.5j
    spec = atom(g, T_w, nt, 1, 0, 1, c)  # τ = p = 1, so the bracket is 1
    box = FreqBox(1, 0, 0, 0, "cube")
    assert int(box_mask(g, box).sum()) == 1
    amp = abs(c) * math.sqrt(2 * math.pi) / T_w / (2 * math.pi)
    l2 = math.sqrt(2 * math.pi / T_w) * abs(c)
    linf = linf_band_bound(spec, box, ModBand(1))
    assert linf == pytest.approx(amp / l2, rel=1e-12)
    l4 = (T_w * (2 * math.pi) ** 2) ** 0.25 * amp
    assert l4_band_bound(spec, box, ModBand(1)) == pytest.approx(l4 / l2, rel=1e-12)
    assert linf <= 1 and l4 / l2 <= 1


@pytest.mark.parametrize("N,R,L", [(1, 1, 1.0), (2, 2, 1.0), (1, 4, 2.0), (4, 1, 0.5)])
def test_random_band_bounds_hold(N, R, L):
    g = make_grid(L, 32, 32)
    box = FreqBox.annulus(N)
    mask = box_mask(g, box)
    nt = required_nt(g, mask, 4.0 * R)
    rng = np.random.default_rng(10 * N + R)
    worst = 0.0
    for _ in range(8):
        spec = random_space_time(g, mask, nt, rng, max_modulation=4.0 * R)
        band = ModBand(R)
        worst = max(worst, linf_band_bound(spec, box, band), l4_band_bound(spec, box, band))
    assert worst <= 1 + 1e-6


@pytest.mark.xfail(strict=True, reason="Gaussian data spread over the whole torus: ratio decays like 1/L")
def test_l4_band_ratio_flat_in_L():
    maxima = []
    for L in (1, 2, 4, 8):
        nx = 4 * L + 4
        g = make_grid(float(L), nx, nx)
        box = FreqBox.annulus(1)
        mask = box_mask(g, box)
        nt = required_nt(g, mask, 4.0)
        rng = np.random.default_rng(L)
        maxima.append(max(l4_band_bound(random_space_time(g, mask, nt, rng, 2.0), box, ModBand(1))
                          for _ in range(3)))
    assert max(maxima) / min(maxima) <= 2


# --- Bourgain norms ---------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1.0, 2.0))
def test_xsb_with_b_zero_is_l2_hs(seed, s):
    spec = small_st(seed, L=1.5)
    traj = spec.trajectory()
    direct = math.sqrt(spec.dt * np.sum(hs_weight(spec.grid, s)[None] * np.abs(traj) ** 2))
    assert xsb_norm(spec, s, 0.0) == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("b,s,L", [(0.55, 0.75, 1.0), (0.45, 0.3, 2.0), (0.0, 1.0, 1.0)])
def test_xsb_of_free_solution_separates(b, s, L):
    g = make_grid(L, 16, 16)
    box = FreqBox.cube(3)
    u0 = random_spectrum(g, np.random.default_rng(4), box)
    nt = required_nt(g, box_mask(g, box), 4.0)
    spec = free_evolution(u0, nt)
    assert xsb_norm(spec, s, b) == pytest.approx(taper_hb_norm(spec.T_w, nt, b) * hs_norm(u0, s), rel=1e-6)


def test_xsb_single_atom():
    g = make_grid(2.0, 8, 8)
    spec = atom(g, 5.0, 12, 3, -1, 2, 2.0)
    s, b = 0.7, 0.55
    tau = 2 * math.pi * 2 / 5.0
    p = (9 - 1) / 4.0
    expected = math.sqrt(2 * math.pi / 5.0) * 2.0 * (1 + 10 / 4.0) ** (s / 2) * (1 + (tau - p) ** 2) ** (b / 2)
    assert xsb_norm(spec, s, b) == pytest.approx(expected, rel=1e-12)


# --- bilinear and semiclassical probes ------------------------------------------------


def test_two_mode_bilinear_closed_form():
    # |e_{1,0} e_{0,1}| = 1/(2π)² everywhere, over a region of measure (2π)².
    val, _, change = bilinear_norm(1.0, [[1, 0]], [1.0], [[0, 1]], [1.0])
    assert val == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    assert change < 1e-6


def test_bilinear_ratio_statistics():
    stats = bilinear_ratio(1, 2, L=1.0, trials=6, seed=5)
    assert len(stats.ratios) == 6 and np.all(np.isfinite(stats.ratios))
    assert stats.std <= stats.max and stats.mean <= stats.max
    again = bilinear_ratio(1, 2, L=1.0, trials=6, seed=5)
    np.testing.assert_array_equal(stats.ratios, again.ratios)


def test_bilinear_ratio_rejects_bad_sizes():
    with pytest.raises(ValueError):
        bilinear_ratio(3, 4)
    with pytest.raises(ValueError, match="no lattice point"):
        bilinear_ratio(1, 1, L=0.1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000), st.integers(-4, 4), st.integers(-4, 4), st.sampled_from([1.0, 2.0]))
def test_common_translation_preserves_bilinear_norm(seed, a, b, L):
    # A common shift of both spectra is a Galilean boost; the product norm is unchanged.
    rng = np.random.default_rng(seed)
    m1 = rng.integers(-3, 4, size=(5, 2))
    m2 = rng.integers(-3, 4, size=(4, 2))
    m1 = np.unique(m1, axis=0)
    m2 = np.unique(m2, axis=0)
    c1 = rng.standard_normal(len(m1)) + 1j * rng.standard_normal(len(m1))
    c2 = rng.standard_normal(len(m2)) + 1j * rng.standard_normal(len(m2))
    shift = np.array([a, b]) * int(L)
    base, nodes, _ = bilinear_norm(L, m1, c1, m2, c2)
    moved = bilinear_norm(L, m1 + shift, c1, m2 + shift, c2)[0]
    assert moved == pytest.approx(base, rel=1e-6)


def test_semiclassical_single_mode():
    h = 0.5
    r = semiclassical_l4(h, modes=[[2, 0]], coeffs=[1.0])
    assert r.max == pytest.approx(h**0.25 / math.sqrt(2 * math.pi), rel=1e-10)


def test_semiclassical_bounded_in_h():
    maxima = [semiclassical_l4(h, trials=50, seed=0).max for h in (1 / 2, 1 / 4, 1 / 8, 1 / 16)]
    assert max(maxima) / min(maxima) <= 2


def test_semiclassical_cube_variant_bounded():
    maxima = [semiclassical_l4(h, trials=10, seed=1, shape="cube").max for h in (1 / 2, 1 / 4, 1 / 8)]
    assert max(maxima) / min(maxima) <= 2


def test_semiclassical_rejects_bad_h():
    with pytest.raises(ValueError):
        semiclassical_l4(1 / 3)
    with pytest.raises(ValueError):
        semiclassical_l4(-1.0)


# --- trilinear probe -----------------------------------------------------------------


def test_trilinear_identical_atoms():
    L, nx, nt, T_w = 1.0, 12, 24, 2 * math.pi
    g = make_grid(L, nx, nx)
    m, n, k, c = 1, 2, 2, 0.8 - 0.3j
    u = atom(g, T_w, nt, m, n, k, c)
    s, b, bp = 0.75, 0.55, 0.45
    res = trilinear_probe(u, u, u, s=s, b=b, b_prime=bp)

    dtau = 2 * math.pi / T_w
    tau = k * dtau
    weight = lambda mm, nn: (1 + (mm * mm + nn * nn) / L**2) ** (s / 2)
    bracket = lambda t, mm, nn: math.sqrt(1 + (t - (mm * mm - nn * nn) / L**2) ** 2)
    den = (math.sqrt(dtau) * abs(c) * weight(m, n) * bracket(tau, m, n) ** b) ** 3
    # The cube of an atom is an atom with coefficient c³ scaled by the value/coefficient factor squared.
    factor = math.sqrt(2 * math.pi) / T_w / (2 * math.pi * L)
    c3 = abs(c) ** 3 * factor**2
    cubic = math.sqrt(dtau) * c3 * weight(3 * m, 3 * n) * bracket(3 * tau, 3 * m, 3 * n) ** (-bp)
    e = 2 * m * m / (m * m + n * n)
    assert res.cubic_ratio == pytest.approx(cubic / den, rel=1e-10)
    assert res.ratio == pytest.approx(e * cubic / den, rel=1e-10)


def test_trilinear_rejects_mismatch():
    a = small_st(0)
    b = small_st(1, nt=26)
    with pytest.raises(ValueError):
        trilinear_probe(a, a, b)


def test_trilinear_ensemble_stable():
    # The first half of a seeded run is the run with half the trials.
    many = trilinear_ensemble(4, trials=200, seed=3)
    assert np.isfinite(many.ratios).all()
    few = many.ratios[:100].max()
    assert abs(many.max - few) / few < 0.1


def test_trilinear_adversarial_within_factor_of_random():
    random_max = max(trilinear_ensemble(e, trials=20, seed=0).max for e in (1, 2, 4))
    worst = max(trilinear_adversarial(e, trials=20, seed=0).max for e in (2, 4))
    assert worst <= 4 * random_max
