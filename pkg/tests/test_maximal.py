import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brlab.errors import DomainError, InputError, ParameterError
from brlab.field import Field, GridSpec, PHYSICAL, annulus, lp_norm, random_bandlimited
from brlab.maximal import (DirectionSet, RectFamily, box_average_fourier, direction_maxima,
                           directional_box_average, dyadic_halfwidths, hl_maximal, kakeya_maximal,
                           kakeya_norm_sweep, powered_maximal, strip_projection_sum, strip_projections,
                           random_weight, strong_maximal, tiling_strips, weighted_lp_check,
                           weighted_strip_sweep)

G16 = GridSpec(2.0, 16)


def _brute_box(a, w1, w2):
    n = a.shape[0]
    out = np.zeros_like(a)
    for i in range(n):
        for j in range(n):
            # a box at least as wide as the torus averages the whole axis
            rows = range(n) if 2 * w1 + 1 >= n else [(i + d) % n for d in range(-w1, w1 + 1)]
            cols = range(n) if 2 * w2 + 1 >= n else [(j + d) % n for d in range(-w2, w2 + 1)]
            out[i, j] = a[np.ix_(rows, cols)].mean()
    return out


def _random_abs(seed, n=16):
    return np.random.default_rng(seed).random((n, n))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hl_matches_brute_force(seed):
    a = _random_abs(seed)
    ref = a.copy()
    for w in dyadic_halfwidths(16):
        ref = np.maximum(ref, _brute_box(a, w, w))
    got = hl_maximal(Field(G16, a, PHYSICAL)).values.real
    assert np.abs(got - ref).max() < 1e-13


def test_strong_matches_brute_force():
    a = _random_abs(5)
    ws = dyadic_halfwidths(16)
    ref = a.copy()
    for w1 in ws:
        for w2 in ws:
            ref = np.maximum(ref, _brute_box(a, w1, w2))
    got = strong_maximal(Field(G16, a, PHYSICAL)).values.real
    assert np.abs(got - ref).max() < 1e-13


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_maximal_ordering(seed):
    a = _random_abs(seed) - 0.5
    f = Field(G16, a, PHYSICAL)
    hl = hl_maximal(f).values.real
    sm = strong_maximal(f).values.real
    assert np.all(hl >= np.abs(a) - 1e-15)
    assert np.all(sm >= hl - 1e-15)
    assert np.all(powered_maximal(f, 2.0).values.real >= hl - 1e-12)


def test_powered_rejects_small_power():
    f = Field(G16, _random_abs(0), PHYSICAL)
    for s in (1.0, 0.5):
        with pytest.raises(ParameterError):
            powered_maximal(f, s)


def test_constant_is_fixed_point():
    f = Field(G16, np.full((16, 16), 3.0), PHYSICAL)
    for op in (hl_maximal, strong_maximal):
        assert np.allclose(op(f).values.real, 3.0, atol=1e-14)


@pytest.mark.parametrize("angle", [0.0, 0.3, 1.1])
def test_sample_and_fourier_box_averages_agree(angle):
    # midpoint sampling of a smooth field: error well under one percent
    g = GridSpec(8.0, 128)
    u = (np.cos(angle), np.sin(angle))
    err = []
    for top in (0.4, 0.2):
        f = random_bandlimited(g, 3, annulus(0.05, top))
        a = directional_box_average(f, u, (1.0, 0.5)).values
        b = box_average_fourier(f, u, (1.0, 0.5)).values
        err.append(np.abs(a - b).max() / np.abs(f.values).max())
    assert max(err) < 1e-2
    with pytest.raises(DomainError):
        directional_box_average(f, u, (1.0, 0.01))


def test_direction_set_identifies_opposites():
    d = DirectionSet(((1, 0), (-1, 0), (0, 2), (0, -1)))
    assert d.N == 2
    with pytest.raises(InputError):
        DirectionSet(((0, 0),))
    with pytest.raises(InputError):
        RectFamily(((1.0, 2.0),))


def test_kakeya_monotone_in_direction_set():
    g = GridSpec(4.0, 64)
    f = random_bandlimited(g, 0, annulus(0.2, 2.0))
    rects = RectFamily.dyadic(g)
    dm = direction_maxima(f, DirectionSet.uniform(8), rects)
    small = dm[::2].max(axis=0)
    big = kakeya_maximal(f, DirectionSet.uniform(8), rects).values.real
    assert np.all(big >= small)
    assert np.array_equal(small, kakeya_maximal(f, DirectionSet.uniform(4), rects).values.real)


def test_kakeya_sweep_small():
    g = GridSpec(4.0, 64)
    out = kakeya_norm_sweep(g, [4, 8, 16])
    assert out[4] <= out[8] <= out[16]
    assert out[16] / out[4] < 4
    with pytest.raises(InputError):
        kakeya_norm_sweep(g, [3, 8])


def test_strips_tile_and_sum_to_identity():
    g = GridSpec(4.0, 64)
    f = random_bandlimited(g, 1, annulus(0.5, 6.0))
    strips = tiling_strips(g, 0.75)
    parts = strip_projections(f, strips, 0)
    assert np.abs(sum(p.values for p in parts) - f.values).max() < 1e-12
    # orthogonality: squared norms add up
    tot = sum(lp_norm(p, 2) ** 2 for p in parts)
    assert tot == pytest.approx(lp_norm(f, 2) ** 2, rel=1e-12)
    assert lp_norm(strip_projection_sum(f, strips, 1), 2) == pytest.approx(lp_norm(f, 2), rel=1e-12)
    with pytest.raises(InputError):
        strip_projections(f, [(0, 1), (0.5, 1.5)])
    with pytest.raises(InputError):
        strip_projections(f, [(0, 1), (1, 3)])


def test_weighted_check_unit_weight():
    g = GridSpec(4.0, 64)
    f = random_bandlimited(g, 2, annulus(0.5, 6.0))
    w = Field(g, np.ones((64, 64)), PHYSICAL)
    lhs, rhs, ratio = weighted_lp_check(f, w, tiling_strips(g, 0.5), 2.0)
    assert ratio == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ParameterError):
        weighted_lp_check(f, w, tiling_strips(g, 0.5), 1.0)
    with pytest.raises(InputError):
        weighted_lp_check(f, Field(g, -np.ones((64, 64)), PHYSICAL), tiling_strips(g, 0.5), 2.0)


def test_box_average_frequency_oracle_resolved_band():
    # well-resolved configuration: band far below the sampling limit
    g = GridSpec(8.0, 128)
    f = random_bandlimited(g, 7, annulus(0.02, 0.1))
    u = (np.cos(0.7), np.sin(0.7))
    a = directional_box_average(f, u, (1.5, 0.75)).values
    b = box_average_fourier(f, u, (1.5, 0.75)).values
    assert np.abs(a - b).max() / np.abs(b).max() < 1e-3


def test_box_average_basic_properties():
    g = GridSpec(4.0, 64)
    c = Field(g, np.full((64, 64), 2.5), PHYSICAL)
    assert np.allclose(directional_box_average(c, (1, 2), (1.0, 0.3)).values, 2.5, atol=1e-13)
    f = Field(g, _random_abs(3, 64), PHYSICAL)
    one = directional_box_average(f, (1, 0), (g.h / 2, g.h / 2)).values
    assert np.abs(one - f.values).max() < 1e-12
    out = directional_box_average(f, (0.3, 0.8), (1.0, 0.5)).values
    assert np.abs(out).max() <= np.abs(f.values).max() + 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_maximal_sublinear(seed):
    a, b = _random_abs(seed) - 0.3, _random_abs(seed + 1) - 0.6
    fa, fb, fs = (Field(G16, x, PHYSICAL) for x in (a, b, a + b))
    for op in (hl_maximal, strong_maximal):
        assert np.all(op(fs).values.real <= op(fa).values.real + op(fb).values.real + 1e-12)
        assert np.all(op(fa).values.real >= 0)


def test_box_averages_commute_with_shifts():
    g = GridSpec(4.0, 64)
    a = _random_abs(4, 64)
    f, fs = Field(g, a, PHYSICAL), Field(g, np.roll(a, (5, -3), axis=(0, 1)), PHYSICAL)
    for op in (hl_maximal, strong_maximal):
        # prefix sums start at a different node, so only rounding differs
        assert np.abs(np.roll(op(f).values, (5, -3), axis=(0, 1)) - op(fs).values).max() < 1e-13
    u = (0.6, 0.8)
    x = directional_box_average(f, u, (1.0, 0.5)).values
    y = directional_box_average(fs, u, (1.0, 0.5)).values
    assert np.abs(np.roll(x, (5, -3), axis=(0, 1)) - y).max() < 1e-13


def test_kakeya_constant_and_eccentricity_monotone():
    g = GridSpec(4.0, 64)
    dirs = DirectionSet.uniform(4)
    one = Field(g, np.ones((64, 64)), PHYSICAL)
    assert np.allclose(kakeya_maximal(one, dirs, RectFamily.dyadic(g)).values, 1.0, atol=1e-13)
    f = random_bandlimited(g, 2, annulus(0.2, 2.0))
    full = RectFamily.dyadic(g)
    part = RectFamily(tuple(p for p in full.pairs if p[0] / p[1] <= 4))
    assert np.all(kakeya_maximal(f, dirs, full).values.real >= kakeya_maximal(f, dirs, part).values.real)
    with pytest.raises(DomainError):
        kakeya_maximal(f, dirs, RectFamily(((1.0, g.h / 4),)))


def test_strip_special_cases():
    g = GridSpec(4.0, 64)
    f = random_bandlimited(g, 1, annulus(0.5, 6.0))
    whole = [(g.xi[0] - g.dxi / 2, g.xi[-1] + g.dxi / 2)]
    assert np.abs(strip_projection_sum(f, whole).values - np.abs(f.values)).max() < 1e-12
    narrow = random_bandlimited(g, 2, lambda a, b: (a > 1.0) & (a < 1.4) & (np.abs(b) < 2))
    strips = tiling_strips(g, 0.5)
    assert np.abs(strip_projection_sum(narrow, strips).values - np.abs(narrow.values)).max() < 1e-12
    zero = Field(g, np.zeros((64, 64)), PHYSICAL)
    assert weighted_lp_check(f, zero, strips, 2.0)[:2] == (0.0, 0.0)


def test_weighted_sweep_stable_in_width():
    g = GridSpec(4.0, 64)
    r = weighted_strip_sweep(g, (2.0 ** -2, 2.0 ** -3), n_pairs=5, band=(0.1, 2.0))
    a, b = max(r[0.25]), max(r[0.125])
    assert 0 < a < np.inf and abs(b / a - 1) <= 0.5
    w = random_weight(g, np.random.default_rng(0)).values.real
    assert w.min() >= 0 and w[0, :].max() == 0 and w[:, 0].max() == 0
