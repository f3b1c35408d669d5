import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brlab.errors import ContractError, DegenerateInputError, DomainError, InputError, SymbolEvaluationError
from brlab.field import (FREQUENCY, PHYSICAL, Field, GridSpec, annulus, apply_multiplier, cyclic_shift,
                         forward_transform, inverse_transform, load_field, lp_norm, lp_norm_freq, plane_wave,
                         random_bandlimited, reflect, save_field, single_node)

G = GridSpec(4.0, 64)


def test_grid_constants():
    g = GridSpec(16.0, 512)
    assert g.h * g.n == 2 * g.half_width
    assert g.dxi == 1 / 32
    assert g.xi_max == 8.0
    assert g.xi[0] == -8.0 and g.xi[-1] == 8.0 - g.dxi


@pytest.mark.parametrize("lam, n", [(1.0, 15), (1.0, 8), (-1.0, 64)])
def test_grid_rejects_bad_sizes(lam, n):
    with pytest.raises(Exception):
        GridSpec(lam, n)


def test_zero_transforms_to_zero():
    z = Field(G, np.zeros((64, 64)), PHYSICAL)
    assert np.all(forward_transform(z).values == 0)
    assert np.all(inverse_transform(forward_transform(z)).values == 0)


def test_plane_wave_is_one_hot():
    xi0 = (G.xi[40], G.xi[20])
    F = forward_transform(plane_wave(G, xi0)).values
    k = np.unravel_index(np.argmax(np.abs(F)), F.shape)
    assert k == (40, 20)
    assert F[k] == pytest.approx((2 * G.half_width) ** 2, rel=1e-12)
    F2 = F.copy()
    F2[k] = 0
    assert np.abs(F2).max() < 1e-10


def test_one_hot_synthesises_plane_wave():
    F = np.zeros((64, 64), complex)
    F[33, 30] = (2 * G.half_width) ** 2
    f = inverse_transform(Field(G, F, FREQUENCY))
    pw = plane_wave(G, (G.xi[33], G.xi[30]))
    assert np.abs(f.values - pw.values).max() < 1e-12


def test_gaussian_against_direct_quadrature():
    # continuous transform of exp(-pi a |x|^2) is a^-1 exp(-pi |xi|^2 / a)
    a = 2.0
    X1, X2 = G.x_mesh()
    f = Field(G, np.exp(-np.pi * a * (X1 ** 2 + X2 ** 2)), PHYSICAL)
    F = forward_transform(f).values
    for k1, k2 in [(32, 32), (33, 32), (35, 30), (40, 36), (28, 29)]:
        xi1, xi2 = G.xi[k1], G.xi[k2]
        exact = np.exp(-np.pi * (xi1 ** 2 + xi2 ** 2) / a) / a
        # independent route: direct Riemann sum of the defining integral
        direct = G.h ** 2 * np.sum(f.values * np.exp(-2j * np.pi * (xi1 * X1 + xi2 * X2)))
        assert abs(F[k1, k2] - direct) < 1e-8
        assert abs(F[k1, k2] - exact) < 1e-8
        assert abs(F[k1, k2].imag) < 1e-12 and F[k1, k2].real > 0


def test_wrong_space_raises():
    f = random_bandlimited(G, 0, annulus(0.5, 2))
    with pytest.raises(ContractError):
        inverse_transform(f)
    with pytest.raises(ContractError):
        forward_transform(forward_transform(f))
    with pytest.raises(ContractError):
        lp_norm(forward_transform(f), 2)


def test_norm_examples():
    g = GridSpec(0.5, 16)
    one = Field(g, np.ones((16, 16)), PHYSICAL)
    for p in (1, 2, 3.5, np.inf):
        assert lp_norm(one, p) == pytest.approx(1.0, rel=1e-14)
    half = np.zeros((16, 16))
    half[:8] = 1
    assert lp_norm(Field(g, half, PHYSICAL), 2) == pytest.approx(np.sqrt(0.5), rel=1e-14)
    assert lp_norm(Field(g, np.zeros((16, 16)), PHYSICAL), 3) == 0
    with pytest.raises(DomainError):
        lp_norm(one, 0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), c=st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       p=st.sampled_from([1.0, 2.0, 4.0, np.inf]))
def test_norm_homogeneous(seed, c, p):
    f = random_bandlimited(G, seed, annulus(0.5, 3))
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12, abs=1e-300)


def test_plancherel_100_fields():
    for s in range(100):
        f = random_bandlimited(G, s, annulus(0.2, 6))
        a, b = lp_norm(f, 2), lp_norm_freq(forward_transform(f), 2)
        assert abs(a - b) / a < 1e-10
        back = inverse_transform(forward_transform(f))
        assert np.abs(back.values - f.values).max() <= 1e-12 * np.abs(f.values).max()


def test_multiplier_examples():
    f = random_bandlimited(G, 3, annulus(0.5, 3))
    assert np.abs(apply_multiplier(f, 1.0).values - f.values).max() < 1e-13

    def upper(x1, x2):
        return (x2 > 0).astype(float)
    once = apply_multiplier(f, upper)
    twice = apply_multiplier(once, upper)
    assert np.abs(once.values - twice.values).max() < 1e-13
    xi0 = (G.xi[36], G.xi[40])
    pw = plane_wave(G, xi0)
    m = lambda x1, x2: np.cos(x1) + x2 ** 2
    out = apply_multiplier(pw, m)
    assert np.abs(out.values - m(*xi0) * pw.values).max() < 1e-12


def test_multiplier_nonfinite_names_node():
    f = random_bandlimited(G, 3, annulus(0.5, 3))
    with pytest.raises(SymbolEvaluationError, match="xi="), np.errstate(divide="ignore"):
        apply_multiplier(f, lambda x1, x2: 1.0 / (x1 ** 2 + x2 ** 2))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), s1=st.integers(-64, 64), s2=st.integers(-64, 64))
def test_composition_and_translation(seed, s1, s2):
    f = random_bandlimited(G, seed, annulus(0.3, 5))
    m1 = lambda x1, x2: np.exp(-x1 ** 2) * (1 + 0.5j * x2)
    m2 = lambda x1, x2: np.sin(x1 + 2 * x2)
    a = apply_multiplier(apply_multiplier(f, m1), m2).values
    b = apply_multiplier(f, lambda x1, x2: m1(x1, x2) * m2(x1, x2)).values
    assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()
    left = apply_multiplier(cyclic_shift(f, s1, s2), m1).values
    right = cyclic_shift(apply_multiplier(f, m1), s1, s2).values
    assert np.abs(left - right).max() <= 1e-10 * np.abs(right).max()


def test_random_bandlimited_contract():
    a = random_bandlimited(G, 7, annulus(1, 2))
    b = random_bandlimited(G, 7, annulus(1, 2))
    assert np.array_equal(a.values, b.values)
    assert lp_norm(a, 2) == pytest.approx(1.0, rel=1e-12)
    F = forward_transform(a).values
    X1, X2 = G.xi_mesh()
    r = np.hypot(X1, X2)
    assert np.abs(F[(r <= 1) | (r >= 2)]).max() < 1e-12
    xi0 = (G.xi[37], G.xi[29])
    one = random_bandlimited(G, 1, single_node(xi0))
    pw = plane_wave(G, xi0)
    phase = one.values[0, 0] / pw.values[0, 0]
    assert abs(abs(phase) - 1 / (2 * G.half_width)) < 1e-12
    assert np.abs(one.values - phase * pw.values).max() < 1e-12
    with pytest.raises(DegenerateInputError):
        random_bandlimited(G, 0, annulus(100, 101))


def test_reflect_is_involution_and_flips_spectrum():
    f = random_bandlimited(G, 2, annulus(0.5, 3))
    assert np.array_equal(reflect(reflect(f, 0), 0).values, f.values)
    X1, X2 = G.x_mesh()
    g = reflect(f, 1)
    # value at (x1, -x2): index n -> N - n
    assert g.values[5, 9] == f.values[5, 64 - 9]
    assert np.all(np.isfinite(g.values))


def test_field_is_immutable():
    f = random_bandlimited(G, 2, annulus(0.5, 3))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1


def test_binary_round_trip(tmp_path):
    f = random_bandlimited(G, 4, annulus(0.5, 3))
    p = tmp_path / "f.brf"
    save_field(f, p)
    raw = p.read_bytes()
    assert raw[:4] == b"BRF1"
    assert int.from_bytes(raw[4:8], "little") == 64
    assert np.frombuffer(raw[8:16], "<f8")[0] == 4.0
    assert len(raw) == 16 + 64 * 64 * 16
    g = load_field(p)
    assert g.grid == f.grid and np.array_equal(g.values, f.values)
    p.write_bytes(raw[:-16])
    with pytest.raises(InputError):
        load_field(p)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(InputError):
        load_field(p)
