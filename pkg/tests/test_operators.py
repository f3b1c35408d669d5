import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from brlab.curve import preset
from brlab.errors import DomainError, InputError, ParameterError
from brlab.field import GridSpec, Field, PHYSICAL, annulus, forward_transform, lp_norm, plane_wave, random_bandlimited
from brlab.geometry import build_decomposition
from brlab.operators import (RGrid, RGridList, SquarePlan, TimeQuadrature, active_mask, box_average_domination,
                             br_maximal, br_partial, collar_ppo, cone_partial_inside, cone_partial_outside,
                             kernel_decay_check, maximal_domination_check, outer_dilation, piece_support_field, ray_integral,
                             square_function, square_squared, subordination_check, subordination_constant,
                             subordination_windows, symbol_radii, v_function, vector_valued_norms)
from brlab.symbols import (BumpProfile, ConeWindow, Symbol, collar_symbol, collar_window, distance_power_symbol,
                           partition_pieces, smooth_bump)

PAR = preset("parabola-b1")
G = GridSpec(8.0, 128)


def radial_bump(r0=1.5, w=0.5):
    b = smooth_bump(r0, w)

    def func(a, c):
        return b(np.hypot(a, c))
    return Symbol(func, "radial", {"radii": (r0 - w, r0 + w)},
                  lambda a, c: np.abs(np.hypot(a, c) - r0) < w)


# -- time quadrature ------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.01, 10.0), r=st.floats(1.1, 100.0), ppo=st.integers(1, 64))
def test_quadrature_integrates_dt_over_t(a, r, ppo):
    q = TimeQuadrature(a, a * r, ppo)
    lo, hi = q.span
    assert lo <= a * (1 + 1e-12) and hi >= a * r * (1 - 1e-12)
    assert q.weights.sum() == pytest.approx(math.log(hi / lo), abs=1e-12)


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_residue_filters_partition_weights(L):
    q = TimeQuadrature(0.07, 13.0, 16)
    tot = sum(q.restricted(L, k).weights for k in range(L))
    assert np.array_equal(tot, q.weights)
    t, n = q.nodes, q.octave
    assert np.all((t > 2.0 ** n * (1 - 1e-12)) & (t <= 2.0 ** (n + 1) * (1 + 1e-12)))


def test_quadrature_rejects_bad_input():
    for args in ((0, 1), (2, 1), (1, 2, 0), (1, 2, 1.5)):
        with pytest.raises(ParameterError):
            TimeQuadrature(*args)
    with pytest.raises(ParameterError):
        TimeQuadrature(1, 2, 4, (3, 3))


def test_collar_ppo_grows_with_thinness():
    col = collar_symbol(PAR, BumpProfile(), 2.0 ** -6)
    assert collar_ppo(col) == 32 * 64
    assert collar_ppo(radial_bump()) == 32


# -- square functions -------------------------------------------------------------

def test_square_function_vanishes_on_disjoint_spectrum():
    f = random_bandlimited(G, 0, annulus(3.0, 3.5))
    sym = radial_bump()
    q = TimeQuadrature(0.9, 1.1, 16)
    assert np.all(square_function(f, sym, q).values == 0)


def test_plane_wave_square_function_matches_ray_integral():
    xi0 = (G.xi[64 + 20], G.xi[64 + 12])
    f = plane_wave(G, xi0)
    sym = radial_bump()
    q = TimeQuadrature(0.25, 4.0, 256)
    g = square_function(f, sym, q).values
    # |f| = 1, so g^2 is the constant int |sym(t xi0)|^2 dt/t
    r0 = np.hypot(*xi0)
    ref, _ = integrate.quad(lambda t: float(sym(t * xi0[0], t * xi0[1])) ** 2 / t, 1.0 / r0, 2.0 / r0,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    assert np.abs(g ** 2 - ref).max() < 1e-6 * ref
    assert ray_integral(sym, xi0, 1.0 / r0, 2.0 / r0) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("seed", [0, 1])
def test_dense_and_sparse_routes_agree(seed):
    sym = collar_symbol(PAR, BumpProfile(), 2.0 ** -4)
    f = random_bandlimited(G, seed, collar_window(PAR).support)
    q = TimeQuadrature(0.5, 2.0, 256)
    a = square_squared(f, sym, q, "dense")
    b = square_squared(f, sym, q, "sparse")
    assert np.abs(a - b).max() <= 1e-10 * a.max()


def test_pythagorean_over_residue_classes():
    sym = collar_symbol(PAR, BumpProfile(), 2.0 ** -4)
    f = random_bandlimited(G, 4, collar_window(PAR).support)
    q = TimeQuadrature(0.125, 8.0, 128)
    full = square_squared(f, sym, q)
    parts = sum(square_squared(f, sym, q.restricted(3, k)) for k in range(3))
    assert np.abs(parts - full).max() < 1e-10 * full.max()


def test_square_function_plancherel():
    sym = collar_symbol(PAR, BumpProfile(), 2.0 ** -4)
    f = random_bandlimited(G, 2, collar_window(PAR).support)
    q = TimeQuadrature(0.5, 2.0, 256)
    mask = active_mask(forward_transform(f).values)
    plan = SquarePlan(G, [sym], q, mask)
    phys = lp_norm(plan.apply(f), 2) ** 2
    freq = plan.l2_squared_frequency(f)
    assert abs(phys - freq) / freq < 1e-6


def test_plan_rejects_foreign_spectrum():
    sym = radial_bump()
    f = random_bandlimited(G, 0, annulus(1.0, 2.0))
    plan = SquarePlan(G, [sym], TimeQuadrature(0.5, 2.0, 8), active_mask(forward_transform(f).values))
    with pytest.raises(InputError):
        plan.squared(random_bandlimited(G, 1, annulus(2.5, 3.0)))


def test_v_function_single_piece_is_square_function():
    sym = radial_bump()
    f = random_bandlimited(G, 3, annulus(1.0, 2.0))
    q = TimeQuadrature(0.5, 2.0, 32)
    a = v_function(f, [sym], q).values
    b = square_function(f, sym, q).values
    assert np.array_equal(a, b)
    with pytest.raises(InputError):
        v_function(f, [], q)


# -- partial sums and maximal operators -----------------------------------------------

def test_partial_sum_plane_wave_eigenvalue():
    xi0 = (G.xi[64 + 8], G.xi[64 + 20])
    f = plane_wave(G, xi0)
    sym = distance_power_symbol(PAR, lambda a, b: np.ones(np.broadcast(a, b).shape), 0.5)
    for R in (0.7, 1.0, 1.9):
        ev = float(sym(xi0[0] / R, xi0[1] / R))
        out = br_partial(f, sym, R).values
        assert np.abs(out - ev * f.values).max() < 1e-12
    assert np.abs(br_partial(f, sym, 1e-3).values).max() < 1e-12
    with pytest.raises(DomainError):
        br_partial(f, sym, 0.0)


def test_maximal_single_radius_and_monotone_refinement():
    sym = distance_power_symbol(PAR, collar_window(PAR), 0.5)
    f = random_bandlimited(G, 0, collar_window(PAR).support)
    one = br_maximal(f, sym, RGridList([1.3])).values
    assert np.abs(one - np.abs(br_partial(f, sym, 1.3).values)).max() < 1e-14
    rg = RGrid(0.5, 2.0 ** 0.25, 12)
    a = br_maximal(f, sym, rg).values
    b = br_maximal(f, sym, rg.refined()).values
    # refined nodes agree with the coarse ones up to rounding in q^j
    assert np.all(b.real >= a.real - 1e-8 * a.real.max())
    fine = rg.refined().values
    assert np.allclose(fine[::2], rg.values, rtol=1e-12, atol=0)
    with pytest.raises(InputError):
        br_maximal(f, sym, RGridList([]))


def test_rgrid_validation():
    for args in ((0, 2), (1, 1), (1, 2, -1)):
        with pytest.raises(ParameterError):
            RGrid(*args)


def test_vector_valued_norms_errors_and_identity():
    f = random_bandlimited(G, 0, annulus(0.5, 1.0))
    one = Symbol(lambda a, b: np.ones(np.broadcast(a, b).shape), "one", {})
    a, b = vector_valued_norms([f, f], one, [1.0, 2.0], 2.0)
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(DomainError):
        vector_valued_norms([f], one, [1.0], 5.0)
    with pytest.raises(DomainError):
        vector_valued_norms([f], one, [1.0], 1.0)
    with pytest.raises(InputError):
        vector_valued_norms([f], one, [1.0, 2.0], 2.0)


def test_symbol_radii_of_box_and_radial():
    assert symbol_radii(radial_bump()) == (1.0, 2.0)
    r1, r2 = symbol_radii(radial_bump().scaled(2.0))
    assert (r1, r2) == (0.5, 1.0)


# -- cone operators and subordination ------------------------------------------------------

def test_subordination_constant_unit_case():
    assert subordination_constant(0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert subordination_constant(0.25, 0.75) == pytest.approx(
        math.gamma(2.0) / (math.gamma(1.25) * math.gamma(0.75)), rel=1e-14)


@pytest.mark.parametrize("side", ["inside", "outside"])
def test_subordination_identity(side):
    b, _ = subordination_windows(PAR, side)
    fs = [random_bandlimited(G, s, b.support) for s in range(2)]
    rep = subordination_check(fs, PAR, 0.25, 0.75, side=side, panels=1024, n_probes=16)
    assert rep.residual < 1e-3
    assert rep.passed or rep.halving_ratio < 1.75


def test_outside_operator_vanishes_below_unit_dilation():
    win = ConeWindow(PAR, PAR.I1, PAR.I2, (0.4, 0.7), (0.3, 0.75))
    assert outer_dilation(PAR, win) < 1
    f = random_bandlimited(G, 0, win.support)
    out = cone_partial_outside(f, win, PAR, 0.5, 1.0)
    assert np.abs(out.values).max() == 0
    ins = cone_partial_inside(f, win, PAR, 0.5, 1.0)
    assert np.abs(ins.values).max() > 0


def test_subordination_rejects_bad_orders():
    f = random_bandlimited(G, 0, annulus(0.5, 1))
    with pytest.raises(ParameterError):
        subordination_check([f], PAR, 0.0, 0.5)
    with pytest.raises(ParameterError):
        subordination_check([f], PAR, -0.6, 1.0)
    with pytest.raises(InputError):
        subordination_check([], PAR, 0.0, 1.0)


def test_domination_ratio_finite():
    b, _ = subordination_windows(PAR, "inside")
    f = random_bandlimited(G, 1, b.support)
    res = maximal_domination_check(f, PAR, 0.5)
    assert 0 < res.sup_ratio < 10
    zero = Field(G, np.zeros((G.n, G.n)), PHYSICAL)
    assert maximal_domination_check(zero, PAR, 0.5).sup_ratio == 0


# -- kernels and box averages -------------------------------------------------------

@pytest.mark.slow
def test_kernel_decay_small():
    rep = kernel_decay_check(PAR, deltas=(2.0 ** -4, 2.0 ** -6), ts=(1.0,), n_samples=16)
    assert rep.passed, (rep.ratios, rep.l1_norms)


def test_box_average_domination():
    d = 2.0 ** -4
    dec = build_decomposition(PAR, d)
    col = collar_symbol(PAR, BumpProfile(), d)
    g = GridSpec(64.0, 512)
    l = dec.active[len(dec.active) // 2]
    f = piece_support_field(g, 0, partition_pieces(dec, col).zeta[l], (1.0, 1.5, 2.0))
    rep = box_average_domination(f, dec, PAR, col, l, 0, t_samples=8)
    assert 0 < rep.sup_ratio < 50
