import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brlab.curve import preset
from brlab.errors import DomainError, LemmaFailure, ResolutionError
from brlab.geometry import (LemmaRow, build_decomposition, cell_polygon, cells_meeting_collar, clip_halfplane,
                            clip_polygon, collar_time_measure, count_active_indices, dilate_separation,
                            is_convex_ccw, max_sector_count, points_in_polygon, polygon_area, ray_scale_b1,
                            rect, sector_count, square, verify_ray_lemmas, verify_support_containment)
from brlab.symbols import BumpProfile, collar_symbol, partition_pieces

shapely = pytest.importorskip("shapely.geometry")

PAR = preset("parabola-b1")
POW = preset("power-b3")


def _hp_to_shapely(n, c, R=100.0):
    # big polygon for {n . p <= c}
    n = np.asarray(n, float)
    n = n / np.hypot(*n)
    c = c / 1.0
    t = np.array([-n[1], n[0]])
    p0 = n * c
    pts = [p0 + R * t, p0 - R * t, p0 - R * t - R * n, p0 + R * t - R * n]
    return shapely.Polygon(pts)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 2 * np.pi), st.floats(-1.0, 2.0)), min_size=1, max_size=6))
def test_clipping_matches_shapely(hps):
    planes = [((np.cos(a), np.sin(a)), c) for a, c in hps]
    poly = clip_polygon(square(2.0), planes)
    ref = shapely.Polygon(square(2.0))
    for n, c in planes:
        ref = ref.intersection(_hp_to_shapely(n, c))
    assert polygon_area(poly) == pytest.approx(ref.area, abs=1e-9)
    assert is_convex_ccw(poly)
    if len(poly):
        for n, c in planes:
            assert np.all(poly @ np.asarray(n) <= c + 1e-12)


def test_superset_halfplane_is_noop():
    p = rect(0, 1, 0, 2)
    q = clip_halfplane(p, (1.0, 0.0), 5.0)
    assert np.array_equal(p, q)
    assert len(clip_halfplane(p, (1.0, 0.0), -1.0)) == 0


def test_points_in_polygon():
    p = rect(0, 1, 0, 1)
    pts = np.array([[0.5, 0.5], [1.0, 1.0], [1.1, 0.5], [-1e-14, 0.2]])
    assert points_in_polygon(p, pts).tolist() == [True, True, False, True]


def test_interval_arithmetic():
    d = build_decomposition(PAR, 2.0 ** -6)
    assert d.step == 1 / 8
    assert np.allclose(np.diff(d.a), 1 / 8, atol=0) and np.allclose(np.diff(d.b), 1 / 8, atol=0)
    assert d.nu(3) == 9
    assert all(np.all(np.abs(np.asarray(c) / d.step - np.round(np.asarray(c) / d.step)) < 1e-12)
               for c in (d.a, d.b))


def test_too_coarse_delta_raises():
    with pytest.raises(ResolutionError):
        build_decomposition(PAR, 2.0 ** -2)


def test_case_mismatch_raises():
    with pytest.raises(DomainError):
        build_decomposition(PAR, 2.0 ** -4, case=POW.tag)


@pytest.mark.parametrize("curve", [PAR, POW, preset("parabola-b2"), preset("power-b4")])
def test_sector_contains_generating_rays(curve):
    d = build_decomposition(curve, 2.0 ** -6)
    for l in d.active:
        sec = d.sector(l)
        g = np.array([d.a[l - 1], curve.psi(d.a[l - 1])])
        mid = 0.5 * (d.a[l - 1] + d.a[l])
        gm = np.array([mid, curve.psi(mid)])
        for r in (0.5, 1.0, 2.0):
            assert sec.contains(np.array([r * g, r * gm])).all()
        assert is_convex_ccw(sec.polygon)


def test_cells_lie_in_generators():
    d = build_decomposition(PAR, 2.0 ** -4)
    n_nonempty = 0
    for l in d.active:
        hs = cells_meeting_collar(d, PAR, l, 1.0)
        for h in hs:
            for k in range(1, len(d.a)):
                for j in range(1, len(d.b)):
                    c = cell_polygon(d, PAR, l, k, j, h)
                    if c.empty:
                        continue
                    n_nonempty += 1
                    v = c.polygon
                    assert is_convex_ccw(v)
                    for hp in (d.slab_halfplanes(l, h) + d.box_halfplanes(k, j)
                               + d.sector_halfplanes(l, True) + d.band_halfplanes()):
                        assert np.all(v @ hp[0] <= hp[1] + 1e-12)
    assert n_nonempty > 0


def test_disjoint_box_gives_empty_cell():
    d = build_decomposition(PAR, 2.0 ** -4)
    l = d.active[0]
    k = len(d.a) - 1  # far right column, away from the leftmost sector
    assert all(cell_polygon(d, PAR, l, k, j, 0).empty for j in range(1, len(d.b)))


def test_cell_area_scales_like_delta_three_halves():
    areas = {}
    for L in (4, 6, 8):
        d = build_decomposition(PAR, 2.0 ** -L)
        best = 0.0
        for l in d.active:
            for h in cells_meeting_collar(d, PAR, l, 1.0):
                best = max(best, d.p_cell(l, h).area)
        areas[L] = best / d.delta ** 1.5
    c0 = areas[4]
    assert all(v <= 2 * c0 for v in areas.values())


def test_dilation_covariance():
    d = build_decomposition(PAR, 2.0 ** -4)
    l = d.active[1]
    h = cells_meeting_collar(d, PAR, l, 1.0)[0]
    c = d.p_cell(l, h)
    assert not c.empty
    r = 1.7
    scaled = clip_polygon(square(r * d.r_clip), [(n, r * cc) for n, cc in c.halfplanes])
    assert polygon_area(scaled) == pytest.approx(r * r * c.area, rel=1e-12)
    assert np.abs(np.sort(scaled, axis=0) - np.sort(r * c.polygon, axis=0)).max() < 1e-12


@pytest.mark.parametrize("curve", [PAR, POW])
def test_support_containment(curve):
    d = build_decomposition(curve, 2.0 ** -6)
    col = collar_symbol(curve, BumpProfile(), d.delta)
    pcs = partition_pieces(d, col)
    rows = [verify_support_containment(d, curve, col, l, pcs) for l in d.active]
    assert all(isinstance(r, LemmaRow) and r.passed for r in rows)


def test_support_containment_failure_has_witness():
    d = build_decomposition(PAR, 2.0 ** -4)
    col = collar_symbol(PAR, BumpProfile(), d.delta)
    pcs = partition_pieces(d, col)
    l = d.active[0]
    # the piece at the far end of the collar tested against sector l
    pcs.zeta[l] = pcs.zeta[d.active[-1]]
    with pytest.raises(LemmaFailure) as e:
        verify_support_containment(d, PAR, col, l, pcs)
    assert e.value.witness is not None


def test_neighbour_sector_points_accepted():
    d = build_decomposition(PAR, 2.0 ** -6)
    l = d.active[3]
    # points of the previous thin sector lie in the fat sector l
    t = np.linspace(d.a[l - 2], d.a[l - 1], 20)
    pts = np.stack([t, PAR.psi(t) + 0.01], axis=1)
    assert d.in_fat_sector(l, pts).all()


def test_counts_bounded_and_reconstruct():
    maxima = []
    for L in (4, 6, 8):
        d = build_decomposition(PAR, 2.0 ** -L)
        col = collar_symbol(PAR, BumpProfile(), d.delta)
        pcs = partition_pieces(d, col)
        mF = mG = 0
        for l in d.active[:: max(1, len(d.active) // 4)]:
            for t in (1.0, 1.3, 1.7, 2.0):
                F, G, res = count_active_indices(d, PAR, col, l, t, pcs)
                assert res < 1e-10
                mF, mG = max(mF, F), max(mG, G)
        assert mF <= 8 and mG <= 8
        maxima.append((mF, mG))
    assert maxima[-1][0] <= maxima[0][0] + 1 and maxima[-1][1] <= maxima[0][1] + 1
    with pytest.raises(DomainError):
        count_active_indices(d, PAR, col, d.active[0], 2.5, pcs)


def test_sector_count_far_box_is_zero():
    d = build_decomposition(PAR, 2.0 ** -4)
    # bottom-left box sits well below the cone over the active sectors
    assert sector_count(d, 1, 1) == 0


def test_sector_count_bounded():
    vals = [max_sector_count(build_decomposition(PAR, 2.0 ** -L)) for L in (4, 6, 8)]
    assert max(vals) <= 2 * vals[0]


def test_time_measure():
    res = []
    for L in (4, 6, 8):
        d = build_decomposition(PAR, 2.0 ** -L)
        rays = verify_ray_lemmas(PAR, d.delta, d, taus=np.linspace(0.5, 1, 4))
        b1, dd = rays["B1"] * d.delta, rays["D"] * d.delta
        bound = np.log((1 + b1) / (1 - b1)) + np.log((1 + dd) / (1 - dd))
        m = 0.0
        for l in d.active[:: max(1, len(d.active) // 4)]:
            for h in cells_meeting_collar(d, PAR, l, 0.75):
                m = max(m, collar_time_measure(d, PAR, 0, l, h))
        assert m <= bound
        res.append(m / d.delta)
    assert max(res) <= 2 * res[0]


def test_time_measure_far_cell_zero():
    d = build_decomposition(PAR, 2.0 ** -4)
    l = d.active[0]
    hs = cells_meeting_collar(d, PAR, l, 1.0)
    far = max(hs) + 40
    if not d.p_cell(l, far).empty:
        assert collar_time_measure(d, PAR, 0, l, far) == 0


def test_ray_scale_examples():
    t = np.linspace(*PAR.I1, 50)
    assert np.abs(PAR.rho(t, PAR.psi(t)) - 1).max() < 1e-12
    b = [ray_scale_b1(PAR, 2.0 ** -L) for L in (4, 6, 8)]
    assert max(b) <= 2 * b[0]
    assert dilate_separation(PAR) > 0
    assert dilate_separation(POW) > 0
