"""Dyadic decomposition of the frequency plane into sectors, slabs and cells.

All regions are convex polygons obtained by clipping a bounding square with
halfplanes ``n . p <= c``. Lattice membership for reconstruction uses
half-open index predicates so that every point has exactly one owner cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .curve import Curve, monotone_certificate
from .errors import AdmissibilityError, DomainError, LemmaFailure, ResolutionError
from .symbols import Symbol, dyadic_level, partition_pieces

TOL = 1e-12
MIN_INTERVALS = 8


# -- convex polygon primitives ------------------------------------------------------

def clip_halfplane(poly: np.ndarray, n, c) -> np.ndarray:
    """Sutherland-Hodgman step: keep the part of ``poly`` with n . p <= c."""
    if len(poly) == 0:
        return poly
    n = np.asarray(n, float)
    d = poly @ n - c
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        dp, dq = d[i], d[(i + 1) % m]
        if dp <= 0:
            out.append(p)
        if (dp < 0 < dq) or (dq < 0 < dp):
            out.append(p + (q - p) * (dp / (dp - dq)))
    return _tidy(np.array(out, float).reshape(-1, 2))


def _tidy(poly):
    if len(poly) == 0:
        return poly
    keep = [poly[0]]
    for p in poly[1:]:
        if np.max(np.abs(p - keep[-1])) > 1e-15:
            keep.append(p)
    if len(keep) > 1 and np.max(np.abs(keep[0] - keep[-1])) <= 1e-15:
        keep.pop()
    poly = np.array(keep)
    if len(poly) < 3 or polygon_area(poly) <= 1e-300:
        return np.zeros((0, 2))
    return poly


def clip_polygon(poly, halfplanes) -> np.ndarray:
    for n, c in halfplanes:
        poly = clip_halfplane(poly, n, c)
        if len(poly) == 0:
            break
    return poly


def polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def is_convex_ccw(poly, tol=1e-12) -> bool:
    if len(poly) < 3:
        return True
    e = np.roll(poly, -1, axis=0) - poly
    cr = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cr >= -tol))


def points_in_polygon(poly, pts, tol=TOL):
    """Closed membership in a CCW convex polygon, vectorised over pts."""
    pts = np.asarray(pts, float)
    if len(poly) == 0:
        return np.zeros(pts.shape[:-1], bool)
    ok = np.ones(pts.shape[:-1], bool)
    for i in range(len(poly)):
        a = poly[i]
        e = poly[(i + 1) % len(poly)] - a
        cr = e[0] * (pts[..., 1] - a[1]) - e[1] * (pts[..., 0] - a[0])
        ok &= cr >= -tol * max(1.0, np.hypot(*e))
    return ok


def square(half):
    return np.array([[-half, -half], [half, -half], [half, half], [-half, half]], float)


def rect(x0, x1, y0, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)


def halfplane_margin(halfplanes, pts):
    """min over halfplanes of the normalised slack (c - n.p)/|n|."""
    pts = np.asarray(pts, float)
    m = np.full(pts.shape[:-1], np.inf)
    for n, c in halfplanes:
        n = np.asarray(n, float)
        m = np.minimum(m, (c - pts @ n) / np.hypot(*n))
    return m


@dataclass(frozen=True, eq=False)
class SectorCell:
    kind: str
    polygon: np.ndarray
    indices: tuple
    halfplanes: tuple = field(default=(), repr=False)

    @property
    def empty(self) -> bool:
        return len(self.polygon) == 0

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    def contains(self, pts, tol=TOL):
        return points_in_polygon(self.polygon, pts, tol)


# -- the decomposition ---------------------------------------------------------------

def _grid_range(lo, hi, step):
    """Round [lo, hi] outward to multiples of step."""
    return np.floor(lo / step + 1e-12) * step, np.ceil(hi / step - 1e-12) * step


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Intervals of length delta^(1/2) in both coordinates, sectors through
    the curve points above the breakpoints, tangent slabs of width delta.

    The coordinate box is the hull of the curve box and its half-dilate, so
    that supports rescaled by t in [1, 2] stay inside it.
    """
    curve: Curve
    delta: float

    def __post_init__(self):
        dyadic_level(self.delta)
        if self.n_intervals < MIN_INTERVALS:
            raise ResolutionError(
                f"delta={self.delta} gives {self.n_intervals} intervals across the box; "
                f"need at least {MIN_INTERVALS}")

    @property
    def L(self) -> int:
        return dyadic_level(self.delta)

    @property
    def step(self) -> float:
        return 2.0 ** (-self.L // 2)

    @property
    def tag(self):
        return self.curve.tag

    @cached_property
    def x_range(self):
        (x0, x1), _ = self.curve.box
        return _grid_range(min(x0, x0 / 2), max(x1, x1 / 2), self.step)

    @cached_property
    def y_range(self):
        _, (y0, y1) = self.curve.box
        return _grid_range(min(y0, y0 / 2), max(y1, y1 / 2), self.step)

    @property
    def n_intervals(self) -> int:
        x0, x1 = self.x_range
        return int(round((x1 - x0) / self.step))

    @cached_property
    def a(self) -> np.ndarray:
        """Breakpoints a_0 < ... < a_K in xi1."""
        x0 = self.x_range[0]
        return x0 + self.step * np.arange(self.n_intervals + 1)

    @cached_property
    def b(self) -> np.ndarray:
        """Breakpoints b_0 < ... < b_J in xi2."""
        y0, y1 = self.y_range
        n = int(round((y1 - y0) / self.step))
        return y0 + self.step * np.arange(n + 1)

    @property
    def n_count(self) -> int:
        return self.n_intervals

    @cached_property
    def r_clip(self) -> float:
        """Half-size of the square that truncates the unbounded sectors."""
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        r2 = max(np.hypot(x, y) for x in (x0, x1) for y in (y0, y1))
        return 4.0 * r2

    # -- which sector indices make sense -----------------------------------------
    @cached_property
    def monotone_span(self):
        """Sub-interval of the box xi1-range where the ray ratio is strictly monotone."""
        x0, x1 = self.x_range
        t = np.linspace(x0, x1, 20001)
        gap = self.curve._tangent_gap(t)
        s = np.sign(self.curve._tangent_gap(np.array([np.mean(self.curve.interval)])))[0]
        good = gap * s > 1e-12
        if self.tag.uses_star:
            good &= np.abs(t) > 1e-12
            good &= (t > 0) if self.tag.case == "B3" else (t < 0)
        else:
            p = self.curve.psi(t)
            good &= (p > 0) if self.tag.case == "B1" else (p < 0)
        mid = int(np.argmin(np.abs(t - np.mean(self.curve.interval))))
        lo = mid
        while lo > 0 and good[lo - 1]:
            lo -= 1
        hi = mid
        while hi < len(t) - 1 and good[hi + 1]:
            hi += 1
        return t[lo], t[hi]

    @cached_property
    def available(self):
        """Indices l whose fat sector (a_{l-2} .. a_{l+1}) is well defined."""
        lo, hi = self.monotone_span
        a = self.a
        return tuple(l for l in range(2, len(a) - 1) if a[l - 2] >= lo and a[l + 1] <= hi)

    @cached_property
    def active(self):
        """Indices l with omega_l meeting the xi1-support of the collar window."""
        s2, t2 = self.curve.I2
        a = self.a
        act = tuple(l for l in range(1, len(a)) if a[l] > s2 and a[l - 1] < t2)
        missing = [l for l in act if l not in self.available]
        if missing:
            raise ResolutionError(f"sectors {missing} leave the monotone part of the curve box")
        return act

    def family(self, which: int):
        return [l for l in self.active if (l - which) % 4 == 0]

    def nu(self, l: int) -> int:
        return 4 * (l - 1) + 1

    # -- halfplanes -------------------------------------------------------------
    def ray(self, t):
        return np.array([t, float(self.curve.psi(np.asarray(t)))])

    def _wedge(self, t_lo, t_hi):
        u, w = self.ray(t_lo), self.ray(t_hi)
        s = np.sign(u[0] * w[1] - u[1] * w[0])
        return ((np.array([s * u[1], -s * u[0]]), 0.0),
                (np.array([-s * w[1], s * w[0]]), 0.0))

    def orientation(self, l: int) -> int:
        u, w = self.ray(self.a[l - 1]), self.ray(self.a[l])
        return int(np.sign(u[0] * w[1] - u[1] * w[0]))

    def _check_l(self, l, fat=False):
        if fat and l not in self.available:
            raise DomainError(f"fat sector {l} not available (have {self.available})")
        if not 1 <= l < len(self.a):
            raise DomainError(f"sector index {l} out of range")

    def sector_halfplanes(self, l: int, fat: bool = False):
        self._check_l(l, fat)
        if fat:
            return self._wedge(self.a[l - 2], self.a[l + 1])
        return self._wedge(self.a[l - 1], self.a[l])

    def slope(self, l: int) -> float:
        return float(self.curve.dpsi(np.asarray(self.a[l - 1])))

    def slab_halfplanes(self, l: int, h: int):
        m = self.slope(l)
        d = self.delta
        return ((np.array([m, -1.0]), -h * d), (np.array([-m, 1.0]), (h + 1) * d))

    def box_halfplanes(self, k: int, j: int):
        a, b = self.a, self.b
        return ((np.array([-1.0, 0.0]), -a[k - 1]), (np.array([1.0, 0.0]), a[k]),
                (np.array([0.0, -1.0]), -b[j - 1]), (np.array([0.0, 1.0]), b[j]))

    def band_halfplanes(self):
        y0, y1 = self.y_range
        return ((np.array([0.0, -1.0]), -y0), (np.array([0.0, 1.0]), y1))

    # -- polygons -----------------------------------------------------------------
    def _make(self, kind, idx, hps, start=None):
        base = square(self.r_clip) if start is None else start
        return SectorCell(kind, clip_polygon(base, hps), idx, tuple(hps))

    def sector(self, l):
        return self._make("sector", (l,), self.sector_halfplanes(l))

    def fat_sector(self, l):
        return self._make("fat-sector", (l,), self.sector_halfplanes(l, True))

    def slab(self, l, h):
        return self._make("slab", (l, h), self.slab_halfplanes(l, h))

    def p_cell(self, l, h):
        """Slab, fat sector and band, without the coordinate box."""
        hps = self.slab_halfplanes(l, h) + self.sector_halfplanes(l, True) + self.band_halfplanes()
        return self._make("p-cell", (l, h), hps)

    def cell(self, l, k, j, h):
        if not (1 <= k < len(self.a) and 1 <= j < len(self.b)):
            raise DomainError(f"box index ({k}, {j}) out of range")
        hps = (self.box_halfplanes(k, j) + self.band_halfplanes()
               + self.sector_halfplanes(l, True) + self.slab_halfplanes(l, h))
        return self._make("cell", (l, k, j, h), hps)

    # -- half-open ownership --------------------------------------------------------
    def k_index(self, x1):
        return np.floor((np.asarray(x1) - self.a[0]) / self.step).astype(int) + 1

    def j_index(self, x2):
        return np.floor((np.asarray(x2) - self.b[0]) / self.step).astype(int) + 1

    def h_index(self, l, x1, x2):
        return np.floor((np.asarray(x2) - self.slope(l) * np.asarray(x1)) / self.delta).astype(int)

    def in_fat_sector(self, l, pts, tol=TOL):
        return halfplane_margin(self.sector_halfplanes(l, True), pts) >= -tol


def build_decomposition(curve: Curve, delta: float, case=None) -> Decomposition:
    if case is not None and case != curve.tag:
        raise DomainError(f"case {case} does not match the curve tag {curve.tag}")
    return Decomposition(curve, delta)


def cell_polygon(decomp: Decomposition, curve: Curve, l, k, j, h) -> SectorCell:
    return decomp.cell(l, k, j, h)


# -- lemma checks ---------------------------------------------------------------------

@dataclass
class LemmaRow:
    lemma: str
    index: tuple
    value: float
    bound: Optional[float]
    passed: bool
    note: str = ""


def _collar_samples(curve, t_lo, t_hi, c_star, delta, nt=100, nk=100):
    t = np.linspace(t_lo, t_hi, nt)
    k = np.linspace(0.0, c_star * delta, nk)
    T, K = np.meshgrid(t, k, indexing="ij")
    return np.stack([T, curve.psi(T) + K], axis=-1)


def verify_support_containment(decomp: Decomposition, curve: Curve, collar: Symbol, l: int,
                               pieces=None, nt=100, nk=100) -> LemmaRow:
    """Collar piece l sampled in (t, kappa) must lie in the fat sector l."""
    pieces = pieces or partition_pieces(decomp, collar)
    piece = pieces.zeta[l]
    lo, hi = piece.params["lo"], piece.params["hi"]
    pts = _collar_samples(curve, lo, hi, collar.params["c_star"], decomp.delta, nt, nk)
    val = np.abs(piece(pts[..., 0], pts[..., 1]))
    hit = val > 1e-12
    if not hit.any():
        return LemmaRow("support", (l,), np.inf, 0.0, True, "piece vanishes")
    fat = decomp.fat_sector(l)
    margin = halfplane_margin(fat.halfplanes, pts[hit])
    inside = fat.contains(pts[hit])
    worst = float(margin.min())
    if not inside.all() or worst < -TOL:
        w = pts[hit][int(np.argmin(margin))]
        raise LemmaFailure(f"collar piece {l} leaves its fat sector", witness=tuple(w))
    return LemmaRow("support", (l,), worst, 0.0, True)


def _local_lattice(decomp, curve, l, t, spacing, c_star):
    """Sub-lattice (multiples of ``spacing``) covering the support of piece l at scale t."""
    lo, hi = decomp.a[l - 1], decomp.a[l]
    s = np.linspace(lo, hi, 257)
    p = curve.psi(s)
    x0, x1 = lo / t, hi / t
    y0, y1 = p.min() / t, (p.max() + c_star * decomp.delta) / t
    pad = 2 * spacing
    i = np.arange(np.floor((min(x0, x1) - pad) / spacing), np.ceil((max(x0, x1) + pad) / spacing) + 1)
    j = np.arange(np.floor((min(y0, y1) - pad) / spacing), np.ceil((max(y0, y1) + pad) / spacing) + 1)
    X, Y = np.meshgrid(i * spacing, j * spacing, indexing="ij")
    return X.ravel(), Y.ravel()


def count_active_indices(decomp: Decomposition, curve: Curve, collar: Symbol, l: int, t: float,
                         pieces=None, lattice_spacing=None):
    """(card F, card G, reconstruction residual) for piece l scaled by t."""
    if not 1 <= t <= 2:
        raise DomainError(f"t must lie in [1, 2], got {t}")
    pieces = pieces or partition_pieces(decomp, collar)
    piece = pieces.zeta[l].scaled(t)
    lo, hi = pieces.zeta[l].params["lo"], pieces.zeta[l].params["hi"]
    cs = collar.params["c_star"]
    pts = _collar_samples(curve, lo, hi, cs, decomp.delta, 400, 40) / t
    v = np.abs(piece(pts[..., 0], pts[..., 1]))
    pts = pts[v > 1e-12]
    spacing = lattice_spacing or decomp.delta / 16
    X, Y = _local_lattice(decomp, curve, l, t, spacing, cs)
    sv = piece(X, Y)
    nz = sv != 0
    allx = np.concatenate([pts[:, 0], X[nz]])
    ally = np.concatenate([pts[:, 1], Y[nz]])
    hs = decomp.h_index(l, allx, ally)
    ks = decomp.k_index(allx)
    js = decomp.j_index(ally)
    F = sorted(set(hs.tolist()))
    G = sorted(set(zip(ks.tolist(), js.tolist())))
    # reconstruction: each support node must sit in the closed polygon of its owner cell
    recon = np.zeros(X.shape)
    owner_h = decomp.h_index(l, X, Y)
    owner_k = decomp.k_index(X)
    owner_j = decomp.j_index(Y)
    P = np.stack([X, Y], axis=-1)
    for (k, j) in G:
        if not (1 <= k < len(decomp.a) and 1 <= j < len(decomp.b)):
            continue
        for h in F:
            sel = (owner_k == k) & (owner_j == j) & (owner_h == h)
            if not sel.any():
                continue
            c = decomp.cell(l, k, j, h)
            inside = c.contains(P[sel])
            recon[np.flatnonzero(sel)[inside]] += sv[sel][inside]
    resid = float(np.max(np.abs(recon - sv))) if sv.size else 0.0
    return len(F), len(G), resid


def sector_count(decomp: Decomposition, k: int, j: int, sectors=None) -> int:
    """Number of fat sectors meeting the box omega_k x H_j.

    Counts over the active sectors by default; available sectors near the
    edge of the monotone span can approach a tangent through the origin,
    where the count is not uniformly bounded.
    """
    box = rect(decomp.a[k - 1], decomp.a[k], decomp.b[j - 1], decomp.b[j])
    n = 0
    for l in (decomp.active if sectors is None else sectors):
        if len(clip_polygon(box, decomp.sector_halfplanes(l, True))) > 0:
            n += 1
    return n


def relevant_boxes(decomp: Decomposition, c_star: float = 0.125):
    """Boxes meeting the collar support dilated by factors in [1/2, 1]."""
    curve = decomp.curve
    pts = _collar_samples(curve, *curve.I2, c_star, decomp.delta, 4 * decomp.n_intervals * 16, 3)
    s = np.linspace(0.5, 1.0, 8 * decomp.n_intervals + 1)
    P = (s[:, None, None] * pts.reshape(1, -1, 2)).reshape(-1, 2)
    return sorted(set(zip(decomp.k_index(P[:, 0]).tolist(), decomp.j_index(P[:, 1]).tolist())))


def max_sector_count(decomp: Decomposition, boxes=None, sectors=None) -> int:
    """Largest sector_count over ``boxes`` (default: the relevant boxes)."""
    boxes = relevant_boxes(decomp) if boxes is None else boxes
    return max(sector_count(decomp, k, j, sectors) for k, j in boxes)


def collar_points(curve: Curve, delta: float, c_star: float, nt: int = 4000, nk: int = 9):
    s2, t2 = curve.I2
    return _collar_samples(curve, s2, t2, c_star, delta, nt, nk).reshape(-1, 2)


def collar_time_measure(decomp: Decomposition, curve: Curve, n: int, l: int, h: int,
                        c_star: float = 0.125, samples: int = 4096, pts=None) -> float:
    """Log-measure of t in [2^n, 2^(n+1)] with (t 2^-n P_h^l) meeting the collar.

    Each of the log-uniform samples s = t 2^-n is tested exactly against the
    parametric collar points: P is an intersection of halfplanes, so a point
    X lies in s P iff it satisfies the rescaled inequalities.
    """
    del n  # the set only depends on t 2^-n
    cell = decomp.p_cell(l, h)
    if cell.empty:
        return 0.0
    X = collar_points(curve, decomp.delta, c_star) if pts is None else pts
    # each halfplane n.p <= c at scale s reads n.X <= s c
    lo = np.full(len(X), 1.0)
    hi = np.full(len(X), 2.0)
    for nv, c in cell.halfplanes:
        q = X @ np.asarray(nv, float)
        if c > 0:
            lo = np.maximum(lo, q / c)
        elif c < 0:
            hi = np.minimum(hi, q / c)
        else:
            bad = q > 1e-15
            hi = np.where(bad, -np.inf, hi)
    ok = lo <= hi
    if not ok.any():
        return 0.0
    s = np.exp(np.log(2.0) * (np.arange(samples) + 0.5) / samples)
    iv = np.stack([lo[ok], hi[ok]], axis=1)
    iv = iv[np.argsort(iv[:, 0])]
    # merge and count samples inside the union
    hit = np.zeros(samples, bool)
    for a, b in iv:
        i0 = np.searchsorted(s, a, "left")
        i1 = np.searchsorted(s, b, "right")
        hit[i0:i1] = True
    return float(hit.sum() * np.log(2.0) / samples)


def cells_meeting_collar(decomp: Decomposition, curve: Curve, l: int, tau: float,
                         c_star: float = 0.125):
    """Slab indices h whose P cell meets the tau-dilated collar over omega_l."""
    pts = tau * _collar_samples(curve, decomp.a[l - 1], decomp.a[l], c_star, decomp.delta, 200, 9)
    pts = pts.reshape(-1, 2)
    hs = sorted(set(decomp.h_index(l, pts[:, 0], pts[:, 1]).tolist()))
    return [h for h in hs if not decomp.p_cell(l, h).empty]


def ray_scale_b1(curve: Curve, delta: float, n: int = 1000, seed: int = 0):
    """max |1 - s| / delta with s the ray scale of (t, psi(t) + kappa), |kappa| <= delta."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(*curve.I1, n)
    k = np.linspace(-delta, delta, n)
    rng.shuffle(k)
    rho = curve.rho(t, curve.psi(t) + k)
    return float(np.max(np.abs(1 - rho)) / delta)


def dilate_separation(curve: Curve, n: int = 1000, r: float = 1.01, s: float = 0.99) -> float:
    t = np.linspace(*curve.interval, n)
    g = np.stack([t, curve.psi(t)], axis=1)
    return float(cKDTree(s * g).query(r * g)[0].min())


def ray_lemmas_certificate(curve: Curve) -> float:
    m = monotone_certificate(curve)
    if not m > 0:
        raise AdmissibilityError(f"{curve.name}: ratio lost strict monotonicity")
    return m


def cell_scale_d(decomp: Decomposition, curve: Curve, l: int, tau: float, c_star: float = 0.125,
                 n_edge: int = 16, n_int: int = 64):
    """max |rho / tau - 1| / delta over vertices, edge and interior samples of
    every P cell meeting the tau-dilated collar piece l."""
    worst = 0.0
    rng = np.random.default_rng(l)
    for h in cells_meeting_collar(decomp, curve, l, tau, c_star):
        poly = decomp.p_cell(l, h).polygon
        e = np.linspace(0, 1, n_edge, endpoint=False)
        edges = (poly[:, None, :] + e[None, :, None] * (np.roll(poly, -1, 0) - poly)[:, None, :]).reshape(-1, 2)
        w = rng.dirichlet(np.ones(len(poly)), n_int)
        pts = np.concatenate([poly, edges, w @ poly])
        rho = curve.rho(pts[:, 0], pts[:, 1], strict=False)
        rho = rho[np.isfinite(rho)]
        if rho.size:
            worst = max(worst, float(np.max(np.abs(rho / tau - 1)) / decomp.delta))
    return worst


def verify_ray_lemmas(curve: Curve, delta: float, decomp: Optional[Decomposition] = None,
                      taus=None, c_star: float = 0.125):
    """Measured B1 (collar ray scales), dilate separation, and D (cell ray scales)."""
    cert = ray_lemmas_certificate(curve)
    b1 = ray_scale_b1(curve, delta)
    sep = dilate_separation(curve)
    decomp = decomp or Decomposition(curve, delta)
    taus = np.linspace(0.5, 1.0, 16) if taus is None else taus
    d = max(cell_scale_d(decomp, curve, l, tau, c_star) for l in decomp.active for tau in taus)
    return {"B1": b1, "separation": sep, "monotone": cert, "D": d}
