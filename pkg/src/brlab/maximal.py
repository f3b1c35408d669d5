"""Maximal functions on the periodic grid.

Hardy-Littlewood and strong maximal functions use centred dyadic boxes and
periodic prefix sums. Directional (Kakeya) averages use bilinear samples
along rotated segments, applied as two separable passes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, InputError, ParameterError
from .field import Field, GridSpec, PHYSICAL, apply_multiplier, lp_norm_array


def _mod(f) -> np.ndarray:
    if isinstance(f, Field):
        if f.space != PHYSICAL:
            raise InputError("maximal operators act on physical-space fields")
        return np.abs(f.values)
    return np.abs(np.asarray(f))


def _wrap(f: Field, a) -> Field:
    return Field(f.grid, a, PHYSICAL)


def dyadic_halfwidths(n: int):
    """0, 1, 2, 4, ... cells, stopping once the box covers the torus."""
    w = [0]
    k = 1
    while 2 * k + 1 <= n:
        w.append(k)
        k *= 2
    if 2 * w[-1] + 1 < n:
        w.append(n // 2)
    return w


def _box_mean_1d(a, w, axis):
    n = a.shape[axis]
    if 2 * w + 1 >= n:
        return np.broadcast_to(a.mean(axis=axis, keepdims=True), a.shape).copy()
    pad = np.concatenate([np.take(a, range(n - w - 1, n), axis=axis), a,
                          np.take(a, range(0, w), axis=axis)], axis=axis)
    c = np.cumsum(pad, axis=axis)
    hi = np.take(c, range(2 * w + 1, 2 * w + 1 + n), axis=axis)
    lo = np.take(c, range(0, n), axis=axis)
    return (hi - lo) / (2 * w + 1)


def _hl(a):
    out = a.copy()
    for w in dyadic_halfwidths(min(a.shape)):
        out = np.maximum(out, _box_mean_1d(_box_mean_1d(a, w, 0), w, 1))
    return out


def _strong(a):
    out = a.copy()
    ws = dyadic_halfwidths(min(a.shape))
    rows = {w: _box_mean_1d(a, w, 0) for w in ws}
    for w1 in ws:
        for w2 in ws:
            out = np.maximum(out, _box_mean_1d(rows[w1], w2, 1))
    return out


def hl_maximal(f) -> Field:
    """Centred maximal average over dyadic squares of odd cell width."""
    return _wrap(f, _hl(_mod(f)))


def strong_maximal(f) -> Field:
    """Centred maximal average over axis-parallel dyadic rectangles."""
    return _wrap(f, _strong(_mod(f)))


def powered_maximal(w, s: float) -> Field:
    if not s > 1:
        raise ParameterError(f"power s must exceed 1, got {s}")
    return _wrap(w, _hl(_mod(w) ** s) ** (1.0 / s))


def powered_strong_maximal(w, s: float) -> Field:
    if not s > 1:
        raise ParameterError(f"power s must exceed 1, got {s}")
    return _wrap(w, _strong(_mod(w) ** s) ** (1.0 / s))


# -- directional averages ----------------------------------------------------------

def _offsets(half, h):
    """Midpoint sample offsets covering [-half, half] with spacing <= h."""
    k = max(1, int(np.ceil(2 * half / h - 1e-9)))
    return -half + (np.arange(k) + 0.5) * (2 * half / k)


def _line_average(a, u, half, h):
    s = _offsets(half, h) / h
    return _kernels.shift_average(a, s * u[0], s * u[1])


def directional_box_average(f, direction, half_lengths, method: str = "sample") -> Field:
    """Average of f over the box centred at each node with half-lengths
    (along ``direction``, across it)."""
    g = f.grid
    u = np.asarray(direction, float)
    u = u / np.hypot(*u)
    l1, l2 = half_lengths
    if min(l1, l2) < g.h / 2 - 1e-12:
        raise DomainError(f"half-lengths {half_lengths} below half a cell")
    if method == "fourier":
        return box_average_fourier(f, u, half_lengths)
    a = f.values
    v = np.array([-u[1], u[0]])
    if np.iscomplexobj(a) and np.any(a.imag != 0):
        re = _line_average(_line_average(a.real, u, l1, g.h), v, l2, g.h)
        im = _line_average(_line_average(a.imag, u, l1, g.h), v, l2, g.h)
        return Field(g, re + 1j * im, PHYSICAL)
    out = _line_average(_line_average(np.ascontiguousarray(a.real), u, l1, g.h), v, l2, g.h)
    return Field(g, out, PHYSICAL)


def box_average_fourier(f: Field, direction, half_lengths) -> Field:
    """Exact box average of the trigonometric interpolant (sinc multiplier)."""
    u = np.asarray(direction, float)
    u = u / np.hypot(*u)
    v = np.array([-u[1], u[0]])
    l1, l2 = half_lengths

    def m(x1, x2):
        return np.sinc(2 * l1 * (u[0] * x1 + u[1] * x2)) * np.sinc(2 * l2 * (v[0] * x1 + v[1] * x2))
    return apply_multiplier(f, m)


@dataclass(frozen=True)
class DirectionSet:
    vectors: tuple

    def __post_init__(self):
        out = []
        for v in self.vectors:
            v = np.asarray(v, float)
            n = np.hypot(*v)
            if n == 0:
                raise InputError("zero direction")
            v = v / n
            # v and -v give the same rectangles
            if v[1] < 0 or (v[1] == 0 and v[0] < 0):
                v = -v
            if not any(np.max(np.abs(v - w)) < 1e-12 for w in out):
                out.append(v)
        if not out:
            raise InputError("empty direction set")
        object.__setattr__(self, "vectors", tuple(tuple(v) for v in out))

    @property
    def N(self) -> int:
        return len(self.vectors)

    @classmethod
    def uniform(cls, n: int) -> "DirectionSet":
        """Angles pi k / n; the set for n is contained in the set for 2n."""
        th = np.pi * np.arange(n) / n
        return cls(tuple(zip(np.cos(th), np.sin(th))))


@dataclass(frozen=True)
class RectFamily:
    """(half-length, half-width) pairs."""
    pairs: tuple

    def __post_init__(self):
        if not self.pairs:
            raise InputError("empty rectangle family")
        for l, w in self.pairs:
            if not l >= w > 0:
                raise InputError(f"need length >= width > 0, got {(l, w)}")

    def check(self, grid: GridSpec):
        for l, w in self.pairs:
            if w < grid.h / 2 - 1e-12:
                raise DomainError(f"rectangle {(l, w)} thinner than a grid cell")

    @classmethod
    def dyadic(cls, grid: GridSpec, widths=(1, 2, 4)) -> "RectFamily":
        """Half-lengths h/2 * 2^k up to the half-width of the torus; widths in cells."""
        pairs = []
        l = grid.h / 2
        while l <= grid.half_width + 1e-12:
            for w in widths:
                if w * grid.h / 2 <= l:
                    pairs.append((l, w * grid.h / 2))
            l *= 2
        return cls(tuple(pairs))


def direction_maxima(f, dirs: DirectionSet, rects: RectFamily) -> np.ndarray:
    """Per-direction max over the family of box averages of |f|; shape (N, n, n)."""
    g = f.grid
    rects.check(g)
    a = np.ascontiguousarray(_mod(f))
    out = np.empty((dirs.N,) + a.shape)
    lengths = sorted(set(l for l, _ in rects.pairs))
    for i, u in enumerate(dirs.vectors):
        u = np.asarray(u)
        v = np.array([-u[1], u[0]])
        m = np.zeros(a.shape)
        for l in lengths:
            first = _line_average(a, u, l, g.h)
            for ll, w in rects.pairs:
                if ll == l:
                    m = np.maximum(m, _line_average(first, v, w, g.h))
        out[i] = m
    return out


def kakeya_maximal(f, dirs: DirectionSet, rects: RectFamily) -> Field:
    return _wrap(f, direction_maxima(f, dirs, rects).max(axis=0))


# -- strip projections and the weighted inequality ----------------------------------

def _check_strips(strips):
    s = sorted((float(a), float(b)) for a, b in strips)
    w = [b - a for a, b in s]
    if any(x <= 0 for x in w):
        raise InputError("strips must have positive width")
    if max(w) - min(w) > 1e-12 * max(1.0, max(w)):
        raise InputError("strips must have equal width")
    for (a0, b0), (a1, b1) in zip(s, s[1:]):
        if a1 < b0 - 1e-12:
            raise InputError(f"strips [{a0},{b0}) and [{a1},{b1}) overlap")
    return s


def strip_projections(f: Field, strips, axis: int = 0):
    strips = _check_strips(strips)
    out = []
    for a, b in strips:
        def m(x1, x2, a=a, b=b):
            x = x1 if axis == 0 else x2
            return ((x >= a) & (x < b)).astype(float)
        out.append(apply_multiplier(f, m))
    return out


def strip_projection_sum(f: Field, strips, axis: int = 0) -> Field:
    """(sum_n |T_n f|^2)^(1/2) for frequency strips along ``axis``."""
    acc = np.zeros(f.values.shape)
    for p in strip_projections(f, strips, axis):
        acc += np.abs(p.values) ** 2
    return Field(f.grid, np.sqrt(acc), PHYSICAL)


def tiling_strips(grid: GridSpec, width: float):
    """Half-open strips of the given width tiling the frequency lattice."""
    lo = grid.xi[0] - grid.dxi / 2
    n = int(np.ceil((grid.xi[-1] + grid.dxi / 2 - lo) / width - 1e-9))
    return [(lo + k * width, lo + (k + 1) * width) for k in range(n)]


def weighted_lp_check(f: Field, w, strips, s: float, axis: int = 0):
    """(int sum |T_n f|^2 w, int |f|^2 (M_strong(w^s))^(1/s), ratio)."""
    if not s > 1:
        raise ParameterError(f"power s must exceed 1, got {s}")
    wa = _mod(w)
    if np.any(np.asarray(w.values if isinstance(w, Field) else w).real < 0):
        raise InputError("weight must be nonnegative")
    h2 = f.grid.h ** 2
    sq = strip_projection_sum(f, strips, axis).values.real ** 2
    lhs = h2 * float(np.sum(sq * wa))
    mw = _strong(wa ** s) ** (1.0 / s)
    rhs = h2 * float(np.sum(np.abs(f.values) ** 2 * mw))
    ratio = lhs / rhs if rhs > 0 else 0.0
    return lhs, rhs, ratio


# -- Kakeya growth study --------------------------------------------------------------

def disk_field(grid: GridSpec, radius: float, center=(0.0, 0.0)) -> Field:
    X1, X2 = grid.x_mesh()
    return Field(grid, (np.hypot(X1 - center[0], X2 - center[1]) <= radius).astype(float), PHYSICAL)


def tube_union(grid: GridSpec, dirs: DirectionSet, half_width: float, half_length: float) -> Field:
    X1, X2 = grid.x_mesh()
    a = np.zeros(X1.shape)
    for u in dirs.vectors:
        along = X1 * u[0] + X2 * u[1]
        across = -X1 * u[1] + X2 * u[0]
        a = np.maximum(a, ((np.abs(along) <= half_length) & (np.abs(across) <= half_width)).astype(float))
    return Field(grid, a, PHYSICAL)


def kakeya_norm_sweep(grid: GridSpec, ns: Sequence[int], fields: Iterable[Field] = None,
                      rects: RectFamily = None):
    """max over test fields of ||M_N f||_2 / ||f||_2 for each N in ``ns``.

    Direction sets are nested (angles pi k / N), so per-direction maxima are
    computed once for the largest N and reused for the subsets.
    """
    ns = sorted(ns)
    big = ns[-1]
    if any(big % n for n in ns):
        raise InputError("direction counts must divide the largest one")
    rects = rects or RectFamily.dyadic(grid)
    dirs = DirectionSet.uniform(big)
    if fields is None:
        fields = default_kakeya_fields(grid, ns)
    out = {n: 0.0 for n in ns}
    for f in fields:
        dm = direction_maxima(f, dirs, rects)
        nf = lp_norm_array(f.values, grid, 2)
        for n in ns:
            sub = dm[:: big // n].max(axis=0)
            out[n] = max(out[n], lp_norm_array(sub, grid, 2) / nf)
    return out


def default_kakeya_fields(grid: GridSpec, ns):
    """A small disk and, for each N, the union of N thin tubes through 0."""
    fs = [disk_field(grid, 1.5 * grid.h)]
    for n in ns:
        fs.append(tube_union(grid, DirectionSet.uniform(n), grid.h / 2, grid.half_width / 2))
    return fs


# -- weighted strip sweep -------------------------------------------------------------

def random_weight(grid: GridSpec, rng) -> Field:
    """Nonnegative bump (1 - r)_+^2 on a random axis-parallel ellipse with a
    random height; compactly supported inside the torus."""
    X1, X2 = grid.x_mesh()
    L = grid.half_width
    c = rng.uniform(-L / 2, L / 2, 2)
    a = rng.uniform(0.04 * L, 0.4 * L, 2)
    r = np.hypot((X1 - c[0]) / a[0], (X2 - c[1]) / a[1])
    return Field(grid, np.clip(1.0 - r, 0.0, None) ** 2 * rng.uniform(0.5, 2.0), PHYSICAL)


def weighted_strip_sweep(grid: GridSpec, widths: Sequence[float], n_pairs: int = 20, s: float = 2.0,
                         band=(0.1, 3.0), seed: int = 0, axis: int = 0):
    """Ratios of weighted_lp_check over seeded (f, w) pairs, per strip width.

    The same pairs are reused for every width.
    """
    from .field import annulus, random_bandlimited
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        f = random_bandlimited(grid, int(rng.integers(1 << 30)), annulus(*band))
        pairs.append((f, random_weight(grid, rng)))
    return {w: [weighted_lp_check(f, wt, tiling_strips(grid, w), s, axis)[2] for f, wt in pairs]
            for w in widths}
