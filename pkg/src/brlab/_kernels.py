"""Hot loops. Each kernel has a numba version and a numpy fallback.

Set ``BRLAB_PURE_NUMPY=1`` before import to force the numpy paths.
"""
import os

import numpy as np

PURE_NUMPY = os.environ.get("BRLAB_PURE_NUMPY", "0") not in ("", "0", "false", "False")

try:
    if PURE_NUMPY:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# difference-frequency accumulation:
#   D[(ka - kb) mod N] += v_a * conj(v_b)   for every pair inside one block

def _accumulate_pairs_np(offsets, k1, k2, vals, n, D):
    for b in range(len(offsets) - 1):
        s, e = offsets[b], offsets[b + 1]
        if e <= s:
            continue
        v = vals[s:e]
        d1 = (k1[s:e, None] - k1[None, s:e]) % n
        d2 = (k2[s:e, None] - k2[None, s:e]) % n
        np.add.at(D, (d1.ravel(), d2.ravel()), (v[:, None] * np.conj(v[None, :])).ravel())
    return D


# ---------------------------------------------------------------------------
# averages of bilinear samples on the periodic grid at fixed fractional shifts

def _shift_average_np(f, sp, sq):
    n0, n1 = f.shape
    out = np.zeros_like(f)
    for s in range(len(sp)):
        i0 = int(np.floor(sp[s]))
        j0 = int(np.floor(sq[s]))
        a = sp[s] - i0
        b = sq[s] - j0
        r = np.roll(f, (-i0, -j0), axis=(0, 1))
        r1 = np.roll(r, -1, axis=0)
        out += ((1 - a) * (1 - b)) * r + (a * (1 - b)) * r1 \
            + ((1 - a) * b) * np.roll(r, -1, axis=1) + (a * b) * np.roll(r1, -1, axis=1)
    return out / len(sp)


# ---------------------------------------------------------------------------
# vectorised bisection of a monotone polynomial ratio
#   mode 0: t / p(t)     mode 1: p(t) / t

def _ratio_bisect_np(coef, mode, lo, hi, increasing, targets):
    a = np.full(targets.shape, lo)
    b = np.full(targets.shape, hi)
    for _ in range(200):
        m = 0.5 * (a + b)
        if np.all((m == a) | (m == b)):
            break
        p = np.polyval(coef, m)
        r = m / p if mode == 0 else p / m
        go_right = (r < targets) if increasing else (r > targets)
        a = np.where(go_right, m, a)
        b = np.where(go_right, b, m)
    return 0.5 * (a + b)


if HAVE_NUMBA:
    @njit(cache=True)
    def _accumulate_pairs_nb(offsets, k1, k2, vals, n, D):
        for b in range(len(offsets) - 1):
            s = offsets[b]
            e = offsets[b + 1]
            for i in range(s, e):
                vi = vals[i]
                for j in range(s, e):
                    d1 = (k1[i] - k1[j]) % n
                    d2 = (k2[i] - k2[j]) % n
                    D[d1, d2] += vi * np.conj(vals[j])
        return D

    @njit(cache=True)
    def _shift_average_nb(f, sp, sq):
        n0, n1 = f.shape
        out = np.zeros_like(f)
        for s in range(len(sp)):
            i0 = int(np.floor(sp[s]))
            j0 = int(np.floor(sq[s]))
            a = sp[s] - i0
            b = sq[s] - j0
            w00 = (1 - a) * (1 - b)
            w10 = a * (1 - b)
            w01 = (1 - a) * b
            w11 = a * b
            for i in range(n0):
                ia = (i + i0) % n0
                ib = (ia + 1) % n0
                for j in range(n1):
                    ja = (j + j0) % n1
                    jb = (ja + 1) % n1
                    out[i, j] += w00 * f[ia, ja] + w10 * f[ib, ja] + w01 * f[ia, jb] + w11 * f[ib, jb]
        return out / len(sp)

    @njit(cache=True)
    def _polyval_nb(c, t):
        acc = 0.0
        for k in range(len(c)):
            acc = acc * t + c[k]
        return acc

    @njit(cache=True)
    def _ratio_bisect_nb(coef, mode, lo, hi, increasing, targets):
        out = np.empty_like(targets)
        for i in range(targets.size):
            a = lo
            b = hi
            for _ in range(200):
                m = 0.5 * (a + b)
                if m == a or m == b:
                    break
                p = _polyval_nb(coef, m)
                r = m / p if mode == 0 else p / m
                if (r < targets[i]) == increasing:
                    a = m
                else:
                    b = m
            out[i] = 0.5 * (a + b)
        return out


def accumulate_pairs(offsets, k1, k2, vals, n, D):
    """Add within-block pair products into the wrapped difference lattice D."""
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    k1 = np.ascontiguousarray(k1, dtype=np.int64)
    k2 = np.ascontiguousarray(k2, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=np.complex128)
    if HAVE_NUMBA:
        return _accumulate_pairs_nb(offsets, k1, k2, vals, int(n), D)
    return _accumulate_pairs_np(offsets, k1, k2, vals, int(n), D)


def shift_average(f, sp, sq):
    """Mean over s of the bilinear periodic sample f(i + sp[s], j + sq[s])."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    sp = np.ascontiguousarray(sp, dtype=np.float64)
    sq = np.ascontiguousarray(sq, dtype=np.float64)
    if HAVE_NUMBA:
        return _shift_average_nb(f, sp, sq)
    return _shift_average_np(f, sp, sq)


def ratio_bisect(coef, mode, lo, hi, increasing, targets):
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    t = np.ascontiguousarray(np.ravel(targets), dtype=np.float64)
    if HAVE_NUMBA:
        out = _ratio_bisect_nb(coef, int(mode), float(lo), float(hi), bool(increasing), t)
    else:
        out = _ratio_bisect_np(coef, int(mode), float(lo), float(hi), bool(increasing), t)
    return out.reshape(np.shape(targets))
