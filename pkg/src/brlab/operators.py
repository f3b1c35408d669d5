"""Operators: rescaled multipliers and their maximal versions, square
functions over dilations, cone operators, the subordination identity and
checks of kernel decay and box-average domination."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from . import _kernels
from .curve import Curve
from .errors import (DomainError, DominationFailure, InputError, ParameterError,
                     QuadratureError, ResolutionError, SupportError)
from .field import (Field, GridSpec, PHYSICAL, _analyse, _synthesise, apply_multiplier,
                    lp_norm_array)
from .maximal import box_average_fourier, hl_maximal
from .symbols import (GL_T, GL_W, BumpProfile, ConeWindow, Symbol, collar_symbol,
                      curve_c0, gauge_power_symbol, partition_pieces, phi_lambda_theta, plateau)


# -- support bookkeeping -------------------------------------------------------------

def symbol_radii(sym: Symbol):
    """(r1, r2) with the symbol supported in r1 <= |xi| <= r2."""
    p = sym.params
    s = p.get("scale", 1.0)
    if "radii" in p:
        r1, r2 = p["radii"]
    elif "box" in p:
        (a0, a1), (b0, b1) = p["box"]
        d1 = 0.0 if a0 <= 0 <= a1 else min(abs(a0), abs(a1))
        d2 = 0.0 if b0 <= 0 <= b1 else min(abs(b0), abs(b1))
        r1 = math.hypot(d1, d2)
        r2 = math.hypot(max(abs(a0), abs(a1)), max(abs(b0), abs(b1)))
    else:
        raise InputError(f"symbol '{sym.kind}' carries no support radii; pass the range explicitly")
    if not r1 > 0:
        raise SupportError("symbol support reaches the origin")
    return r1 / s, r2 / s


def active_mask(F: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    """Lattice nodes where the spectrum is not negligible."""
    a = np.abs(F)
    m = a.max() if a.size else 0.0
    if m == 0:
        return np.zeros(a.shape, bool)
    return a > rel * m


def field_radii(f: Field, rel: float = 1e-13):
    g = f.grid
    F = _analyse(f.values, g)
    m = active_mask(F, rel)
    if not m.any():
        raise DomainError("field has an empty spectrum")
    X1, X2 = g.xi_mesh()
    r = np.hypot(X1[m], X2[m])
    if r.min() == 0:
        r = r[r > 0]
    return float(r.min()), float(r.max())


# -- time quadrature ------------------------------------------------------------------

@dataclass(frozen=True)
class TimeQuadrature:
    """Log-trapezoid rule for dt/t on nodes 2^(m/ppo).

    The requested range is snapped outward to nodes; ``span`` reports it.
    ``residue = (L, k)`` keeps only t in octaves (2^n, 2^(n+1)] with n = k mod L.
    """
    t_min: float
    t_max: float
    ppo: int = 32
    residue: Optional[tuple] = None

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ParameterError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if int(self.ppo) != self.ppo or self.ppo < 1:
            raise ParameterError(f"points per octave must be a positive integer, got {self.ppo}")
        if self.residue is not None:
            L, k = self.residue
            if L < 1 or not 0 <= k < L:
                raise ParameterError(f"bad residue filter {self.residue}")

    @property
    def exponents(self) -> np.ndarray:
        m0 = math.floor(math.log2(self.t_min) * self.ppo + 1e-9)
        m1 = math.ceil(math.log2(self.t_max) * self.ppo - 1e-9)
        return np.arange(m0, max(m1, m0 + 1) + 1)

    @property
    def nodes(self) -> np.ndarray:
        return 2.0 ** (self.exponents / self.ppo)

    @property
    def span(self):
        t = self.nodes
        return float(t[0]), float(t[-1])

    @property
    def octave(self) -> np.ndarray:
        """n with t in (2^n, 2^(n+1)]."""
        m = self.exponents
        return -((-m) // self.ppo) - 1

    @property
    def base_weights(self) -> np.ndarray:
        w = np.full(self.exponents.size, math.log(2.0) / self.ppo)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def weights(self) -> np.ndarray:
        w = self.base_weights
        if self.residue is None:
            return w
        L, k = self.residue
        return np.where(self.octave % L == k, w, 0.0)

    def restricted(self, L: int, k: int) -> "TimeQuadrature":
        return replace(self, residue=(L, k))

    def refined(self) -> "TimeQuadrature":
        return replace(self, ppo=2 * self.ppo)

    @classmethod
    def covering(cls, sym_radii, f_radii, ppo: int = 32) -> "TimeQuadrature":
        """Nodes covering every t with sym(t xi) != 0 for xi in the field's band."""
        (r1, r2), (p1, p2) = sym_radii, f_radii
        return cls(r1 / p2, r2 / p1, ppo)


def collar_ppo(sym: Symbol, base: int = 32) -> int:
    """Thin collars need about base / delta nodes per octave to resolve a crossing."""
    d = sym.params.get("delta")
    return base if d is None else max(base, int(math.ceil(base / d)))


def quadrature_for(sym: Symbol, f: Field, ppo: Optional[int] = None) -> TimeQuadrature:
    return TimeQuadrature.covering(symbol_radii(sym), field_radii(f),
                                   ppo if ppo is not None else collar_ppo(sym))


# -- square functions -----------------------------------------------------------------

class SquarePlan:
    """Nonzero (time, node, symbol value) triples for a fixed node set.

    Each (symbol, t) pair is a block; g^2 is the inverse transform of the
    within-block difference-frequency products, so a plan built once is
    reused for every field supported on the same nodes.
    """

    def __init__(self, grid: GridSpec, symbols: Sequence[Symbol], quad: TimeQuadrature,
                 nodes: np.ndarray, chunk_size: int = 2_000_000):
        self.grid = grid
        self.quad = quad
        self.mask = np.asarray(nodes, bool)
        k1, k2 = np.nonzero(self.mask)
        self.k1, self.k2 = k1, k2
        xi1, xi2 = grid.xi[k1], grid.xi[k2]
        t_all, w_all = quad.nodes, quad.weights
        keep = w_all > 0
        if not keep.any():
            raise QuadratureError("time quadrature has no positive weight")
        t, w = t_all[keep], w_all[keep]
        nt = t.size
        blk, col, val = [], [], []
        step = max(1, chunk_size // max(k1.size, 1))
        for p, s in enumerate(symbols):
            for c0 in range(0, nt, step):
                tc = t[c0:c0 + step, None]
                a, b = tc * xi1[None, :], tc * xi2[None, :]
                r, c = np.nonzero(s.support(a, b))
                if r.size == 0:
                    continue
                v = np.asarray(s.func(a[r, c], b[r, c]), complex)
                nz = v != 0
                r, c, v = r[nz], c[nz], v[nz]
                blk.append(p * nt + c0 + r)
                col.append(c)
                val.append(v * np.sqrt(w[c0 + r]))
        if blk:
            blk = np.concatenate(blk)
            order = np.argsort(blk, kind="stable")
            blk = blk[order]
            self.col = np.concatenate(col)[order]
            self.val = np.concatenate(val)[order]
            starts = np.flatnonzero(np.r_[True, blk[1:] != blk[:-1]])
            self.offsets = np.r_[starts, blk.size].astype(np.int64)
        else:
            self.col = np.zeros(0, np.int64)
            self.val = np.zeros(0, complex)
            self.offsets = np.zeros(1, np.int64)
        # integral of |sym(t xi)|^2 dt/t per node, by the same quadrature
        self.node_weight = np.bincount(self.col, np.abs(self.val) ** 2, minlength=k1.size)

    @property
    def n_blocks(self) -> int:
        return self.offsets.size - 1

    @property
    def pair_count(self) -> int:
        return int(np.sum(np.diff(self.offsets) ** 2))

    def _coeffs(self, f: Field) -> np.ndarray:
        if f.grid != self.grid:
            raise InputError("field and plan use different grids")
        F = _analyse(f.values, self.grid)
        a = np.abs(F)
        outside = a[~self.mask].max() if (~self.mask).any() else 0.0
        if outside > 1e-10 * max(a.max(), 1e-300):
            raise InputError("field has spectrum outside the plan's node set")
        return F[self.k1, self.k2]

    def squared(self, f: Field) -> np.ndarray:
        g = self.grid
        fa = self._coeffs(f)
        v = self.val * fa[self.col]
        D = np.zeros((g.n, g.n), complex)
        _kernels.accumulate_pairs(self.offsets, self.k1[self.col], self.k2[self.col], v, g.n, D)
        D = np.roll(D, (g.n // 2, g.n // 2), axis=(0, 1))
        return np.maximum(g.dxi ** 2 * _synthesise(D, g).real, 0.0)

    def apply(self, f: Field) -> Field:
        return Field(self.grid, np.sqrt(self.squared(f)), PHYSICAL)

    def l2_squared_frequency(self, f: Field) -> float:
        """||g(f)||_2^2 from the frequency side: sum dxi^2 |f^|^2 int |sym(t xi)|^2 dt/t."""
        fa = self._coeffs(f)
        return float(self.grid.dxi ** 2 * np.sum(self.node_weight * np.abs(fa) ** 2))


def _square_dense(f: Field, symbols, quad: TimeQuadrature, mask) -> np.ndarray:
    g = f.grid
    F = _analyse(f.values, g)
    X1, X2 = g.xi_mesh()
    x1, x2 = X1[mask], X2[mask]
    Fm = F[mask]
    acc = np.zeros((g.n, g.n))
    buf = np.zeros((g.n, g.n), complex)
    for s in symbols:
        for t, w in zip(quad.nodes, quad.weights):
            if w == 0:
                continue
            sup = s.support(t * x1, t * x2)
            if not sup.any():
                continue
            m = np.zeros(x1.shape, complex)
            m[sup] = s.func(t * x1[sup], t * x2[sup])
            buf[:] = 0
            buf[mask] = m * Fm
            acc += w * np.abs(_synthesise(buf, g)) ** 2
    return acc


def square_squared(f: Field, symbols, quad: TimeQuadrature, method: str = "auto") -> np.ndarray:
    """sum over symbols of int |F^-1(sym(t .) f^)|^2 dt/t, by quadrature."""
    if isinstance(symbols, Symbol):
        symbols = [symbols]
    if not (quad.weights > 0).any():
        raise QuadratureError("time quadrature has no positive weight")
    g = f.grid
    mask = active_mask(_analyse(f.values, g))
    if not mask.any():
        return np.zeros((g.n, g.n))
    if method == "dense":
        return _square_dense(f, symbols, quad, mask)
    plan = SquarePlan(g, symbols, quad, mask)
    if method == "auto" and plan.pair_count > 4 * plan.n_blocks * g.n * g.n:
        return _square_dense(f, symbols, quad, mask)
    if method not in ("auto", "sparse"):
        raise ParameterError(f"unknown method {method!r}")
    return plan.squared(f)


def square_function(f: Field, sym: Symbol, quad: TimeQuadrature, method: str = "auto") -> Field:
    return Field(f.grid, np.sqrt(square_squared(f, [sym], quad, method)), PHYSICAL)


def v_function(f: Field, pieces: Sequence[Symbol], quad: TimeQuadrature, method: str = "auto") -> Field:
    """(int sum_l |F^-1(piece_l(t .) f^)|^2 dt/t)^(1/2)."""
    if not pieces:
        raise InputError("no pieces")
    return Field(f.grid, np.sqrt(square_squared(f, list(pieces), quad, method)), PHYSICAL)


# -- one-dimensional oracle ------------------------------------------------------------

def ray_integral(sym: Symbol, xi, t_lo: float, t_hi: float, panels: int = 8) -> float:
    """int_{t_lo}^{t_hi} |sym(t xi)|^2 dt/t, composite 64-point Gauss-Legendre in log t."""
    u = np.linspace(math.log(t_lo), math.log(t_hi), panels + 1)
    du = np.diff(u)
    nodes = (u[:-1, None] + du[:, None] * GL_T[None, :]).ravel()
    w = (du[:, None] * GL_W[None, :]).ravel()
    t = np.exp(nodes)
    v = np.asarray(sym(t * xi[0], t * xi[1]))
    return float(np.sum(w * np.abs(v) ** 2))


def collar_crossing(curve: Curve, sym: Symbol, xi):
    """t-interval where t xi lies in the collar 0 <= t xi2 - psi(t xi1) <= c_star delta.

    None if the ray misses the curve.
    """
    xi1, xi2 = float(xi[0]), float(xi[1])
    ok, _ = curve.in_cone(np.array([xi1]), np.array([xi2]))
    if not ok[0]:
        return None
    d = sym.params["delta"] * sym.params["c_star"]
    t0 = 1.0 / float(curve.rho(xi1, xi2))
    lo, hi = curve.interval

    def gap(t, target):
        return t * xi2 - curve.psi(np.clip(t * xi1, lo, hi)) - target
    slope = xi2 - xi1 * float(curve.dpsi(t0 * xi1))
    direction = 1.0 if slope > 0 else -1.0
    step = 1e-3
    for _ in range(80):
        t1 = t0 * (1 + direction * step)
        if gap(t1, d) * gap(t0, d) <= 0:
            break
        step *= 2
    else:
        return None
    t1 = optimize.brentq(gap, min(t0, t1), max(t0, t1), args=(d,), xtol=1e-15, rtol=1e-15)
    return (min(t0, t1), max(t0, t1))


def collar_node_integral(curve: Curve, sym: Symbol, xi, panels: int = 4) -> float:
    iv = collar_crossing(curve, sym, xi)
    if iv is None:
        return 0.0
    return ray_integral(sym, xi, iv[0], iv[1], panels)


def collar_node_integrals(curve: Curve, sym: Symbol, grid: GridSpec, mask=None) -> np.ndarray:
    """Exact per-node integrals over the lattice nodes in ``mask`` (default:
    nodes of the symbol's window box)."""
    X1, X2 = grid.xi_mesh()
    if mask is None:
        (a0, a1), (b0, b1) = sym.params["box"]
        mask = np.zeros(X1.shape, bool)
        for t in (0.5, 1.0, 2.0):
            mask |= (t * X1 >= a0) & (t * X1 <= a1) & (t * X2 >= b0) & (t * X2 <= b1)
    out = np.zeros(X1.shape)
    for i, j in zip(*np.nonzero(mask)):
        out[i, j] = collar_node_integral(curve, sym, (X1[i, j], X2[i, j]))
    return out


# -- partial sums and maximal operators -----------------------------------------------

@dataclass(frozen=True)
class RGrid:
    """R values r_min q^j, j = 0..J."""
    r_min: float
    q: float
    J: int = 64

    def __post_init__(self):
        if not self.r_min > 0:
            raise ParameterError("r_min must be positive")
        if not self.q > 1:
            raise ParameterError(f"ratio q must exceed 1, got {self.q}")
        if self.J < 0:
            raise ParameterError("J must be nonnegative")

    @property
    def values(self) -> np.ndarray:
        return self.r_min * self.q ** np.arange(self.J + 1)

    def refined(self) -> "RGrid":
        """Twice the density; contains every value of this grid."""
        return RGrid(self.r_min, math.sqrt(self.q), 2 * self.J)

    @classmethod
    def covering(cls, sym_radii, f_radii, ppo: int = 64, min_J: int = 64) -> "RGrid":
        (r1, r2), (p1, p2) = sym_radii, f_radii
        lo, hi = p1 / r2, p2 / r1
        q = 2.0 ** (1.0 / ppo)
        J = max(min_J, int(math.ceil(math.log(hi / lo) / math.log(q))))
        return cls(lo, q, J)


@dataclass(frozen=True)
class RGridList:
    """An explicit list of R values."""
    Rs: tuple

    def __init__(self, Rs):
        object.__setattr__(self, "Rs", tuple(float(r) for r in Rs))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.Rs)


def piece_support_field(grid: GridSpec, seed: int, sym: Symbol, t_values) -> Field:
    """Random band-limited field with spectrum in the union of the dilated
    supports {xi : sym(t xi) != 0}."""
    from .field import random_bandlimited

    def region(a, b):
        m = np.zeros(np.shape(a), bool)
        for t in t_values:
            m |= sym.support(t * np.asarray(a), t * np.asarray(b))
        return m
    return random_bandlimited(grid, seed, region)


def br_partial(f: Field, sym: Symbol, R: float) -> Field:
    """Multiplier sym(xi / R)."""
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    return apply_multiplier(f, sym.scaled(1.0 / R))


def br_maximal(f: Field, sym: Symbol, grid: RGrid) -> Field:
    """max over R in the grid of |br_partial(f, sym, R)|."""
    Rs = grid.values
    if Rs.size == 0:
        raise InputError("empty R grid")
    g = f.grid
    F = _analyse(f.values, g)
    mask = active_mask(F)
    out = np.zeros((g.n, g.n))
    if not mask.any():
        return Field(g, out, PHYSICAL)
    X1, X2 = g.xi_mesh()
    x1, x2, Fm = X1[mask], X2[mask], F[mask]
    buf = np.zeros((g.n, g.n), complex)
    for R in Rs:
        a, b = x1 / R, x2 / R
        sup = sym.support(a, b)
        if not sup.any():
            continue
        m = np.zeros(x1.shape, complex)
        m[sup] = sym.func(a[sup], b[sup])
        buf[:] = 0
        buf[mask] = m * Fm
        out = np.maximum(out, np.abs(_synthesise(buf, g)))
    return Field(g, out, PHYSICAL)


def vector_valued_norms(fs: Sequence[Field], sym: Symbol, Rs: Sequence[float], p: float):
    """(||(sum |S_{R_l} f_l|^2)^(1/2)||_p, ||(sum |f_l|^2)^(1/2)||_p)."""
    if len(fs) != len(Rs):
        raise InputError(f"{len(fs)} fields but {len(Rs)} radii")
    if not fs:
        raise InputError("empty input")
    if not 4.0 / 3.0 - 1e-12 <= p <= 4.0 + 1e-12:
        raise DomainError(f"p must lie in [4/3, 4], got {p}")
    g = fs[0].grid
    s_out = np.zeros((g.n, g.n))
    s_in = np.zeros((g.n, g.n))
    for f, R in zip(fs, Rs):
        s_out += np.abs(br_partial(f, sym, R).values) ** 2
        s_in += np.abs(f.values) ** 2
    return lp_norm_array(np.sqrt(s_out), g, p), lp_norm_array(np.sqrt(s_in), g, p)


# -- cone operators -------------------------------------------------------------------

def cone_symbol(curve: Curve, window, lam: float, side: str) -> Symbol:
    return gauge_power_symbol(curve, window, lam, side)


def cone_partial_inside(f: Field, window, curve: Curve, lam: float, R: float) -> Field:
    """b(xi/R) (1 - rho(xi)/R)_+^lam."""
    return br_partial(f, cone_symbol(curve, window, lam, "inside"), R)


def cone_partial_outside(f: Field, window, curve: Curve, lam: float, R: float) -> Field:
    """b(xi/R) (rho(xi)/R - 1)_+^lam."""
    return br_partial(f, cone_symbol(curve, window, lam, "outside"), R)


def outer_dilation(curve: Curve, window: ConeWindow) -> float:
    """d0 = c0 r2; the outside operator vanishes when d0 < 1."""
    return curve_c0(curve) * window.radii()[1]


def subordination_windows(curve: Curve, side: str):
    """(b, b~) with b~ = 1 wherever the s-integral evaluates it."""
    if side == "inside":
        b = ConeWindow(curve, curve.I1, curve.I2, (0.75, 1.15), (0.6, 1.3))
        bt = ConeWindow(curve, curve.I2, curve.I3, (0.55, 1.05), (0.45, 1.2))
    elif side == "outside":
        b = ConeWindow(curve, curve.I1, curve.I2, (0.85, 1.25), (0.7, 1.4))
        bt = ConeWindow(curve, curve.I2, curve.I3, (0.95, 1.45), (0.8, 1.6))
    else:
        raise ParameterError(f"side must be 'inside' or 'outside', got {side!r}")
    return b, bt


def subordination_constant(delta: float, beta: float) -> float:
    """Gamma(delta + beta + 1) / (Gamma(delta + 1) Gamma(beta))."""
    return float(special.gamma(delta + beta + 1) / (special.gamma(delta + 1) * special.gamma(beta)))


def schwarz_factor(delta: float, beta: float, side: str, d0: float = None) -> float:
    """Square root of int (1-s)^(2beta-2) s^(2delta) ds on (0,1), or of
    int (s-1)^(2beta-2) s^(2delta) ds on (1, d0) for the outside case."""
    if side == "inside":
        return math.sqrt(special.beta(2 * delta + 1, 2 * beta - 1))
    val, _ = integrate.quad(lambda s: s ** (2 * delta), 1.0, d0, weight="alg",
                            wvar=(2 * beta - 2, 0.0))
    return math.sqrt(val)


# first-order convergence with a margin for the pseudo-random jump errors
HALVING_MIN = 1.75


@dataclass
class SubordinationReport:
    delta: float
    beta: float
    side: str
    R: float
    constant: float
    panels: int
    residual: float          # max relative residual over probes and fields
    residual_fine: float     # same with twice the panels
    rms: float               # root-mean-square relative residual
    rms_fine: float
    halving_ratio: float     # rms / rms_fine
    schwarz_slack: float
    d0: float
    n_probes: int
    n_fields: int

    @property
    def passed(self) -> bool:
        return (self.residual < 1e-3 and self.halving_ratio >= HALVING_MIN
                and self.schwarz_slack >= -1e-9)


def subordination_check(fields: Sequence[Field], curve: Curve, delta: float, beta: float,
                        R: float = 1.0, side: str = "inside", windows=None,
                        panels: int = 4096, n_probes: int = 64, seed: int = 0) -> SubordinationReport:
    """Compare the cone operator of order delta + beta with its s-integral of
    order-delta operators at random probe nodes, by a product-midpoint rule with
    exact (R - s)^(beta - 1) panel weights; also test the Schwarz bound."""
    if not beta > 0.5:
        raise ParameterError(f"beta must exceed 1/2, got {beta}")
    if not delta > -0.5:
        raise ParameterError(f"delta must exceed -1/2, got {delta}")
    if not fields:
        raise InputError("no fields")
    b, bt = windows if windows is not None else subordination_windows(curve, side)
    g = fields[0].grid
    lam = delta + beta
    C = subordination_constant(delta, beta)
    sg = 1.0 if side == "outside" else -1.0
    X1, X2 = g.xi_mesh()
    bR = b(X1 / R, X2 / R)
    mask = bR != 0
    xi1, xi2, bv = X1[mask], X2[mask], bR[mask]
    rho, q = curve.gauge(xi1, xi2, strict=True)
    chi_q = plateau(bt.q_inner, bt.q_outer)(q)
    chi_r = plateau(bt.rho_inner, bt.rho_outer)
    d0 = outer_dilation(curve, b)

    rng = np.random.default_rng(seed)
    pick = rng.choice(g.n * g.n, size=n_probes, replace=False)
    xp1, xp2 = g.x[pick // g.n], g.x[pick % g.n]
    E = np.exp(2j * np.pi * (np.outer(xi1, xp1) + np.outer(xi2, xp2))) * g.dxi ** 2

    def panels_for(n):
        if side == "inside":
            e = np.linspace(0.0, R, n + 1)
            W = ((R - e[:-1]) ** beta - (R - e[1:]) ** beta) / beta
        else:
            if d0 <= 1:
                return np.zeros(0), np.zeros(0), 0.0
            e = np.linspace(R, d0 * R, n + 1)
            W = ((e[1:] - R) ** beta - (e[:-1] - R) ** beta) / beta
        return 0.5 * (e[:-1] + e[1:]), W, e[1] - e[0]

    def lower_order(s):
        # per panel: b~(xi/s) (+-(rho/s - 1))_+^delta, rows = panels
        r = rho[None, :] / s[:, None]
        return chi_q[None, :] * chi_r(r) * phi_lambda_theta(sg * (r - 1.0), delta)

    lhs_m = bv * phi_lambda_theta(sg * (rho / R - 1.0), lam)
    s_c, W_c, ds_c = panels_for(panels)
    s_f, W_f, _ = panels_for(2 * panels)
    T_c = lower_order(s_c)
    eff_c = C * R ** (-lam) * bv * ((W_c * s_c ** delta) @ T_c)
    eff_f = C * R ** (-lam) * bv * ((W_f * s_f ** delta) @ lower_order(s_f))
    sf = schwarz_factor(delta, beta, side, d0) if s_c.size else 0.0

    res_c = res_f = 0.0
    ss_c = ss_f = ss_l = 0.0
    slack = np.inf
    for f in fields:
        F = _analyse(f.values, g)[mask]
        lhs = (F * lhs_m) @ E
        scale = max(np.abs(lhs).max(), 1e-300)
        e_c = np.abs(lhs - (F * eff_c) @ E)
        e_f = np.abs(lhs - (F * eff_f) @ E)
        res_c = max(res_c, float(e_c.max() / scale))
        res_f = max(res_f, float(e_f.max() / scale))
        ss_c += float(np.sum(e_c ** 2))
        ss_f += float(np.sum(e_f ** 2))
        ss_l += float(np.sum(np.abs(lhs) ** 2))
        if s_c.size:
            U = ((T_c * (F * bv)[None, :]) @ E)
            ms = np.sum(np.abs(U) ** 2, axis=0) * ds_c / R
            rhs = C * sf * np.sqrt(ms)
            slack = min(slack, float(np.min(rhs - np.abs(lhs)) / scale))
        else:
            slack = min(slack, float(-np.abs(lhs).max() / scale) if np.abs(lhs).max() > 0 else 0.0)
    if res_f > 1e-12 and res_f > 2 * res_c:
        raise QuadratureError(f"s-quadrature diverges: residual {res_c:.3g} -> {res_f:.3g}")
    rms_c = math.sqrt(ss_c / ss_l) if ss_l > 0 else 0.0
    rms_f = math.sqrt(ss_f / ss_l) if ss_l > 0 else 0.0
    ratio = rms_c / rms_f if rms_f > 0 else float("inf")
    return SubordinationReport(delta, beta, side, R, C, panels, res_c, res_f, rms_c, rms_f,
                               ratio, slack, d0, n_probes, len(fields))


# -- maximal domination -----------------------------------------------------------------

def domination_split(lam: float):
    """(delta, beta) with delta + beta = lam, beta > 1/2, delta > -1/2."""
    if lam > 0.25:
        beta = 0.75
    else:
        beta = lam + 0.3
    return lam - beta, beta


@dataclass
class DominationResult:
    lam: float
    delta: float
    beta: float
    side: str
    sup_ratio: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)


def maximal_domination_check(f: Field, curve: Curve, lam: float, side: str = "inside",
                             windows=None, rgrid: RGrid = None, quad: TimeQuadrature = None,
                             split=None) -> DominationResult:
    """Pointwise ratio of sup_R |cone operator| to the maximal function of the
    order-delta square function."""
    delta, beta = split if split is not None else domination_split(lam)
    b, bt = windows if windows is not None else subordination_windows(curve, side)
    g = f.grid
    F = _analyse(f.values, g)
    if not active_mask(F).any():
        z = np.zeros((g.n, g.n))
        return DominationResult(lam, delta, beta, side, 0.0, z, z, z)
    top = gauge_power_symbol(curve, b, lam, side)
    low = gauge_power_symbol(curve, bt, delta, side)
    fr = field_radii(f)
    rgrid = rgrid or RGrid.covering(symbol_radii(top), fr)
    quad = quad or TimeQuadrature.covering(symbol_radii(low), fr, 32)
    lhs = br_maximal(f, top, rgrid).values.real
    gsq = square_function(f, low, quad)
    rhs = hl_maximal(gsq).values.real
    scale = max(lhs.max(), 1e-300)
    pos = rhs > 1e-13 * max(rhs.max(), 1e-300)
    bad = (~pos) & (lhs > 1e-9 * scale)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DominationFailure(f"maximal operator positive where the square function vanishes "
                                f"at x=({g.x[i]}, {g.x[j]})")
    ratio = np.where(pos, lhs / np.where(pos, rhs, 1.0), 0.0)
    return DominationResult(lam, delta, beta, side, float(ratio.max()), lhs, rhs, ratio)


# -- kernels of the partition pieces ----------------------------------------------------

def frame(curve: Curve, decomp, l: int):
    """(t_l, n_l): unit tangent at a_(l-1) and the unit normal."""
    s = float(curve.dpsi(decomp.a[l - 1]))
    nrm = math.hypot(1.0, s)
    return np.array([1.0, s]) / nrm, np.array([-s, 1.0]) / nrm


def kernel_grid(delta: float, t: float = 1.0, c_star: float = 0.125) -> GridSpec:
    """Torus wide enough for the slow normal decay, fine enough for delta^(1/2)
    wide demodulated spectra."""
    half = 4.0 * t / (c_star * delta)
    n = 1 << int(math.ceil(math.log2(256.0 / math.sqrt(delta))))
    return GridSpec(half, n)


def _piece(decomp, curve, collar, l):
    pieces = partition_pieces(decomp, collar)
    if l not in pieces.zeta:
        raise InputError(f"no piece with index {l}")
    return pieces.zeta[l]


def kernel_field(decomp, curve: Curve, collar: Symbol, l: int, t: float,
                 grid: GridSpec = None, demodulate: bool = True) -> Field:
    """Inverse transform of piece_l(t xi) on a grid.

    With ``demodulate`` the spectrum is shifted by a lattice vector near its
    centre first, so the returned values equal the kernel times a unimodular
    factor (|K| is exact at the nodes).
    """
    delta = decomp.delta
    grid = grid or kernel_grid(delta, t, collar.params.get("c_star", 0.125))
    need = int(math.ceil(64.0 / math.sqrt(delta)))
    if grid.n < need:
        raise ResolutionError(f"kernel grid needs N_g >= {need}, got {grid.n}")
    sym = _piece(decomp, curve, collar, l).scaled(t)
    X1, X2 = grid.xi_mesh()
    if demodulate:
        c = decomp.a[l - 1]
        c1 = round(c / t / grid.dxi) * grid.dxi
        c2 = round(float(curve.psi(c)) / t / grid.dxi) * grid.dxi
        A, B = X1 + c1, X2 + c2
    else:
        A, B = X1, X2
    m = np.zeros(X1.shape, complex)
    sup = sym.support(A, B)
    m[sup] = sym.func(A[sup], B[sup])
    if demodulate and (np.abs(m[0, :]).max() > 0 or np.abs(m[:, 0]).max() > 0):
        raise ResolutionError("demodulated spectrum reaches the lattice edge; enlarge N_g")
    return Field(grid, _synthesise(m, grid), PHYSICAL)


def kernel_values(decomp, curve: Curve, collar: Symbol, l: int, t: float, x1, x2,
                  panels: int = 8, order: int = 64) -> np.ndarray:
    """K_{l,t} at arbitrary points by direct quadrature in sheared coordinates
    (xi1, r) with xi2 = psi(xi1) + r; no periodization."""
    piece = _piece(decomp, curve, collar, l)
    lo, hi = piece.params["lo"], piece.params["hi"]
    thick = collar.params["delta"] * collar.params["c_star"]
    e = np.linspace(lo, hi, panels + 1)
    u = (e[:-1, None] + np.diff(e)[:, None] * GL_T[None, :]).ravel()
    wu = (np.diff(e)[:, None] * GL_W[None, :]).ravel()
    r = thick * GL_T
    wr = thick * GL_W
    U, Rr = np.meshgrid(u, r, indexing="ij")
    A = U
    B = curve.psi(U) + Rr
    m = np.asarray(piece(A, B)) * (wu[:, None] * wr[None, :])
    keep = m != 0
    A, B, m = A[keep], B[keep], m[keep]
    # K_{l,t}(x) = t^-2 K_{l,1}(x / t)
    y1 = np.ravel(x1) / t
    y2 = np.ravel(x2) / t
    out = np.empty(y1.size, complex)
    for s in range(0, y1.size, 64):
        ph = np.outer(y1[s:s + 64], A) + np.outer(y2[s:s + 64], B)
        out[s:s + 64] = np.exp(2j * np.pi * ph) @ m
    return (out / t ** 2).reshape(np.shape(x1))


def piece_index_at(decomp, a_target: float) -> int:
    """Active index l whose left breakpoint a_(l-1) is closest to a_target."""
    act = np.asarray(decomp.active)
    a = np.asarray(decomp.a)[act - 1]
    return int(act[np.argmin(np.abs(a - a_target))])


@dataclass
class KernelDecayReport:
    deltas: tuple
    ts: tuple
    constants: dict          # (alpha, beta) -> fitted C at the coarsest delta
    ratios: dict             # (alpha, beta) -> {delta: measured / fitted}
    l1_norms: dict           # delta -> ||K||_1 at t = 1
    grid_sum: float          # |h^2 sum K| at the coarsest delta, t = 1
    slack: float = 2.0

    @property
    def envelopes_hold(self) -> bool:
        return all(r <= self.slack for d in self.ratios.values() for r in d.values())

    @property
    def l1_spread(self) -> float:
        v = list(self.l1_norms.values())
        return max(v) / min(v)

    @property
    def passed(self) -> bool:
        return self.envelopes_hold and self.l1_spread <= self.slack


def kernel_decay_check(curve: Curve, deltas=(2.0 ** -4, 2.0 ** -6), ts=(1.0, 1.5),
                       pairs=((0, 0), (3, 0), (0, 3)), a_target: Optional[float] = None,
                       n_samples: int = 40, profile: BumpProfile = None,
                       sum_grid: GridSpec = None) -> KernelDecayReport:
    """Fit decay envelopes in rotated, rescaled coordinates at the coarsest
    delta and measure them at the finer ones."""
    from .geometry import build_decomposition
    profile = profile or BumpProfile()
    if a_target is None:
        lo, hi = curve.I1
        a_target = lo + 0.75 * (hi - lo)
    S = np.geomspace(0.25, 8.0, n_samples)
    measured = {}
    l1 = {}
    gsum = None
    for d in deltas:
        dec = build_decomposition(curve, d)
        col = collar_symbol(curve, profile, d)
        l = piece_index_at(dec, a_target)
        tv, nv = frame(curve, dec, l)
        vals = {p: 0.0 for p in pairs}
        for t in ts:
            # along t_l: X = delta^(1/2) x1 / t ; along n_l: Y = delta x2 / t
            xa = S * t / math.sqrt(d)
            xb = S * t / d
            Ka = np.abs(kernel_values(dec, curve, col, l, t, xa * tv[0], xa * tv[1]))
            Kb = np.abs(kernel_values(dec, curve, col, l, t, xb * nv[0], xb * nv[1]))
            K0 = np.abs(kernel_values(dec, curve, col, l, t, np.zeros(1), np.zeros(1)))
            norm = t ** 2 * d ** -1.5
            for (al, be) in pairs:
                cands = []
                if be == 0:
                    cands.append(Ka * norm * S ** al)
                if al == 0:
                    cands.append(Kb * norm * S ** be)
                if al == 0 and be == 0:
                    cands.append(K0 * norm)
                vals[(al, be)] = max(vals[(al, be)], max(float(c.max()) for c in cands))
        measured[d] = vals
        kf = kernel_field(dec, curve, col, l, 1.0)
        l1[d] = lp_norm_array(np.abs(kf.values), kf.grid, 1)
        if gsum is None:
            sg = sum_grid or GridSpec(16.0, max(512, int(2 ** math.ceil(math.log2(64 / math.sqrt(d))))))
            kz = kernel_field(dec, curve, col, l, 1.0, grid=sg, demodulate=False)
            gsum = abs(complex(np.sum(kz.values))) * sg.h ** 2
    d0 = deltas[0]
    consts = {p: measured[d0][p] for p in pairs}
    ratios = {p: {d: measured[d][p] / consts[p] for d in deltas[1:]} for p in pairs}
    return KernelDecayReport(tuple(deltas), tuple(ts), consts, ratios, l1, gsum)


# -- box-average domination ---------------------------------------------------------------

@dataclass
class BoxDominationReport:
    delta: float
    ell: int
    n: int
    nu_max: int
    sup_ratio: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def box_average_domination(f: Field, decomp, curve: Curve, collar: Symbol, l: int, n: int,
                           nu_max: Optional[int] = None, t_samples: int = 16) -> BoxDominationReport:
    """sup over t in [2^n, 2^(n+1)] of |piece_l(t .) f| against
    sum_nu 2^-nu (average of |f| over the rotated box E_{l,n,nu})."""
    d = decomp.delta
    g = f.grid
    piece = _piece(decomp, curve, collar, l)
    base2 = 2.0 ** n / d
    if nu_max is None:
        nu_max = 8
        while nu_max >= 0 and 2.0 ** nu_max * base2 > g.half_width:
            nu_max -= 1
    if nu_max < 0:
        raise ResolutionError(f"torus half-width {g.half_width} is below the smallest box {base2}")
    ts = 2.0 ** (n + np.linspace(0.0, 1.0, t_samples))
    lhs = br_maximal(f, piece, RGridList(1.0 / ts)).values.real
    tv, _ = frame(curve, decomp, l)
    af = Field(g, np.abs(f.values), PHYSICAL)
    rhs = np.zeros((g.n, g.n))
    for nu in range(nu_max + 1):
        hl = (2.0 ** nu * 2.0 ** n / math.sqrt(d), 2.0 ** nu * base2)
        rhs += 2.0 ** -nu * box_average_fourier(af, tv, hl).values.real
    pos = rhs > 1e-12 * max(rhs.max(), 1e-300)
    ratio = np.where(pos, lhs / np.where(pos, rhs, 1.0), 0.0)
    return BoxDominationReport(d, l, n, nu_max, float(ratio.max()), lhs, rhs)
