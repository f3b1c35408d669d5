"""Frequency-domain multipliers with declared supports.

Every symbol is a callable ``(xi1, xi2) -> array`` that also carries a
``support`` predicate: a boolean mask of where it may be nonzero.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .curve import Curve
from .errors import DegenerateInputError, DomainError, ParameterError, SupportError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
GL_T = 0.5 * (_GL_NODES + 1.0)
GL_W = 0.5 * _GL_WEIGHTS


# -- one-dimensional profiles -------------------------------------------------

def _bump01(s):
    """exp(1 - 1/(1 - s^2)) on (-1, 1), zero elsewhere; equals 1 at 0."""
    s = np.asarray(s, float)
    out = np.zeros(s.shape)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def _bump01_derivs(s):
    """Values and first three derivatives of the unit bump."""
    s = np.asarray(s, float)
    out = np.zeros((4,) + s.shape)
    m = np.abs(s) < 1
    x = s[m]
    q = 1.0 - x * x
    g1 = -2 * x / q ** 2
    g2 = -2 * (1 + 3 * x * x) / q ** 3
    g3 = -24 * x * (1 + x * x) / q ** 4
    b = np.exp(1.0 - 1.0 / q)
    out[0][m] = b
    out[1][m] = g1 * b
    out[2][m] = (g2 + g1 ** 2) * b
    out[3][m] = (g3 + 3 * g1 * g2 + g1 ** 3) * b
    return out


def smooth_bump(center: float, radius: float) -> Callable:
    if not radius > 0:
        raise DomainError(f"bump radius must be positive, got {radius}")
    return lambda x: _bump01((np.asarray(x, float) - center) / radius)


def smooth_step(edge0: float, edge1: float) -> Callable:
    """0 below edge0, 1 above edge1, and step(x) + step(edge0 + edge1 - x) = 1."""
    if not edge0 < edge1:
        raise DomainError(f"step needs edge0 < edge1, got {edge0}, {edge1}")
    w = edge1 - edge0

    def step(x):
        s = np.clip((np.asarray(x, float) - edge0) / w, 0.0, 1.0)
        up = _bump01(1.0 - s)
        down = _bump01(s)
        return up / (up + down)
    return step


def plateau(inner, outer) -> Callable:
    """Equal to 1 on ``inner``, supported in the closed ``outer`` interval."""
    (a, b), (a2, b2) = inner, outer
    if not (a2 < a <= b < b2):
        raise DomainError(f"plateau needs {outer} to strictly contain {inner}")
    up = smooth_step(a2, a)
    down = smooth_step(b, b2)
    return lambda x: up(x) * (1.0 - down(x))


# -- symbol container ---------------------------------------------------------

def _everywhere(xi1, xi2):
    return np.ones(np.broadcast(np.asarray(xi1), np.asarray(xi2)).shape, bool)


@dataclass(frozen=True, eq=False)
class Symbol:
    func: Callable
    kind: str
    params: dict = field(default_factory=dict)
    support: Callable = _everywhere

    def __call__(self, xi1, xi2):
        return self.func(np.asarray(xi1, float), np.asarray(xi2, float))

    def scaled(self, t: float) -> "Symbol":
        """xi -> self(t * xi)."""
        f, s = self.func, self.support
        p = dict(self.params, scale=t * self.params.get("scale", 1.0))
        return Symbol(lambda a, b: f(t * a, t * b), self.kind, p,
                      lambda a, b: s(t * np.asarray(a), t * np.asarray(b)))

    def times(self, other: "Symbol", kind=None) -> "Symbol":
        f, g = self.func, other.func
        s1, s2 = self.support, other.support
        return Symbol(lambda a, b: f(a, b) * g(a, b), kind or f"{self.kind}*{other.kind}",
                      dict(self.params), lambda a, b: s1(a, b) & s2(a, b))


def indicator(mask_fn: Callable, kind="indicator", **params) -> Symbol:
    return Symbol(lambda a, b: mask_fn(a, b).astype(float), kind, params, mask_fn)


# -- bump profile ---------------------------------------------------------------

@dataclass(frozen=True)
class BumpProfile:
    """Profile supported in [0, c_star], optionally scaled so that its first
    three derivatives and itself are bounded by 1."""
    c_star: float = 0.125
    normalized: bool = False

    def __post_init__(self):
        if not self.c_star > 0:
            raise DomainError("c_star must be positive")

    @property
    def _half(self):
        return 0.5 * self.c_star

    @property
    def _scale(self):
        return 1.0 / max(1.0, self.certificate.max()) if self.normalized else 1.0

    def __call__(self, r):
        return self._scale * _bump01((np.asarray(r, float) - self._half) / self._half)

    @property
    def certificate(self) -> np.ndarray:
        """max |(d/dr)^m profile| for m = 0..3 (before normalisation)."""
        s = np.linspace(-1, 1, 40001)
        d = _bump01_derivs(s)
        k = (1.0 / self._half) ** np.arange(4)
        return np.abs(d).max(axis=1) * k

    @property
    def sup(self) -> float:
        return self._scale


# -- windows -------------------------------------------------------------------

def collar_window(curve: Curve) -> Symbol:
    """b(xi) = chi1(xi1) chi2(xi2): 1 over I1 near the curve, zero near 0."""
    chi1 = plateau(curve.I1, curve.I2)
    (y0, y1) = curve.box[1]
    p0, p1 = curve.psi_range
    inner = (p0 - 0.25 * (p0 - y0), p1 + 0.25 * (y1 - p1))
    outer = (p0 - 0.5 * (p0 - y0), p1 + 0.5 * (y1 - p1))
    chi2 = plateau(inner, outer)
    x2a, x2b = curve.I2

    def supp(a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        return (a >= x2a) & (a <= x2b) & (b >= outer[0]) & (b <= outer[1])
    return Symbol(lambda a, b: chi1(a) * chi2(b), "window",
                  {"curve": curve.name, "box": (tuple(curve.I2), outer)}, supp)


def band_window(curve: Curve, width: float = 0.05) -> Symbol:
    """a(xi): 1 for xi1 in the middle of I1 and |xi2 - psi(xi1)| <= width/2,
    supported in I1 x {|xi2 - psi| <= width}; checked to lie in the cone."""
    s1, t1 = curve.I1
    w = t1 - s1
    chi1 = plateau((s1 + 0.1 * w, t1 - 0.1 * w), (s1, t1))
    chi2 = plateau((-0.5 * width, 0.5 * width), (-width, width))

    def supp(a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        return (a >= s1) & (a <= t1) & (np.abs(b - curve.psi(a)) <= width)
    t = np.linspace(s1, t1, 201)
    for e in (-width, width):
        ok, _ = curve.in_cone(t, curve.psi(t) + e)
        if not np.all(ok):
            raise SupportError(f"band of width {width} leaves the cone of {curve.name}")
    return Symbol(lambda a, b: chi1(a) * chi2(b - curve.psi(a)), "window",
                  {"curve": curve.name, "width": width}, supp)


@dataclass(frozen=True, eq=False)
class ConeWindow:
    """Window written in gauge coordinates (q, rho): plateau in the curve
    parameter q times a plateau in rho. Supported inside the cone by
    construction."""
    curve: Curve
    q_inner: tuple
    q_outer: tuple
    rho_inner: tuple
    rho_outer: tuple

    def __post_init__(self):
        a, b = self.curve.interval
        if not (a < self.q_outer[0] and self.q_outer[1] < b):
            raise SupportError("q-support must lie strictly inside the curve interval")
        if not self.rho_outer[0] > 0:
            raise SupportError("rho-support must stay away from the origin")

    def __call__(self, xi1, xi2):
        rho, q = self.curve.gauge(xi1, xi2, strict=False)
        ok = np.isfinite(rho)
        out = np.zeros(ok.shape)
        out[ok] = plateau(self.q_inner, self.q_outer)(q[ok]) * \
            plateau(self.rho_inner, self.rho_outer)(rho[ok])
        return out

    def support(self, xi1, xi2):
        rho, q = self.curve.gauge(xi1, xi2, strict=False)
        with np.errstate(invalid="ignore"):
            return (np.isfinite(rho) & (q >= self.q_outer[0]) & (q <= self.q_outer[1])
                    & (rho >= self.rho_outer[0]) & (rho <= self.rho_outer[1]))

    @property
    def symbol(self) -> Symbol:
        return Symbol(self.__call__, "cone-window",
                      {"curve": self.curve.name, "radii": self.radii()}, self.support)

    def radii(self):
        """(r1, r2) with the support inside r1 < |xi| < r2."""
        t = np.linspace(*self.q_outer, 2001)
        g = np.hypot(t, self.curve.psi(t))
        return self.rho_outer[0] * g.min(), self.rho_outer[1] * g.max()


def cone_window(curve: Curve, rho_inner=(0.8, 1.25), rho_outer=(0.6, 1.6)) -> ConeWindow:
    """Default cone window: q-plateau on I1 inside I2, rho-plateau as given."""
    return ConeWindow(curve, curve.I1, curve.I2, tuple(rho_inner), tuple(rho_outer))


def curve_c0(curve: Curve) -> float:
    """1 / min |gamma(t)| over I."""
    t = curve.sample_t()
    return 1.0 / float(np.hypot(t, curve.psi(t)).min())


def check_window_in_cone(curve: Curve, window, r_max: float, n: int = 400):
    """Sample the window on a polar grid outside the cone; SupportError on leak."""
    th = np.linspace(-np.pi, np.pi, 4 * n, endpoint=False)
    r = np.linspace(r_max / n, r_max, n)
    R, T = np.meshgrid(r, th, indexing="ij")
    x1, x2 = R * np.cos(T), R * np.sin(T)
    inside, _ = curve.in_cone(x1, x2)
    v = np.asarray(window(x1[~inside], x2[~inside]))
    if np.any(np.abs(v) > 1e-12):
        k = int(np.argmax(np.abs(v)))
        raise SupportError(
            f"window nonzero outside the cone at ({x1[~inside][k]:.4g}, {x2[~inside][k]:.4g})")


# -- dyadic parameter checks -------------------------------------------------

def dyadic_level(delta: float) -> int:
    """L with delta = 2^-L, L even and >= 2; ParameterError otherwise."""
    if not 0 < delta <= 0.5:
        raise ParameterError(f"delta must lie in (0, 1/2], got {delta}")
    L = -np.log2(delta)
    Li = int(round(L))
    if abs(L - Li) > 1e-12 or Li < 2 or Li % 2:
        raise ParameterError(f"delta must be 2^-L with L even and >= 2, got {delta}")
    return Li


# -- distance and gauge power symbols ---------------------------------------------------

def collar_symbol(curve: Curve, profile: BumpProfile, delta: float, window=None) -> Symbol:
    """b(xi) * profile((xi2 - psi(xi1)) / delta)."""
    dyadic_level(delta)
    b = window if window is not None else collar_window(curve)
    psi = curve.psi
    bsupp = b.support if isinstance(b, Symbol) else _everywhere
    cs = profile.c_star

    def f(a, c):
        return b(a, c) * profile((c - psi(a)) / delta)

    def supp(a, c):
        r = (np.asarray(c) - psi(np.asarray(a))) / delta
        return bsupp(a, c) & (r >= 0) & (r <= cs)
    p = {"delta": delta, "c_star": cs, "curve": curve.name}
    if isinstance(b, Symbol) and "box" in b.params:
        p["box"] = b.params["box"]
    return Symbol(f, "collar", p, supp)


def phi_lambda_theta(r, lam: float, theta: float = 0.0):
    """r^lam (log(2 + 1/r))^-theta for r > 0, else 0."""
    r = np.asarray(r, float)
    out = np.zeros(r.shape)
    m = r > 1e-300
    rm = r[m]
    v = rm ** lam
    if theta != 0.0:
        v = v * np.log(2.0 + 1.0 / rm) ** (-theta)
    out[m] = v
    return out


def distance_power_symbol(curve: Curve, window, lam: float, theta: Optional[float] = None,
                          signed: str = "above") -> Symbol:
    """window(xi) * phi_{lam,theta}(+-(xi2 - psi(xi1)))."""
    if lam < -0.5:
        raise ParameterError(f"lambda = {lam} is below -1/2")
    if lam == -0.5 and theta is None:
        raise ParameterError("lambda = -1/2 needs an explicit theta")
    if signed not in ("above", "below"):
        raise ParameterError(f"signed must be 'above' or 'below', got {signed!r}")
    th = 0.0 if theta is None else float(theta)
    sg = 1.0 if signed == "above" else -1.0
    psi = curve.psi
    wsupp = window.support if isinstance(window, Symbol) else _everywhere

    def f(a, b):
        return window(a, b) * phi_lambda_theta(sg * (b - psi(a)), lam, th)

    def supp(a, b):
        return wsupp(a, b) & (sg * (np.asarray(b) - psi(np.asarray(a))) > 0)
    p = {"lambda": lam, "theta": th, "signed": signed}
    if isinstance(window, Symbol):
        p.update({k: window.params[k] for k in ("box", "radii") if k in window.params})
    return Symbol(f, "distance-power", p, supp)


def gauge_power_symbol(curve: Curve, window, power: float, side: str, r_max: float = 4.0) -> Symbol:
    """window(xi) (1 - rho)_+^power (inside) or (rho - 1)_+^power (outside)."""
    if power <= -0.5:
        raise ParameterError(f"gauge power must exceed -1/2, got {power}")
    if side not in ("inside", "outside"):
        raise ParameterError(f"side must be 'inside' or 'outside', got {side!r}")
    if isinstance(window, ConeWindow):
        wfun, wsupp = window.__call__, window.support
    else:
        check_window_in_cone(curve, window, r_max)
        wfun = window
        wsupp = window.support if isinstance(window, Symbol) else _everywhere
    sg = 1.0 if side == "outside" else -1.0

    def f(a, b):
        rho = curve.rho(a, b, strict=False)
        w = wfun(a, b)
        d = np.where(np.isfinite(rho), sg * (rho - 1.0), 0.0)
        return np.where(w != 0, w * phi_lambda_theta(d, power), 0.0)

    def supp(a, b):
        rho = curve.rho(a, b, strict=False)
        with np.errstate(invalid="ignore"):
            return wsupp(a, b) & np.isfinite(rho) & (sg * (rho - 1.0) > 0)
    p = {"power": power, "side": side}
    if isinstance(window, ConeWindow):
        p["radii"] = window.radii()
    elif isinstance(window, Symbol):
        p.update({k: window.params[k] for k in ("box", "radii") if k in window.params})
    return Symbol(f, "gauge-power", p, supp)


# -- partition of unity ------------------------------------------------------------

def _master_bump(s):
    return _bump01(2.0 * np.asarray(s, float))


def master_profile(s):
    """theta(s) = B(s) / sum_j B(s - j/2), B supported in (-1/2, 1/2)."""
    s = np.asarray(s, float)
    num = _master_bump(s)
    base = np.floor(2.0 * s) / 2.0
    den = np.zeros(s.shape)
    for k in (-1.0, -0.5, 0.0, 0.5, 1.0):
        den += _master_bump(s - (base + k))
    out = np.zeros(s.shape)
    m = num > 0
    out[m] = num[m] / den[m]
    return out


def partition_profile(center: float, delta: float) -> Callable:
    r = np.sqrt(delta)
    return lambda x: master_profile((np.asarray(x, float) - center) / r)


@dataclass(frozen=True, eq=False)
class PartitionPieces:
    """Pieces zeta_l * collar (l = 1..K) and zeta~_l * collar (l = 0..K)."""
    delta: float
    zeta: dict
    zeta_tilde: dict
    centers: dict
    centers_tilde: dict

    def family(self, which: int):
        """Indices l of family ``which`` in 1..4 (l = which mod 4, 4 means 0)."""
        return [l for l in sorted(self.zeta) if (l - which) % 4 == 0]

    def select(self, labels):
        return [self.zeta[l] for l in labels]

    def all(self):
        return [self.zeta[l] for l in sorted(self.zeta)] + \
            [self.zeta_tilde[l] for l in sorted(self.zeta_tilde)]


def partition_pieces(decomp, collar: Symbol) -> PartitionPieces:
    """Cut the collar by the delta^(1/2)-scaled partition of unity in xi1.

    ``decomp`` needs attributes ``delta`` and ``a`` (breakpoints a_0 < ... < a_K).
    """
    if abs(decomp.delta - collar.params.get("delta", -1)) > 0:
        raise ParameterError("decomposition and collar use different delta")
    a = np.asarray(decomp.a, float)
    d = decomp.delta
    r = np.sqrt(d)
    zeta, zt, cz, czt = {}, {}, {}, {}

    def piece(center, label, tilde):
        prof = partition_profile(center, d)
        lo, hi = center - r / 2, center + r / 2
        f, s = collar.func, collar.support

        def func(x1, x2):
            return prof(x1) * f(x1, x2)

        def supp(x1, x2):
            x1 = np.asarray(x1)
            return s(x1, x2) & (x1 > lo) & (x1 < hi)
        kind = "partition-tilde" if tilde else "partition"
        p = {"delta": d, "ell": label, "lo": lo, "hi": hi}
        if "box" in collar.params:
            p["box"] = collar.params["box"]
        return Symbol(func, kind, p, supp)

    for l in range(1, len(a)):
        c = 0.5 * (a[l - 1] + a[l])
        zeta[l] = piece(c, l, False)
        cz[l] = c
    for l in range(len(a)):
        zt[l] = piece(a[l], l, True)
        czt[l] = a[l]
    return PartitionPieces(d, zeta, zt, cz, czt)


# -- factorization ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Factorization:
    weight: Symbol          # w > 0 on supp(a)
    side: str               # which side of rho = 1 the region above the curve maps to
    window: Symbol
    residual: float
    residuals: dict
    nodes: int

    def a_tilde(self, lam: float) -> Symbol:
        w, a = self.weight.func, self.window.func

        def f(x1, x2):
            av = a(x1, x2)
            out = np.zeros(np.shape(av))
            m = av != 0
            out[m] = av[m] / w(x1[m], x2[m]) ** lam
            return out
        return Symbol(f, "factored-window", {"lambda": lam}, self.window.support)


def gauge_weight_raw(curve: Curve, x1, x2):
    """Signed mean of d2 rho along the vertical segment from the curve to xi."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    p = curve.psi(x1)
    acc = np.zeros(x1.shape)
    for t, w in zip(GL_T, GL_W):
        acc += w * curve.d2_rho(x1, p + t * (x2 - p), strict=False)
    return acc


def factorization_weight(curve: Curve, window: Optional[Symbol] = None, grid=None,
                         lams=(0.5, 1.0)) -> Factorization:
    """Weight w with (rho - 1) = w (xi2 - psi(xi1)) on supp(a), and the
    residual of a (xi2 - psi)_+^lam = a / w^lam (+-(rho - 1))_+^lam."""
    from .field import GridSpec
    window = window if window is not None else band_window(curve)
    grid = grid or GridSpec()
    X1, X2 = grid.xi_mesh()
    m = window.support(X1, X2) & (window(X1, X2) != 0)
    if not m.any():
        raise DegenerateInputError("window has no lattice node in its support")
    x1, x2 = X1[m], X2[m]
    raw = gauge_weight_raw(curve, x1, x2)
    sign = float(np.sign(np.median(raw)))
    w = sign * raw
    if np.any(~np.isfinite(w)) or np.min(w) < 1e-8:
        k = int(np.argmin(np.where(np.isfinite(w), w, -np.inf)))
        raise DegenerateInputError(f"weight degenerates at xi=({x1[k]}, {x2[k]})")
    side = "outside" if sign > 0 else "inside"

    def wfun(a, b):
        return sign * gauge_weight_raw(curve, a, b)
    weight = Symbol(wfun, "gauge-weight", {"curve": curve.name}, window.support)
    av = window(x1, x2)
    rho = curve.rho(x1, x2)
    dist = x2 - curve.psi(x1)
    gdist = (rho - 1.0) * sign
    res = {}
    for lam in lams:
        rhs = av * phi_lambda_theta(dist, lam)
        lhs = (av / w ** lam) * phi_lambda_theta(gdist, lam)
        scale = np.maximum(np.abs(rhs), np.abs(lhs))
        nz = scale > 0
        res[lam] = float(np.max(np.abs(lhs - rhs)[nz] / scale[nz])) if nz.any() else 0.0
    return Factorization(weight, side, window, max(res.values()), res, int(m.sum()))


# -- name + params addressing ------------------------------------------------------

def _num(s: str) -> float:
    s = s.strip()
    m = re.fullmatch(r"([+-]?\d+(?:\.\d+)?)\^([+-]?\d+(?:\.\d+)?)", s)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    return float(s)


def parse_symbol_spec(spec: str, curve: Curve) -> Symbol:
    """'collar:delta=2^-6', 'sigma:lambda=0.5', 'gauge:power=0.5,side=inside'."""
    name, _, rest = spec.partition(":")
    kv = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        kv[k.strip()] = v.strip()
    name = name.strip()
    if name == "collar":
        prof = BumpProfile(_num(kv.get("c_star", "0.125")))
        return collar_symbol(curve, prof, _num(kv.get("delta", "2^-6")))
    if name == "sigma":
        th = kv.get("theta")
        return distance_power_symbol(curve, collar_window(curve), _num(kv.get("lambda", "0.5")),
                                     None if th is None else _num(th), kv.get("signed", "above"))
    if name == "gauge":
        return gauge_power_symbol(curve, cone_window(curve), _num(kv.get("power", "0.5")),
                                  kv.get("side", "inside"))
    raise ParameterError(f"unknown symbol {name!r}")
