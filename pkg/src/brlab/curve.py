"""Curves (t, psi(t)), admissibility, case classification and the gauge.

The four geometric cases:

* B1 / B2: the curve sits above / below the horizontal axis and the ray
  through xi is parametrised by the slope ratio ``t / psi(t)``.
* B3 / B4: the curve sits right / left of the vertical axis and the ratio is
  ``psi(t) / t``.

In all cases the gauge ``rho`` is the degree-one homogeneous function with
``rho(t, psi(t)) = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (AdmissibilityError, ClassificationError, ConeDomainError,
                     DomainError, RangeError, SingularityError)

CASES = ("B1", "B2", "B3", "B4")
DEFAULT_SAMPLES = 10_000
_SING = 1e-14


@dataclass(frozen=True)
class CaseTag:
    case: str
    ratio_sign: int  # +1 or -1

    @property
    def uses_star(self) -> bool:
        """True when the ray ratio is psi(t)/t (cases B3 and B4)."""
        return self.case in ("B3", "B4")

    @property
    def sign_label(self) -> str:
        return "positive" if self.ratio_sign > 0 else "negative"


def _shrink(iv, frac):
    a, b = iv
    w = b - a
    return (a + frac * w, b - frac * w)


def _outward(lo, hi, unit=0.5):
    """Round [lo, hi] outward to multiples of ``unit``."""
    a = math.floor(lo / unit) * unit
    b = math.ceil(hi / unit) * unit
    return a, b


@dataclass(frozen=True, eq=False)
class Curve:
    """Graph of psi over the compact interval ``interval``.

    ``coeffs`` (highest degree first) is optional; when given the ratio
    inverse runs in a compiled bisection kernel.
    """
    name: str
    psi: Callable
    dpsi: Callable
    ddpsi: Callable
    interval: tuple
    case_hint: Optional[str] = None
    coeffs: Optional[tuple] = None
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        a, b = map(float, self.interval)
        if not a < b:
            raise DomainError(f"empty interval {self.interval}")
        object.__setattr__(self, "interval", (a, b))
        if self.case_hint is not None and self.case_hint not in CASES:
            raise ClassificationError(f"unknown case {self.case_hint!r}")

    # -- windows and box -------------------------------------------------
    @property
    def I1(self):
        return _shrink(self.interval, 0.10)

    @property
    def I2(self):
        return _shrink(self.interval, 0.05)

    @property
    def I3(self):
        return _shrink(self.interval, 0.02)

    def sample_t(self, iv=None, n=None):
        a, b = self.interval if iv is None else iv
        return np.linspace(a, b, (n or self.samples) + 1)

    @cached_property
    def psi_range(self):
        v = self.psi(self.sample_t())
        return float(v.min()), float(v.max())

    @cached_property
    def box(self):
        """((x_lo, x_hi), (y_lo, y_hi)) enclosing the curve, half-integer ends.

        Each range is widened by a quarter of its length on both sides, then
        rounded outward. A side that would cross zero is kept on its side.
        """
        out = []
        for lo, hi in (self.interval, self.psi_range):
            w = max(hi - lo, 1e-3)
            a, b = _outward(lo - 0.25 * w, hi + 0.25 * w)
            # stay on the sign side of the curve, strictly beyond it
            if lo > 0 and a <= 0:
                a = (math.ceil(lo / 0.5) - 1) * 0.5
                if a <= 0:
                    a = lo / 2
            if hi < 0 and b >= 0:
                b = (math.floor(hi / 0.5) + 1) * 0.5
                if b >= 0:
                    b = hi / 2
            out.append((a, b))
        return tuple(out)

    # -- basic geometry -------------------------------------------------
    def _check_t(self, t, iv=None):
        a, b = self.interval if iv is None else iv
        t = np.asarray(t, float)
        if np.any(t < a - 1e-12) or np.any(t > b + 1e-12):
            raise DomainError(f"parameter outside [{a}, {b}]")
        return t

    def gamma_point(self, t):
        t = self._check_t(t)
        return np.stack([t, self.psi(t)], axis=-1)

    def tangent_slope(self, t):
        t = self._check_t(t)
        return self.dpsi(t)

    # -- classification ---------------------------------------------------
    @cached_property
    def tag(self) -> CaseTag:
        a, b = self.interval
        lo, hi = self.psi_range
        ok = {"B1": lo > 0, "B2": hi < 0, "B3": a > 0, "B4": b < 0}
        if self.case_hint is not None:
            case = self.case_hint
            if not ok[case]:
                raise ClassificationError(
                    f"{self.name}: declared case {case} does not fit the curve box")
        elif a > 0:
            case = "B3"
        elif b < 0:
            case = "B4"
        elif lo > 0:
            case = "B1"
        elif hi < 0:
            case = "B2"
        else:
            raise ClassificationError(f"{self.name}: curve fits none of the cases")
        t = self.sample_t(self.I3)
        e = self._tangent_gap(t)
        s = np.sign(e[len(e) // 2])
        # ratio' = gap / psi^2 for t/psi, and -gap / t^2 for psi/t
        rs = int(s) if case in ("B1", "B2") else -int(s)
        return CaseTag(case, rs)

    def _tangent_gap(self, t):
        return self.psi(t) - t * self.dpsi(t)

    # -- ratios -----------------------------------------------------------
    def ratio(self, t):
        """The ray ratio selected by the case tag."""
        return psi_star(self, t) if self.tag.uses_star else psi_ratio(self, t)

    @cached_property
    def ratio_range(self):
        # the gauge lives on the cone over all of I, which contains the cone
        # over the innermost window
        lo, hi = self.interval
        r = self.ratio(np.array([lo, hi]))
        return float(min(r)), float(max(r))

    def ratio_inverse(self, s, iv=None):
        """Vectorised inverse of the selected ratio, no range check."""
        lo, hi = self.interval if iv is None else iv
        s = np.asarray(s, float)
        inc = self.tag.ratio_sign > 0
        mode = 1 if self.tag.uses_star else 0
        if self.coeffs is not None:
            return _kernels.ratio_bisect(np.array(self.coeffs, float), mode, lo, hi, inc, s)
        a = np.full(s.shape, lo)
        b = np.full(s.shape, hi)
        for _ in range(200):
            m = 0.5 * (a + b)
            if np.all((m == a) | (m == b)):
                break
            r = self.ratio(m)
            right = (r < s) if inc else (r > s)
            a = np.where(right, m, a)
            b = np.where(right, b, m)
        return 0.5 * (a + b)

    # -- gauge ------------------------------------------------------------
    def in_cone(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        star = self.tag.uses_star
        lead = u if star else v
        pos = self.tag.case in ("B1", "B3")
        side = lead > 0 if pos else lead < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(side, (v / u) if star else (u / v), np.nan)
        lo, hi = self.ratio_range
        tol = 1e-13 * max(1.0, abs(lo), abs(hi))
        return side & (s >= lo - tol) & (s <= hi + tol), s

    def gauge(self, u, v, strict=True):
        """(rho, q): gauge value and the curve parameter of the ray through (u, v).

        Outside the cone spanned by the curve over I this raises
        ConeDomainError when ``strict``; otherwise both outputs are NaN there.
        """
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        inside, s = self.in_cone(u, v)
        if strict and not np.all(inside):
            k = np.flatnonzero(~inside.ravel())[0]
            raise ConeDomainError(
                f"({u.ravel()[k]}, {v.ravel()[k]}) lies outside the cone of {self.name}")
        lo, hi = self.ratio_range
        sc = np.clip(np.where(inside, s, 0.5 * (lo + hi)), lo, hi)
        q = self.ratio_inverse(sc)
        if self.tag.uses_star:
            rho = u / q
        else:
            rho = v / self.psi(q)
        rho = np.where(inside, rho, np.nan)
        q = np.where(inside, q, np.nan)
        return rho, q

    def rho(self, u, v, strict=True):
        return self.gauge(u, v, strict)[0]

    def d2_rho(self, u, v, strict=True):
        """d rho / d xi2 by central differences with relative step 1e-6."""
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        h = 1e-6 * np.maximum(np.hypot(u, v), 1e-300)
        return (self.rho(u, v + h, strict) - self.rho(u, v - h, strict)) / (2 * h)

    def d1_rho(self, u, v, strict=True):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        h = 1e-6 * np.maximum(np.hypot(u, v), 1e-300)
        return (self.rho(u + h, v, strict) - self.rho(u - h, v, strict)) / (2 * h)


# -- free functions -----------------------------------------------------------

def psi_ratio(curve: Curve, t):
    t = np.asarray(t, float)
    p = curve.psi(t)
    if np.any(np.abs(p) < _SING):
        raise SingularityError(f"{curve.name}: psi vanishes near t={t}")
    return t / p


def psi_star(curve: Curve, t):
    t = np.asarray(t, float)
    if np.any(np.abs(t) < _SING):
        raise SingularityError(f"{curve.name}: ratio psi(t)/t undefined at t=0")
    return curve.psi(t) / t


def psi_inverse(curve: Curve, s):
    """Inverse of the selected ratio on I; RangeError outside its image."""
    lo, hi = curve.ratio_range
    s = np.asarray(s, float)
    tol = 1e-14 * max(1.0, abs(lo), abs(hi))
    if np.any(s < lo - tol) or np.any(s > hi + tol):
        raise RangeError(f"{s} outside the ratio range [{lo}, {hi}]")
    return curve.ratio_inverse(np.clip(s, lo, hi))


def rho_gauge(curve: Curve, u, v):
    return curve.rho(u, v, strict=True)


def gamma_point(curve: Curve, t):
    return curve.gamma_point(t)


def tangent_slope(curve: Curve, t):
    return curve.tangent_slope(t)


def _first_bad(t, vals, thresh):
    """Index of the first sample that is tiny or next to a sign change."""
    bad = np.abs(vals) <= thresh
    flip = np.sign(vals[1:]) * np.sign(vals[:-1]) < 0
    idx = np.flatnonzero(bad)
    if idx.size:
        return int(idx[0])
    idx = np.flatnonzero(flip)
    if idx.size:
        k = int(idx[0])
        return k if abs(vals[k]) < abs(vals[k + 1]) else k + 1
    return None


def check_admissibility(curve: Curve, require_curvature: bool = False) -> CaseTag:
    """Sampled tangent-line and curvature checks, then the case tag."""
    t = curve.sample_t()
    gap = curve._tangent_gap(t)
    k = _first_bad(t, gap, 1e-12)
    if k is not None:
        raise AdmissibilityError(
            f"{curve.name}: tangent line through the origin near t={t[k]:.6g}", t=float(t[k]))
    if require_curvature:
        c = curve.ddpsi(t)
        k = _first_bad(t, c, 1e-9)
        if k is not None:
            raise AdmissibilityError(
                f"{curve.name}: curvature vanishes near t={t[k]:.6g}", t=float(t[k]))
    tag = curve.tag
    r = curve.ratio(t)
    d = np.diff(r) * tag.ratio_sign
    if not np.all(d > 0):
        k = int(np.flatnonzero(d <= 0)[0])
        raise AdmissibilityError(f"{curve.name}: ratio not strictly monotone", t=float(t[k]))
    return tag


def monotone_certificate(curve: Curve, n: int = DEFAULT_SAMPLES) -> float:
    """Smallest signed increment of the ratio over an n-point sample of I."""
    r = curve.ratio(curve.sample_t(None, n))
    return float(np.min(np.diff(r) * curve.tag.ratio_sign))


def derivative_consistency(curve: Curve, step: float = 1e-5, n: int = 1000):
    """Max deviation of the supplied derivatives from central differences.

    The second derivative is compared with a difference of the supplied first
    derivative; a second difference of psi at this step is rounding-limited.
    """
    a, b = curve.interval
    t = np.linspace(a + step, b - step, n)
    d1 = (curve.psi(t + step) - curve.psi(t - step)) / (2 * step)
    d2 = (curve.dpsi(t + step) - curve.dpsi(t - step)) / (2 * step)
    return float(np.max(np.abs(d1 - curve.dpsi(t)))), float(np.max(np.abs(d2 - curve.ddpsi(t))))


# -- presets ------------------------------------------------------------------

def polynomial_curve(name: str, coeffs: Sequence[float], interval, case_hint=None) -> Curve:
    """psi given by coefficients, highest degree first."""
    c = np.array(coeffs, float)
    c1 = np.polyder(c) if c.size > 1 else np.zeros(1)
    c2 = np.polyder(c1) if c1.size > 1 else np.zeros(1)
    return Curve(name,
                 lambda t: np.polyval(c, t),
                 lambda t: np.polyval(c1, t),
                 lambda t: np.polyval(c2, t),
                 tuple(interval), case_hint, tuple(float(x) for x in c))


PRESETS = {
    "parabola-b1": (np.array([1.0, 0.0, 1.0]), (-0.5, 0.5), None),
    "power-b3": (np.array([1.0, 0.0, 0.0]), (1.0, 2.0), "B3"),
    "cubic-flat": (np.array([1.0, 0.0, 0.0, 1.0]), (-0.5, 0.5), None),
    # decreasing ratio t/psi in case B1
    "power-b1": (np.array([1.0, 0.0, 0.0]), (1.0, 2.0), "B1"),
    "parabola-b2": (np.array([-1.0, 0.0, -1.0]), (-0.5, 0.5), None),
    "power-b4": (np.array([1.0, 0.0, 0.0]), (-2.0, -1.0), "B4"),
}


def preset(name: str) -> Curve:
    try:
        c, iv, hint = PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown curve preset {name!r}; choose from {sorted(PRESETS)}") from None
    return polynomial_curve(name, c, iv, hint)
