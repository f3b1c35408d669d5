"""Periodic 2-D fields, continuous-normalised transforms and multipliers.

Physical samples live on x_n = -L + n*h, n = 0..N-1 (both axes, ``ij``
indexing). Frequency samples live on the centred lattice
xi_k = (k - N/2) / (2L). The forward transform carries h**2 and the inverse
carries (1/(2L))**2, so Plancherel holds without extra factors.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import (ContractError, DegenerateInputError, DomainError,
                     InputError, SymbolEvaluationError)

PHYSICAL = "physical"
FREQUENCY = "frequency"

_MAGIC = b"BRF1"
_HEADER = struct.Struct("<4sId")


@dataclass(frozen=True)
class GridSpec:
    half_width: float = 16.0
    n: int = 512

    def __post_init__(self):
        if self.n < 16 or self.n % 2:
            raise DomainError(f"points per axis must be even and >= 16, got {self.n}")
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dxi(self) -> float:
        return 1.0 / (2.0 * self.half_width)

    @property
    def xi_max(self) -> float:
        return self.n / (4.0 * self.half_width)

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n)

    @property
    def xi(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dxi

    def x_mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def xi_mesh(self):
        return np.meshgrid(self.xi, self.xi, indexing="ij")

    def xi_index(self, xi1, xi2):
        """Nearest lattice indices of a frequency point."""
        k1 = int(round(xi1 / self.dxi)) + self.n // 2
        k2 = int(round(xi2 / self.dxi)) + self.n // 2
        if not (0 <= k1 < self.n and 0 <= k2 < self.n):
            raise DomainError(f"frequency ({xi1}, {xi2}) outside the lattice")
        return k1, k2


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Field:
    grid: GridSpec
    values: np.ndarray = dc_field(repr=False)
    space: str = PHYSICAL

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.n, self.grid.n):
            raise InputError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        if self.space not in (PHYSICAL, FREQUENCY):
            raise InputError(f"unknown space {self.space!r}")
        if not np.all(np.isfinite(v)):
            raise InputError("field values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.space)

    def __add__(self, other):
        _same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def _same(a: Field, b: Field):
    if a.grid != b.grid or a.space != b.space:
        raise ContractError("fields live on different grids or spaces")


def _require(f: Field, space: str):
    if f.space != space:
        raise ContractError(f"expected a {space}-space field, got {f.space}")


def _sign(n):
    # (-1)^m for m = -n/2 .. n/2-1 ; the phase from x_0 = -L
    m = np.arange(n) - n // 2
    return np.where(m % 2 == 0, 1.0, -1.0)


def forward_transform(f: Field) -> Field:
    _require(f, PHYSICAL)
    g = f.grid
    s = _sign(g.n)
    F = np.fft.fftshift(np.fft.fft2(f.values))
    F *= g.h ** 2 * np.outer(s, s)
    return Field(g, F, FREQUENCY)


def inverse_transform(F: Field) -> Field:
    _require(F, FREQUENCY)
    return Field(F.grid, _synthesise(F.values, F.grid), PHYSICAL)


def _synthesise(F, g: GridSpec):
    """Inverse transform of raw lattice values; works on stacked arrays."""
    s = _sign(g.n)
    A = F * np.outer(s, s)
    out = np.fft.ifft2(np.fft.ifftshift(A, axes=(-2, -1)))
    return out * (g.n * g.dxi) ** 2


def _analyse(f, g: GridSpec):
    s = _sign(g.n)
    F = np.fft.fftshift(np.fft.fft2(f), axes=(-2, -1))
    return F * (g.h ** 2 * np.outer(s, s))


def lp_norm(f: Field, p: float) -> float:
    _require(f, PHYSICAL)
    return _lp(np.abs(f.values), p, f.grid.h ** 2)


def lp_norm_freq(F: Field, p: float = 2) -> float:
    _require(F, FREQUENCY)
    return _lp(np.abs(F.values), p, F.grid.dxi ** 2)


def _lp(a, p, cell):
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return float(np.sqrt(cell * np.sum(a * a)))
    return float((cell * np.sum(a ** p)) ** (1.0 / p))


def lp_norm_array(a, grid: GridSpec, p: float) -> float:
    """L^p norm of raw physical samples (real or complex)."""
    return _lp(np.abs(a), p, grid.h ** 2)


def evaluate_on_lattice(m, grid: GridSpec) -> np.ndarray:
    """Multiplier values on the full frequency lattice."""
    if isinstance(m, np.ndarray):
        vals = m
    elif isinstance(m, (int, float, complex)):
        vals = np.full((grid.n, grid.n), m, dtype=complex)
    else:
        X1, X2 = grid.xi_mesh()
        vals = np.asarray(m(X1, X2))
        vals = np.broadcast_to(vals, X1.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        k1, k2 = np.argwhere(bad)[0]
        raise SymbolEvaluationError(
            f"symbol not finite at xi=({grid.xi[k1]}, {grid.xi[k2]})")
    return vals


def apply_multiplier(f: Field, m) -> Field:
    """T_m f = inverse(m * forward(f))."""
    _require(f, PHYSICAL)
    vals = evaluate_on_lattice(m, f.grid)
    F = _analyse(f.values, f.grid)
    return Field(f.grid, _synthesise(F * vals, f.grid), PHYSICAL)


def plane_wave(grid: GridSpec, xi0) -> Field:
    k1, k2 = grid.xi_index(*xi0)
    X1, X2 = grid.x_mesh()
    e = np.exp(2j * np.pi * (grid.xi[k1] * X1 + grid.xi[k2] * X2))
    return Field(grid, e, PHYSICAL)


# frequency regions ------------------------------------------------------

def annulus(r1, r2) -> Callable:
    def region(x1, x2):
        r = np.hypot(x1, x2)
        return (r > r1) & (r < r2)
    return region


def single_node(xi0, tol=1e-9) -> Callable:
    def region(x1, x2):
        return (np.abs(x1 - xi0[0]) < tol) & (np.abs(x2 - xi0[1]) < tol)
    return region


def random_bandlimited(grid: GridSpec, seed: int, support: Callable) -> Field:
    """Seeded complex Gaussian spectrum on ``support``, unit L2 norm."""
    X1, X2 = grid.xi_mesh()
    mask = np.asarray(support(X1, X2), dtype=bool)
    m = int(mask.sum())
    if m == 0:
        raise DegenerateInputError("frequency region contains no lattice node")
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    F = np.zeros((grid.n, grid.n), complex)
    F[mask] = c
    F /= np.sqrt(grid.dxi ** 2 * np.sum(np.abs(c) ** 2))
    return Field(grid, _synthesise(F, grid), PHYSICAL)


def reflect(f: Field, axis: int) -> Field:
    """f(x) -> f(R x) with R flipping coordinate ``axis`` (periodic, exact)."""
    # index n -> (N - n) mod N on either lattice; in frequency space the
    # Nyquist row maps to itself, so it should vanish for an exact reflection
    v = np.roll(np.flip(f.values, axis=axis), 1, axis=axis)
    return Field(f.grid, v, f.space)


def cyclic_shift(f: Field, s1: int, s2: int) -> Field:
    return f.with_values(np.roll(f.values, (s1, s2), axis=(0, 1)))


# binary I/O ---------------------------------------------------------------

def save_field(f: Field, path) -> None:
    _require(f, PHYSICAL)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, f.grid.n, float(f.grid.half_width)))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise InputError("truncated field header")
        magic, n, lam = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise InputError(f"bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != n * n:
        raise InputError(f"expected {n * n} samples, found {data.size}")
    return Field(GridSpec(lam, n), data.reshape(n, n).astype(complex), PHYSICAL)
