"""Periodic uniform grid with Fourier-collocation calculus.

All spatial derivatives, the Bessel-potential operator Lambda^s = (1-dx^2)^{s/2}
and the quadrature behind inner products / Sobolev norms live here.  The domain
is a periodic cell [0, L); fields are assumed smooth and resolved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_FFT_CACHE: dict[tuple[int, float], np.ndarray] = {}


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on [0, length)."""

    n: int
    length: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"need n >= 8, got {self.n}")
        if self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        key = (self.n, self.length)
        k = _FFT_CACHE.get(key)
        if k is None:
            k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
            k.setflags(write=False)
            _FFT_CACHE[key] = k
        return k


@dataclass
class Field:
    """Scalar function sampled on a PeriodicGrid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got {self.values.shape}")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def constant_field(grid: PeriodicGrid, value: float) -> Field:
    return Field(grid, np.full(grid.n, float(value)))


def _check_same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")


# -- spectral calculus on raw arrays (hot paths work on ndarrays) --

def spectral_deriv(values: np.ndarray, grid: PeriodicGrid, order: int = 1) -> np.ndarray:
    """Fourier-collocation d^order/dx^order; keeps complex input complex."""
    if order < 0 or order > 4:
        raise ValueError(f"derivative order must be in 1..4, got {order}")
    if order == 0:
        return np.array(values, copy=True)
    k = grid.wavenumbers
    out = np.fft.ifft((1j * k) ** order * np.fft.fft(values))
    return out if np.iscomplexobj(values) else np.real(out)


def bessel_multiplier(values: np.ndarray, grid: PeriodicGrid, s: float) -> np.ndarray:
    """Apply (1 + k^2)^{s/2} mode-wise."""
    if s == 0.0:
        return np.array(values, copy=True)
    k = grid.wavenumbers
    out = np.fft.ifft((1.0 + k**2) ** (s / 2.0) * np.fft.fft(values))
    return out if np.iscomplexobj(values) else np.real(out)


def quad_inner(f: np.ndarray, g: np.ndarray, grid: PeriodicGrid) -> float:
    """Trapezoidal quadrature of f*g; exact for resolved trigonometric data."""
    return float(grid.dx * np.dot(f, g))


def dealias_mask(grid: PeriodicGrid) -> np.ndarray:
    """Boolean mask keeping |k| below the 2/3 cutoff."""
    k = grid.wavenumbers
    kmax = np.max(np.abs(k))
    return np.abs(k) <= (2.0 / 3.0) * kmax


def dealias(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """2/3-rule truncation of the upper third of the spectrum."""
    out = np.fft.ifft(np.where(dealias_mask(grid), np.fft.fft(values), 0.0))
    return out if np.iscomplexobj(values) else np.real(out)


# -- Field-level API --

def deriv(f: Field, order: int = 1) -> Field:
    return Field(f.grid, spectral_deriv(f.values, f.grid, order))


def bessel_potential(f: Field, s: float) -> Field:
    return Field(f.grid, bessel_multiplier(f.values, f.grid, s))


def inner(f: Field, g: Field) -> float:
    _check_same_grid(f, g)
    return quad_inner(f.values, g.values, f.grid)


def sobolev_norm(f: Field, s: float = 0.0) -> float:
    lf = bessel_multiplier(f.values, f.grid, s)
    return float(np.sqrt(max(quad_inner(lf, lf, f.grid), 0.0)))


def xs_norm_arrays(zeta: np.ndarray, v: np.ndarray, grid: PeriodicGrid,
                   s: float, mu: float) -> float:
    """|zeta|_{H^s}^2 + |v|_{H^s}^2 + mu |dx v|_{H^s}^2, square-rooted."""
    lz = bessel_multiplier(zeta, grid, s)
    lv = bessel_multiplier(v, grid, s)
    lvx = spectral_deriv(lv, grid, 1)
    total = quad_inner(lz, lz, grid) + quad_inner(lv, lv, grid) \
        + mu * quad_inner(lvx, lvx, grid)
    return float(np.sqrt(max(total, 0.0)))


def xs_norm(state, s: float, mu: float) -> float:
    """X^s norm of a state carrying .zeta and .v Fields."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return xs_norm_arrays(state.zeta.values, state.v.values, state.zeta.grid, s, mu)


# -- serialization --

def field_to_csv(f: Field, path):
    with open(path, "w") as fh:
        fh.write("x,value\n")
        for x, v in zip(f.grid.nodes, f.values):
            fh.write(f"{float(x)!r},{float(v)!r}\n")


def field_from_csv(grid: PeriodicGrid, path) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.shape[0] != grid.n:
        raise ValueError(f"csv holds {data.shape[0]} rows, grid wants {grid.n}")
    return Field(grid, data[:, 1].copy())


def field_to_binary(f: Field, path):
    """Length-prefixed little-endian float64 column."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", f.grid.n))
        fh.write(f.values.astype("<f8").tobytes())


def field_from_binary(grid: PeriodicGrid, path) -> Field:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<q", fh.read(8))
        if n != grid.n:
            raise ValueError(f"binary holds {n} values, grid wants {grid.n}")
        vals = np.frombuffer(fh.read(8 * n), dtype="<f8")
    return Field(grid, vals.copy())
