"""Free-space Coulomb convolution on a cubic grid.

Convolutions are linear (not circular): fields are zero padded to ``pad * n``
points per axis and the kernel is sampled on the full difference grid, so
no periodic images enter.  The sample at zero separation is replaced by the
exact average of the kernel over one grid cell.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, UsageError
from .grid import Grid3D

# Averages of |x|^-1 and |x|^-2 over the unit cube centred at the origin.
CELL_COULOMB = 3.0 * np.log(2.0 + np.sqrt(3.0)) - 0.5 * np.pi
CELL_HARDY = 7.674124222443732


def difference_offsets(grid: Grid3D, pad: int = 2):
    """Offsets (in length units) of a padded difference grid, in FFT order.

    Returns ``(dx, dy, dz, valid)``; ``valid`` marks offsets with all
    components strictly inside (-n, n), the only ones a linear convolution
    of two grid functions can reach.
    """
    if pad < 2:
        raise ConfigurationError("padding factor must be at least 2")
    m = pad * grid.n
    k = np.fft.fftfreq(m, 1.0 / m).astype(int)
    ok = np.abs(k) < grid.n
    d = k * grid.spacing
    dx, dy, dz = d[:, None, None], d[None, :, None], d[None, None, :]
    valid = ok[:, None, None] & ok[None, :, None] & ok[None, None, :]
    return dx, dy, dz, valid


class FreeSpaceKernel:
    """A translation-invariant kernel prepared for zero-padded FFT convolution."""

    def __init__(self, grid: Grid3D, values: np.ndarray, pad: int = 2):
        self.grid = grid
        self.pad = pad
        self.m = pad * grid.n
        self.values = values
        self.is_complex = np.iscomplexobj(values)
        self._rhat = None
        self._chat = None

    @classmethod
    def from_function(cls, grid: Grid3D, fn, pad: int = 2) -> "FreeSpaceKernel":
        dx, dy, dz, valid = difference_offsets(grid, pad)
        vals = np.where(valid, fn(dx, dy, dz), 0.0)
        return cls(grid, vals, pad)

    @property
    def rhat(self):
        if self._rhat is None:
            self._rhat = sfft.rfftn(self.values)
        return self._rhat

    def compact(self) -> "FreeSpaceKernel":
        """Keep only the real transform (real kernels); frees the samples."""
        if self.is_complex:
            raise UsageError("only real kernels can be compacted")
        self.rhat
        self.values = None
        return self

    @property
    def chat(self):
        if self._chat is None:
            self._chat = sfft.fftn(self.values)
        return self._chat

    def _padded(self, f):
        n, m = self.grid.n, self.m
        out = np.zeros((m, m, m) + f.shape[3:], dtype=f.dtype)
        out[:n, :n, :n] = f
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(K * f)(x) = sum_y K(x - y) f(y) h^3 for x on the grid."""
        n = self.grid.n
        w = self.grid.cell_volume
        if self.values is None and np.iscomplexobj(f):
            return self.apply(f.real) + 1j * self.apply(f.imag)
        if np.iscomplexobj(f) or self.is_complex:
            res = sfft.ifftn(sfft.fftn(self._padded(f)) * self.chat)
        else:
            res = sfft.irfftn(sfft.rfftn(self._padded(f)) * self.rhat, s=(self.m,) * 3)
        return res[:n, :n, :n] * w

    def spectrum(self, f: np.ndarray) -> np.ndarray:
        """Real transform of the zero-padded real field ``f`` (leading axes are batched)."""
        lead = f.ndim - 3
        pad = np.zeros(f.shape[:lead] + (self.m,) * 3)
        pad[(...,) + (slice(0, self.grid.n),) * 3] = f
        return sfft.rfftn(pad, axes=(-3, -2, -1))

    def from_spectrum(self, fhat: np.ndarray) -> np.ndarray:
        """Grid values of the convolution whose padded real transform is ``fhat``."""
        n = self.grid.n
        res = sfft.irfftn(fhat, s=(self.m,) * 3, axes=(-3, -2, -1))
        return res[(...,) + (slice(0, n),) * 3] * self.grid.cell_volume

    def bilinear(self, f: np.ndarray, g: np.ndarray) -> float:
        """sum_{x,y} f(x) K(x - y) g(y) h^6 for real f, g; symmetric in (f, g)."""
        fh = sfft.rfftn(self._padded(f))
        gh = sfft.rfftn(self._padded(g))
        prod = (fh.real * gh.real + fh.imag * gh.imag) * self.rhat.real
        weights = np.full(prod.shape[-1], 2.0)
        weights[0] = 1.0
        if self.m % 2 == 0:
            weights[-1] = 1.0
        return float((prod * weights).sum() / self.m**3 * self.grid.cell_volume**2)


def _coulomb_values(h):
    def fn(dx, dy, dz):
        r = np.sqrt(dx**2 + dy**2 + dz**2)
        with np.errstate(divide="ignore"):
            v = 1.0 / r
        return np.where(r == 0, CELL_COULOMB / h, v)

    return fn


def _hardy_values(h):
    def fn(dx, dy, dz):
        r2 = dx**2 + dy**2 + dz**2
        with np.errstate(divide="ignore"):
            v = 1.0 / r2
        return np.where(r2 == 0, CELL_HARDY / h**2, v)

    return fn


@lru_cache(maxsize=16)
def coulomb_kernel(grid: Grid3D, pad: int = 2) -> FreeSpaceKernel:
    _check_resolution(grid)
    return FreeSpaceKernel.from_function(grid, _coulomb_values(grid.spacing), pad)


@lru_cache(maxsize=4)
def hardy_kernel(grid: Grid3D, pad: int = 2) -> FreeSpaceKernel:
    return FreeSpaceKernel.from_function(grid, _hardy_values(grid.spacing), pad)


def _check_resolution(grid: Grid3D) -> None:
    if grid.spacing >= grid.side / 4:
        raise ConfigurationError("grid too coarse for the Coulomb convolution")


def coulomb_potential(rho: np.ndarray, grid: Grid3D, pad: int = 2) -> np.ndarray:
    """V_rho = rho * 1/|x| on the grid (complex input allowed, e.g. pair densities)."""
    grid.check_field(rho)
    if not np.all(np.isfinite(rho)):
        raise UsageError("density contains non-finite values")
    return coulomb_kernel(grid, pad).apply(rho)


def pair_energy(rho: np.ndarray, sigma: np.ndarray, grid: Grid3D) -> float:
    """D(rho, sigma) = 1/2 int int rho(x) sigma(y) / |x - y|."""
    if rho.shape != sigma.shape:
        raise UsageError("densities live on different grids")
    grid.check_field(rho)
    return 0.5 * coulomb_kernel(grid).bilinear(np.asarray(rho, float), np.asarray(sigma, float))


def self_energy(rho: np.ndarray, grid: Grid3D) -> float:
    return pair_energy(rho, rho, grid)


def potential_at(rho: np.ndarray, grid: Grid3D, points: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Exact potential of the grid charge at arbitrary points by direct summation.

    Meant for points away from the support (far field); no cell averaging.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mask = rho != 0
    src = grid.points()[mask.ravel()]
    q = rho[mask] * grid.cell_volume
    out = np.empty(len(pts))
    for i in range(0, len(pts), chunk):
        p = pts[i : i + chunk]
        d = np.sqrt(((p[:, None, :] - src[None, :, :]) ** 2).sum(-1))
        out[i : i + chunk] = (q[None, :] / d).sum(1)
    return out


def hardy_diagnostic(rho: np.ndarray, grid: Grid3D) -> float:
    """sup_x int rho(y) / |x - y|^2 dy.

    Hardy plus the diamagnetic inequality bound this by four times the
    kinetic energy of any state with density ``rho``.
    """
    grid.check_field(rho)
    if not np.any(rho):
        return 0.0
    return float(hardy_kernel(grid).apply(np.asarray(rho, float)).max())
