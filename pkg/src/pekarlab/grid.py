"""Uniform cubic grids and the constant magnetic field.

Units are those of the energy functional with hbar = 2m = e = 1 and unit
Coulomb repulsion, so the kinetic operator is (-i grad + A)^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, UsageError

BOUNDARY_MASS_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Grid3D:
    """Cell-centred cubic grid of ``n`` points per axis, centred on the origin.

    ``periodic_z`` closes the z axis (the field axis); all other axes carry
    zero Dirichlet exterior values.
    """

    n: int
    spacing: float
    periodic_z: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ConfigurationError(f"n_per_dim must be an integer >= 8, got {self.n}")
        if not np.isfinite(self.spacing) or self.spacing <= 0:
            raise ConfigurationError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def side(self) -> float:
        return self.n * self.spacing

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - 0.5 * (self.n - 1)) * self.spacing

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (x, y, z), indexing 'ij'."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.coords
        return np.sqrt(x**2 + y**2 + z**2)

    def points(self) -> np.ndarray:
        """All grid points as an (n^3, 3) array, x-fastest order is NOT used here."""
        x, y, z = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def integrate(self, f: np.ndarray) -> float | complex:
        """Midpoint rule with weight spacing^3."""
        return f.sum() * self.cell_volume

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return np.vdot(f, g) * self.cell_volume

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.vdot(f, f).real * self.cell_volume))

    def check_field(self, f: np.ndarray) -> None:
        if f.shape[:3] != self.shape:
            raise UsageError(f"field shape {f.shape} does not match grid {self.shape}")

    def boundary_shell_fraction(self, f: np.ndarray, width: int = 2) -> float:
        """Fraction of sum |f|^2 within ``width`` cells of a Dirichlet face."""
        w = np.abs(f) ** 2
        total = w.sum()
        if total == 0:
            return 0.0
        inner = w.copy()
        sl = slice(width, self.n - width)
        if self.periodic_z:
            inner = inner[sl, sl, :]
        else:
            inner = inner[sl, sl, sl]
        return float((total - inner.sum()) / total)

    def snap(self, h) -> np.ndarray:
        """Nearest grid translation vector, in cells."""
        return np.rint(np.asarray(h, dtype=float) / self.spacing).astype(int)


@dataclass(frozen=True)
class MagneticGauge:
    """Constant field ``B`` in the symmetric gauge A(x) = B x x / 2."""

    B: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        b = tuple(float(v) for v in np.asarray(self.B, dtype=float).reshape(3))
        if not all(np.isfinite(b)):
            raise ConfigurationError(f"field must be finite, got {self.B}")
        object.__setattr__(self, "B", b)

    @classmethod
    def along_z(cls, bz: float) -> "MagneticGauge":
        return cls((0.0, 0.0, float(bz)))

    @property
    def strength(self) -> float:
        return float(np.linalg.norm(self.B))

    @property
    def is_zero(self) -> bool:
        return self.B == (0.0, 0.0, 0.0)

    def vector_potential(self, x: np.ndarray) -> np.ndarray:
        """A at points ``x`` of shape (..., 3)."""
        return 0.5 * np.cross(np.asarray(self.B), np.asarray(x, dtype=float))

    def check_grid(self, grid: Grid3D) -> None:
        if grid.periodic_z and (self.B[0] != 0.0 or self.B[1] != 0.0):
            raise ConfigurationError("periodic_z requires the field to point along z")
