"""Variational N-body families.

Every state is an immutable value on a grid with a gauge.  Orbital families
store a stack of orbitals of shape (N, n, n, n); the pair-correlated family
stores one orbital and a pair factor; the full two-body family stores the
six-dimensional array psi(x1, x2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..grid import Grid3D, MagneticGauge

NORM_TOL = 1e-10


def lowdin(orbitals: np.ndarray, grid: Grid3D) -> np.ndarray:
    """Symmetric (Loewdin) orthonormalization of a stack of orbitals."""
    flat = orbitals.reshape(len(orbitals), -1)
    s = (flat.conj() @ flat.T) * grid.cell_volume
    w, u = np.linalg.eigh(s)
    if w.min() <= 1e-14 * max(w.max(), 1e-300):
        raise UsageError("orbitals are linearly dependent")
    s_inv_half = (u / np.sqrt(w)) @ u.conj().T
    return (s_inv_half.T @ flat).reshape(orbitals.shape)


@dataclass(frozen=True, eq=False)
class HartreeProduct:
    """phi_1 (x) ... (x) phi_N, no symmetry (boltzons)."""

    orbitals: np.ndarray
    grid: Grid3D
    gauge: MagneticGauge = field(default_factory=MagneticGauge)

    variant = "hartree"

    @classmethod
    def from_orbitals(cls, orbitals, grid, gauge=None) -> "HartreeProduct":
        orb = np.array(orbitals, dtype=complex, ndmin=4)
        norms = np.sqrt(np.sum(np.abs(orb) ** 2, axis=(1, 2, 3)) * grid.cell_volume)
        if np.any(norms == 0):
            raise UsageError("zero orbital")
        return cls(orb / norms[:, None, None, None], grid, gauge or MagneticGauge())

    @property
    def N(self) -> int:
        return len(self.orbitals)

    def check_normalized(self):
        norms = np.sum(np.abs(self.orbitals) ** 2, axis=(1, 2, 3)) * self.grid.cell_volume
        if np.max(np.abs(norms - 1)) > NORM_TOL:
            raise UsageError("state is not normalized")

    def replace(self, orbitals) -> "HartreeProduct":
        return HartreeProduct.from_orbitals(orbitals, self.grid, self.gauge)


@dataclass(frozen=True, eq=False)
class SlaterDeterminant:
    """Antisymmetrized product of spin orbitals.

    ``spins[j]`` in ``range(q)`` is the spin label of spatial orbital j;
    orbitals sharing a label are kept orthonormal.
    """

    orbitals: np.ndarray
    spins: tuple
    q: int
    grid: Grid3D
    gauge: MagneticGauge = field(default_factory=MagneticGauge)

    variant = "slater"

    @classmethod
    def from_orbitals(cls, orbitals, grid, gauge=None, q: int = 2, spins=None) -> "SlaterDeterminant":
        orb = np.array(orbitals, dtype=complex, ndmin=4)
        if q < 1:
            raise UsageError("spin multiplicity q must be >= 1")
        if spins is None:
            spins = tuple(j % q for j in range(len(orb)))
        spins = tuple(int(s) for s in spins)
        if len(spins) != len(orb) or any(not 0 <= s < q for s in spins):
            raise UsageError("invalid spin labels")
        out = orb.copy()
        for s in set(spins):
            idx = [j for j in range(len(orb)) if spins[j] == s]
            out[idx] = lowdin(orb[idx], grid)
        return cls(out, spins, q, grid, gauge or MagneticGauge())

    @property
    def N(self) -> int:
        return len(self.orbitals)

    def spin_groups(self):
        groups = {}
        for j, s in enumerate(self.spins):
            groups.setdefault(s, []).append(j)
        return groups

    def check_normalized(self):
        flat = self.orbitals.reshape(self.N, -1)
        s = (flat.conj() @ flat.T) * self.grid.cell_volume
        same = np.equal.outer(self.spins, self.spins)
        if np.max(np.abs(np.where(same, s - np.eye(self.N), 0))) > NORM_TOL:
            raise UsageError("Slater orbitals are not orthonormal")

    def replace(self, orbitals) -> "SlaterDeterminant":
        return SlaterDeterminant.from_orbitals(orbitals, self.grid, self.gauge, self.q, self.spins)


@dataclass(frozen=True)
class PairFactor:
    """g(z) = 1 - c exp(-|z|^2 / (2 w^2)) + t(|z|).

    ``table`` is an optional radial correction (r_knots, values), linearly
    interpolated and zero beyond the last knot.  g is even, bounded and
    must stay positive.
    """

    c: float = 0.0
    w: float = 1.0
    table: tuple | None = None

    def __post_init__(self):
        if not self.w > 0:
            raise UsageError("pair factor width must be positive")
        if self.c >= 1.0 and self.table is None:
            raise UsageError("pair factor must stay positive (c < 1)")

    def __call__(self, dx, dy, dz):
        r2 = dx**2 + dy**2 + dz**2
        g = 1.0 - self.c * np.exp(-r2 / (2.0 * self.w**2))
        if self.table is not None:
            knots, vals = (np.asarray(t, float) for t in self.table)
            g = g + np.interp(np.sqrt(r2), knots, vals, right=0.0)
        return g

    def key(self):
        tab = None if self.table is None else tuple(map(tuple, np.asarray(self.table, float)))
        return (float(self.c), float(self.w), tab)


@dataclass(frozen=True, eq=False)
class PairCorrelated:
    """psi(x1, x2) = phi(x1) phi(x2) g(x1 - x2), normalized implicitly (N = 2)."""

    orbital: np.ndarray
    pair: PairFactor
    grid: Grid3D
    gauge: MagneticGauge = field(default_factory=MagneticGauge)

    variant = "pair"
    N = 2

    @classmethod
    def from_orbital(cls, orbital, pair, grid, gauge=None) -> "PairCorrelated":
        if grid.periodic_z:
            raise UsageError("pair-correlated states need a Dirichlet box")
        phi = np.array(orbital, dtype=complex)
        phi /= grid.norm(phi)
        return cls(phi, pair, grid, gauge or MagneticGauge())

    def check_normalized(self):
        if abs(self.grid.norm(self.orbital) - 1) > NORM_TOL:
            raise UsageError("pair orbital is not normalized")

    def replace(self, orbital=None, pair=None) -> "PairCorrelated":
        return PairCorrelated.from_orbital(
            self.orbital if orbital is None else orbital,
            self.pair if pair is None else pair,
            self.grid,
            self.gauge,
        )


@dataclass(frozen=True, eq=False)
class TwoBodyFull:
    """Unrestricted two-particle wavefunction on grid x grid (N = 2)."""

    psi: np.ndarray
    grid: Grid3D
    gauge: MagneticGauge = field(default_factory=MagneticGauge)

    variant = "twobody"
    N = 2

    @classmethod
    def from_array(cls, psi, grid, gauge=None) -> "TwoBodyFull":
        arr = np.array(psi, dtype=complex)
        if arr.shape != grid.shape * 2:
            raise UsageError("two-body array must have shape grid x grid")
        arr /= np.sqrt(np.sum(np.abs(arr) ** 2) * grid.cell_volume**2)
        return cls(arr, grid, gauge or MagneticGauge())

    @classmethod
    def from_pair(cls, state: PairCorrelated) -> "TwoBodyFull":
        g = state.grid
        phi = state.orbital
        x = g.points()
        gz = state.pair(*(x[:, None, k] - x[None, :, k] for k in range(3)))
        flat = phi.ravel()[:, None] * phi.ravel()[None, :] * gz
        return cls.from_array(flat.reshape(g.shape * 2), g, state.gauge)

    @classmethod
    def from_product(cls, phi1, phi2, grid, gauge=None) -> "TwoBodyFull":
        return cls.from_array(np.multiply.outer(phi1, phi2), grid, gauge)

    def check_normalized(self):
        if abs(np.sum(np.abs(self.psi) ** 2) * self.grid.cell_volume**2 - 1) > NORM_TOL:
            raise UsageError("two-body state is not normalized")


AnsatzState = HartreeProduct | SlaterDeterminant | PairCorrelated | TwoBodyFull


def gaussian_orbital(grid: Grid3D, width: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Normalized real Gaussian whose density has standard deviation ``width``."""
    x, y, z = grid.coords
    c = np.asarray(center, float)
    r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
    phi = np.exp(-r2 / (4.0 * width**2)).astype(complex)
    return phi / grid.norm(phi)
