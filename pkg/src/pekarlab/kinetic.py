"""Magnetic kinetic operator (-i grad + A)^2 and magnetic translations.

The Laplacian is the fourth-order centred stencil.  The magnetic field
enters through Peierls phases on every hop: a hop from x to x + s carries
exp(i A(x + s/2) . s), the exact line integral of a linear A.  This keeps
the operator Hermitian and makes magnetic translations by grid vectors an
exact symmetry of the discrete operator.
"""
from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np

from .errors import BoundaryMassWarning, UsageError
from .grid import BOUNDARY_MASS_THRESHOLD, Grid3D, MagneticGauge

# 4th-order coefficients of -d^2/dx^2 (times h^2) for hops 0, +-1, +-2
_DIAG = 2.5
_HOPS = {1: -4.0 / 3.0, 2: 1.0 / 12.0}


def vector_potential_fields(grid: Grid3D, gauge: MagneticGauge):
    """Components (A_x, A_y, A_z) as broadcastable arrays on the grid."""
    x, y, z = grid.coords
    bx, by, bz = gauge.B
    return (
        0.5 * (by * z - bz * y),
        0.5 * (bz * x - bx * z),
        0.5 * (bx * y - by * x),
    )


@lru_cache(maxsize=32)
def stencil(grid: Grid3D, gauge: MagneticGauge):
    """Hopping representation of the discrete operator.

    Returns a list of ``(offset, coef)`` with ``offset`` an integer 3-tuple
    and ``coef`` a scalar or (n, n, n) array such that
    ``(D_A^2 psi)(x) = sum coef(x) psi(x + offset)``.
    """
    gauge.check_grid(grid)
    h = grid.spacing
    terms = [((0, 0, 0), 3.0 * _DIAG / h**2)]
    amps = vector_potential_fields(grid, gauge)
    for axis in range(3):
        a = np.broadcast_to(amps[axis], grid.shape)
        for j, c in _HOPS.items():
            for sign in (1, -1):
                off = [0, 0, 0]
                off[axis] = sign * j
                if gauge.B[(axis + 1) % 3] == 0 and gauge.B[(axis + 2) % 3] == 0:
                    coef = c / h**2
                else:
                    coef = (c / h**2) * np.exp(1j * sign * j * h * a)
                terms.append((tuple(off), coef))
    return terms


def shifted(f: np.ndarray, offset, periodic_z: bool = False) -> np.ndarray:
    """g(x) = f(x + offset) on the first three axes, zero outside the box."""
    out = f
    for axis, k in enumerate(offset):
        if k == 0:
            continue
        if axis == 2 and periodic_z:
            out = np.roll(out, -k, axis=2)
            continue
        res = np.zeros_like(out)
        src = [slice(None)] * out.ndim
        dst = [slice(None)] * out.ndim
        if k > 0:
            src[axis], dst[axis] = slice(k, None), slice(None, -k)
        else:
            src[axis], dst[axis] = slice(None, k), slice(-k, None)
        res[tuple(dst)] = out[tuple(src)]
        out = res
    return out


def _expand(coef, ndim):
    if np.isscalar(coef) or np.ndim(coef) == 0:
        return coef
    return coef.reshape(coef.shape + (1,) * (ndim - 3))


def apply_kinetic_raw(psi: np.ndarray, grid: Grid3D, gauge: MagneticGauge) -> np.ndarray:
    """D_A^2 acting on the first three axes of ``psi`` (no diagnostics)."""
    out = None
    for off, coef in stencil(grid, gauge):
        term = _expand(coef, psi.ndim) * (psi if off == (0, 0, 0) else shifted(psi, off, grid.periodic_z))
        out = term if out is None else out + term
    return out


def apply_kinetic(psi: np.ndarray, grid: Grid3D, gauge: MagneticGauge) -> np.ndarray:
    """D_A^2 psi with a warning when psi has not decayed at the boundary."""
    grid.check_field(psi)
    frac = grid.boundary_shell_fraction(psi)
    if frac > BOUNDARY_MASS_THRESHOLD:
        warnings.warn(
            f"boundary-shell mass fraction {frac:.2e} exceeds {BOUNDARY_MASS_THRESHOLD:g}",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return apply_kinetic_raw(psi, grid, gauge)


def kinetic_energy(psi: np.ndarray, grid: Grid3D, gauge: MagneticGauge) -> float:
    """<psi, D_A^2 psi> (not normalized)."""
    return float(grid.inner(psi, apply_kinetic_raw(psi, grid, gauge)).real)


def magnetic_translate(psi: np.ndarray, h, grid: Grid3D, gauge: MagneticGauge) -> np.ndarray:
    """(T_h psi)(x) = exp(i A(h).x) psi(x + h), h snapped to the grid.

    Raises UsageError if part of the support would leave the box.
    """
    grid.check_field(psi)
    k = grid.snap(h)
    hv = k * grid.spacing
    n = grid.n
    for axis in range(3):
        if k[axis] == 0 or (axis == 2 and grid.periodic_z):
            continue
        idx = [slice(None)] * psi.ndim
        # indices of psi that map outside: j - k outside [0, n)
        idx[axis] = slice(0, k[axis]) if k[axis] > 0 else slice(n + k[axis], n)
        if np.any(psi[tuple(idx)] != 0):
            raise UsageError(f"translation by {hv} moves support out of the box")
    out = shifted(psi, tuple(int(v) for v in k), grid.periodic_z)
    if gauge.is_zero or not np.any(k):
        return out
    ah = gauge.vector_potential(hv)
    x, y, z = grid.coords
    phase = np.exp(1j * (ah[0] * x + ah[1] * y + ah[2] * z))
    return out * _expand(phase, psi.ndim)
