"""Direct evaluation on grid x grid for two particles (oracle family)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..coulomb import _coulomb_values, self_energy
from ..errors import UsageError
from ..kinetic import apply_kinetic_raw
from .states import TwoBodyFull

MAX_TWO_BODY_N = 16


@lru_cache(maxsize=4)
def repulsion_matrix(grid) -> np.ndarray:
    """W[i, j] = 1/|x_i - x_j| with the cell average on the diagonal."""
    if grid.n > MAX_TWO_BODY_N:
        raise UsageError(f"two-body grids are limited to n <= {MAX_TWO_BODY_N}")
    x = grid.points()
    d = [x[:, None, k] - x[None, :, k] for k in range(3)]
    return _coulomb_values(grid.spacing)(*d)


def _swap(psi):
    return psi.transpose(3, 4, 5, 0, 1, 2)


def apply_two_body_kinetic(psi, grid, gauge) -> np.ndarray:
    out = apply_kinetic_raw(psi, grid, gauge)
    return out + _swap(apply_kinetic_raw(_swap(psi), grid, gauge))


def apply_two_body(psi, grid, gauge, v_ext=None, alpha=0.0) -> np.ndarray:
    """(D1^2 + D2^2 + W - alpha V(x1) - alpha V(x2)) psi."""
    n3 = grid.n**3
    out = apply_two_body_kinetic(psi, grid, gauge)
    out += (repulsion_matrix(grid) * psi.reshape(n3, n3)).reshape(psi.shape)
    if v_ext is not None:
        v = v_ext.ravel()
        out -= alpha * ((v[:, None] + v[None, :]) * psi.reshape(n3, n3)).reshape(psi.shape)
    return out


def two_body_density(state: TwoBodyFull) -> np.ndarray:
    g = state.grid
    n3 = g.n**3
    p = (np.abs(state.psi) ** 2).reshape(n3, n3)
    return ((p.sum(1) + p.sum(0)) * g.cell_volume).reshape(g.shape)


def two_body_energy_terms(state: TwoBodyFull, alpha: float):
    g = state.grid
    w6 = g.cell_volume**2
    psi = state.psi
    kin = float(np.vdot(psi, apply_two_body_kinetic(psi, g, state.gauge)).real * w6)
    n3 = g.n**3
    rep = float(np.sum(np.abs(psi.reshape(n3, n3)) ** 2 * repulsion_matrix(g)) * w6)
    rho = two_body_density(state)
    return kin, rep, alpha * self_energy(rho, g), rho
