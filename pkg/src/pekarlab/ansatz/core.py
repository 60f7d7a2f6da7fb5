"""Densities, energies and block products for all ansatz families."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ..coulomb import coulomb_potential, pair_energy, self_energy
from ..errors import NumericalError, UsageError
from ..kinetic import apply_kinetic_raw
from .pair import pair_energy_terms, pair_kernels, pair_terms
from .states import HartreeProduct, PairCorrelated, SlaterDeterminant, TwoBodyFull
from .twobody import two_body_density, two_body_energy_terms

DENSITY_TOL = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    repulsion: float
    attraction: float
    total: float
    alpha: float
    form_norm_sq: float

    def to_dict(self) -> dict:
        return asdict(self)


def check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        warnings.warn(
            f"alpha = {alpha} lies outside [0, 1]; the model requires 0 < alpha < 1 for stability",
            UserWarning,
            stacklevel=3,
        )


def density(state) -> np.ndarray:
    """rho_Psi on the grid, integrating to N."""
    state.check_normalized()
    if isinstance(state, (HartreeProduct, SlaterDeterminant)):
        rho = np.sum(np.abs(state.orbitals) ** 2, axis=0)
    elif isinstance(state, PairCorrelated):
        t = pair_terms(state.orbital, pair_kernels(state))
        rho = t["rho"] / t["norm"]
    elif isinstance(state, TwoBodyFull):
        rho = two_body_density(state)
    else:
        raise UsageError(f"unknown ansatz {type(state).__name__}")
    if abs(state.grid.integrate(rho) - state.N) > DENSITY_TOL:
        raise NumericalError("density does not integrate to N")
    return rho


def orbital_terms(state):
    """(kinetic, repulsion) of an orbital family."""
    g = state.grid
    kin = 0.0
    for phi in state.orbitals:
        kin += g.inner(phi, apply_kinetic_raw(phi, g, state.gauge)).real
    dens = np.abs(state.orbitals) ** 2
    rep = 0.0
    for i in range(state.N):
        for j in range(i + 1, state.N):
            rep += 2.0 * pair_energy(dens[i], dens[j], g)
    if isinstance(state, SlaterDeterminant):
        rep -= exchange_energy(state)
    return float(kin), float(rep)


def exchange_integral(phi_i, phi_j, grid) -> float:
    """int int n(x) conj(n(y)) / |x - y| with n = conj(phi_i) phi_j."""
    n = np.conj(phi_i) * phi_j
    return float(grid.integrate(np.conj(n) * coulomb_potential(n, grid)).real)


def exchange_energy(state: SlaterDeterminant) -> float:
    total = 0.0
    for grp in state.spin_groups().values():
        for a, i in enumerate(grp):
            for j in grp[a + 1 :]:
                total += exchange_integral(state.orbitals[i], state.orbitals[j], state.grid)
    return total


def one_and_two_body(state, alpha: float = 0.0):
    """(kinetic, repulsion, attraction, density) of a normalized state."""
    if isinstance(state, (HartreeProduct, SlaterDeterminant)):
        rho = density(state)
        kin, rep = orbital_terms(state)
        return kin, rep, alpha * self_energy(rho, state.grid), rho
    state.check_normalized()
    if isinstance(state, PairCorrelated):
        return pair_energy_terms(state, alpha)
    if isinstance(state, TwoBodyFull):
        return two_body_energy_terms(state, alpha)
    raise UsageError(f"unknown ansatz {type(state).__name__}")


def energy(state, alpha: float) -> EnergyBreakdown:
    """Full functional with a term-by-term breakdown."""
    check_alpha(alpha)
    return _energy(state, alpha)


def _energy(state, alpha: float) -> EnergyBreakdown:
    if isinstance(state, SlaterDeterminant):
        state.check_normalized()
    kin, rep, att, _ = one_and_two_body(state, alpha)
    vals = (kin, rep, att)
    if not all(np.isfinite(vals)):
        raise NumericalError("non-finite energy term")
    # ||Psi||_Q^2 = <Psi, (sum D^2 + 1) Psi>
    return EnergyBreakdown(kin, rep, att, kin + rep - att, float(alpha), kin + 1.0)


def product_pair_terms(state: HartreeProduct, alpha: float) -> list[float]:
    """(1 - alpha) 2 D(|phi_i|^2, |phi_j|^2) for every pair of a product state."""
    dens = np.abs(state.orbitals) ** 2
    return [
        (1.0 - alpha) * 2.0 * pair_energy(dens[i], dens[j], state.grid)
        for i in range(state.N)
        for j in range(i + 1, state.N)
    ]


def _as_slater(block):
    if isinstance(block, SlaterDeterminant):
        return block.orbitals, block.spins, block.q
    if isinstance(block, HartreeProduct):
        return block.orbitals, (0,) * block.N, 1
    raise UsageError("blocks must be Hartree or Slater states")


def antisymmetrize_product(block_k, block_nk) -> SlaterDeterminant:
    """Antisymmetrized product of two blocks with disjoint supports."""
    if block_k.grid != block_nk.grid or block_k.gauge != block_nk.gauge:
        raise UsageError("blocks live on different grids or gauges")
    oa, sa, qa = _as_slater(block_k)
    ob, sb, qb = _as_slater(block_nk)
    supp_a = np.any(oa != 0, axis=0)
    supp_b = np.any(ob != 0, axis=0)
    if np.any(supp_a & supp_b):
        raise UsageError("block supports overlap")
    return SlaterDeterminant.from_orbitals(
        np.concatenate([oa, ob]), block_k.grid, block_k.gauge, max(qa, qb), sa + sb
    )
