"""Exact discrete evaluation of the pair-correlated family.

For psi(x1, x2) = phi(x1) phi(x2) g(x1 - x2) every term of the functional
reduces to three-dimensional convolutions.  With a = |phi|^2 and one
kernel k_s(z) = g(z) g(z + s) per stencil hop s, the hop term of particle 1
is

    sum_x conj(phi)(x) c_s(x) phi(x + s) (a * k_s)(x) h^3,

which is the six-dimensional finite-difference form restricted to the
family, so the results agree with the full two-body evaluation to rounding.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..coulomb import FreeSpaceKernel, _coulomb_values, coulomb_potential, self_energy
from ..kinetic import _expand, shifted, stencil
from .states import PairCorrelated, PairFactor


class PairKernels:
    """Convolution kernels of one pair factor on one grid and gauge."""

    def __init__(self, grid, gauge, pair: PairFactor):
        self.grid = grid
        self.gauge = gauge
        self.pair = pair
        self.terms = stencil(grid, gauge)
        h = grid.spacing
        self.hop = {}
        for off, _ in self.terms:
            sx, sy, sz = (h * k for k in off)
            self.hop[off] = FreeSpaceKernel.from_function(
                grid, lambda dx, dy, dz, sx=sx, sy=sy, sz=sz: pair(dx, dy, dz) * pair(dx + sx, dy + sy, dz + sz)
            ).compact()
        coul = _coulomb_values(h)
        self.g2w = FreeSpaceKernel.from_function(grid, lambda dx, dy, dz: pair(dx, dy, dz) ** 2 * coul(dx, dy, dz)).compact()

    @property
    def g2(self) -> FreeSpaceKernel:
        return self.hop[(0, 0, 0)]


@lru_cache(maxsize=2)
def _cached_kernels(grid, gauge, key):
    c, w, tab = key
    table = None if tab is None else tuple(np.array(t) for t in tab)
    return PairKernels(grid, gauge, PairFactor(c, w, table))


def pair_kernels(state_or_grid, gauge=None, pair=None) -> PairKernels:
    if isinstance(state_or_grid, PairCorrelated):
        s = state_or_grid
        return _cached_kernels(s.grid, s.gauge, s.pair.key())
    return _cached_kernels(state_or_grid, gauge, pair.key())


def _hops(phi, K):
    """Per-hop products b_s = conj(phi) c_s phi(. + s)."""
    pz = K.grid.periodic_z
    return [(off, np.conj(phi) * _expand(c, 3) * shifted(phi, off, pz)) for off, c in K.terms]


def pair_terms(phi: np.ndarray, K: PairKernels) -> dict:
    """Unnormalized moments of psi = phi phi g.

    ``norm`` = ||psi||^2, ``kinetic`` = <psi, (D1^2 + D2^2) psi>,
    ``repulsion`` = <psi, |x1 - x2|^-1 psi>, ``rho`` = unnormalized density.
    """
    grid = K.grid
    a = np.abs(phi) ** 2
    # one transform of a serves every hop kernel
    A = K.g2.spectrum(a)
    offs = [off for off, _ in K.terms]
    stacked = K.g2.from_spectrum(np.stack([A * K.hop[off].rhat for off in offs] + [A * K.g2w.rhat]))
    conv = dict(zip(offs, stacked[:-1]))
    rep_pot = stacked[-1]
    norm = grid.integrate(a * conv[(0, 0, 0)])
    kin = 0.0
    for off, b in _hops(phi, K):
        kin += grid.integrate(b * conv[off]).real
    rep = grid.integrate(a * rep_pot)
    return {
        "a": a,
        "conv": conv,
        "rep_pot": rep_pot,
        "norm": float(norm),
        "kinetic": 2.0 * float(kin),
        "repulsion": float(rep),
        "rho": 2.0 * a * conv[(0, 0, 0)],
    }


def pair_energy_terms(state: PairCorrelated, alpha: float):
    """(kinetic, repulsion, attraction, density) of the normalized state."""
    K = pair_kernels(state)
    t = pair_terms(state.orbital, K)
    nrm = t["norm"]
    rho = t["rho"] / nrm
    return t["kinetic"] / nrm, t["repulsion"] / nrm, alpha * self_energy(rho, state.grid), rho


def pair_linearized(phi, K: PairKernels, v_sigma, alpha, offset=0.0, gradient=True):
    """F(phi) = <psi, H_sigma psi> / ||psi||^2 and dF / d conj(phi).

    The derivative G satisfies F(phi + e d) = F(phi) + 2 e Re<G, d> + O(e^2).
    """
    grid = K.grid
    t = pair_terms(phi, K)
    nrm = t["norm"]
    u = grid.integrate(v_sigma * t["rho"])
    num = t["kinetic"] + t["repulsion"] - alpha * u
    value = num / nrm + offset
    if not gradient:
        return value, None
    a, conv = t["a"], t["conv"]
    pz = grid.periodic_z
    g1 = np.zeros_like(phi)
    hops = _hops(phi, K)
    for (off, c), (_, b) in zip(K.terms, hops):
        g1 += _expand(c, 3) * shifted(phi, off, pz) * conv[off]
    # sum_s k_{-s} * b_s, accumulated in Fourier space
    B = K.g2.spectrum(np.stack([f(b) for _, b in hops for f in (np.real, np.imag)]))
    acc = np.zeros((2,) + B.shape[1:], dtype=B.dtype)
    for i, (off, _) in enumerate(K.terms):
        kh = K.hop[tuple(-k for k in off)].rhat
        acc[0] += B[2 * i] * kh
        acc[1] += B[2 * i + 1] * kh
    re, im = K.g2.from_spectrum(acc)
    g2 = re + 1j * im
    d_kin = 2.0 * (g1 + phi * g2)
    d_norm = 2.0 * phi * conv[(0, 0, 0)]
    d_rep = 2.0 * phi * t["rep_pot"]
    d_u = 2.0 * (v_sigma * phi * conv[(0, 0, 0)] + phi * K.g2.apply(v_sigma * a))
    grad = (d_kin + d_rep - alpha * d_u - (num / nrm) * d_norm) / nrm
    return value, grad


def pair_true_energy(phi, K: PairKernels, alpha, gradient=True):
    """True energy of psi = phi phi g and its derivative in conj(phi)."""
    t = pair_terms(phi, K)
    rho = t["rho"] / t["norm"]
    v = coulomb_potential(rho, K.grid)
    d = 0.5 * K.grid.integrate(rho * v)
    value, grad = pair_linearized(phi, K, v, alpha, alpha * d, gradient)
    return value, grad
