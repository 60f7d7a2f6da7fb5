"""Smooth partitions of unity and the IMS localization identity.

j1 = cos(pi S / 2), j2 = sin(pi S / 2) with S the shared smooth ramp in
t = (|x| - R_eps) eps, so j1 = 1 on B(0, R_eps + 1/eps) and j1 = 0 outside
B(0, R_eps + 3/eps).  Products J_a = prod_i j_{a_i}(x_i) are kept factorized.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
import numpy as np
from scipy.spatial import cKDTree

from .ansatz import HartreeProduct, SlaterDeterminant
from .coulomb import coulomb_kernel
from .errors import UsageError
from .grid import Grid3D
from .kinetic import apply_kinetic_raw
from .ramp import RAMP_SLOPE, smooth_ramp, smooth_ramp_derivative
from .scf import EffectiveHamiltonian, expectation

SUPPORT_LEVEL = 1e-14


@dataclass(frozen=True, eq=False)
class PartitionPair:
    j1: np.ndarray
    j2: np.ndarray
    grad_sq: tuple
    epsilon: float
    R_eps: float
    derivative_sup: float
    grid: Grid3D

    def sum_squares_error(self) -> float:
        return float(np.max(np.abs(self.j1**2 + self.j2**2 - 1.0)))

    def measured_gradient_sup(self) -> tuple[float, float]:
        """max |grad j| by central differences on the grid."""
        h = self.grid.spacing
        return tuple(float(np.sqrt(sum(g**2 for g in np.gradient(j, h))).max()) for j in (self.j1, self.j2))

    def factor(self, label: int) -> np.ndarray:
        return self.j1 if label == 1 else self.j2


def build_pair(epsilon: float, R_eps: float, grid: Grid3D) -> PartitionPair:
    if epsilon <= 0 or R_eps < 0:
        raise UsageError("epsilon must be positive and R_eps non-negative")
    if grid.periodic_z:
        raise UsageError("radial partitions need a grid closed in every direction")
    if R_eps + 3.0 / epsilon >= 0.5 * (grid.n - 1) * grid.spacing:
        raise UsageError(f"R_eps + 3/eps = {R_eps + 3.0 / epsilon:.4g} does not fit inside the box")
    t = (grid.radius - R_eps) * epsilon
    s = smooth_ramp(t)
    j1 = np.cos(0.5 * np.pi * s)
    j2 = np.sin(0.5 * np.pi * s)
    j1[s == 0.0], j2[s == 0.0] = 1.0, 0.0
    j1[s == 1.0], j2[s == 1.0] = 0.0, 1.0
    # |grad j1| = (pi / 2) S'(t) eps |sin|, |grad j2| = (pi / 2) S'(t) eps |cos|
    slope = 0.5 * np.pi * smooth_ramp_derivative(t) * epsilon
    grad_sq = ((slope * j2) ** 2, (slope * j1) ** 2)
    return PartitionPair(j1, j2, grad_sq, float(epsilon), float(R_eps), 0.5 * np.pi * RAMP_SLOPE * epsilon, grid)


@dataclass(frozen=True, eq=False)
class ProductPartition:
    """J_a(x_1..x_N) = prod_i j_{a_i}(x_i) for labels a in {1,2}^N."""

    pair: PartitionPair
    N: int

    @property
    def labels(self):
        return list(itertools.product((1, 2), repeat=self.N))

    def factors(self, label) -> tuple:
        return tuple(self.pair.factor(b) for b in label)

    def sum_squares_error(self) -> float:
        # sum_a J_a^2 = prod_i (j1^2 + j2^2)(x_i): one factor decides it
        return self.pair.sum_squares_error()

    def gradient_bound(self) -> float:
        return self.N * max(self.pair.measured_gradient_sup())


def trivial_pair(grid: Grid3D) -> PartitionPair:
    one = np.ones(grid.shape)
    zero = np.zeros(grid.shape)
    return PartitionPair(one, zero, (zero, zero), 0.0, float("inf"), 0.0, grid)


# -- IMS identity ------------------------------------------------------------


@dataclass
class _LabelBlocks:
    S: np.ndarray
    H: np.ndarray
    G: np.ndarray
    L: np.ndarray
    n: np.ndarray
    V: np.ndarray


def lattice_localization(phi, j, grid, gauge) -> np.ndarray:
    """-[j, [j, T]] phi / 2, the lattice counterpart of |grad j|^2 phi.

    Its kernel is -(j(x) - j(y))^2 T(x, y) / 2, so sum_b j_b T j_b equals
    T minus the sum of these operators exactly when sum_b j_b^2 = 1.
    """
    t = lambda f: apply_kinetic_raw(f, grid, gauge)  # noqa: E731
    return -0.5 * (j * j * t(phi) - 2 * j * t(j * phi) + t(j * j * phi))


def _blocks(orbs, mask, j, grad_sq, H: EffectiveHamiltonian, kernel) -> _LabelBlocks:
    g = H.grid
    u = orbs * j
    N = len(orbs)
    w = g.cell_volume
    flat = u.reshape(N, -1)
    S = flat.conj() @ flat.T * w
    hu = np.array([apply_kinetic_raw(x, g, H.gauge) - H.alpha * H.V_sigma * x for x in u])
    Hm = flat.conj() @ hu.reshape(N, -1).T * w
    of = orbs.reshape(N, -1)
    G = of.conj() @ (of * grad_sq.ravel()).T * w
    lo = np.array([lattice_localization(x, j, g, H.gauge) for x in orbs])
    L = of.conj() @ lo.reshape(N, -1).T * w
    n = V = None
    if N > 1:
        n = np.conj(u)[:, None] * u[None, :]
        V = np.array([[kernel.apply(n[p, q]) for q in range(N)] for p in range(N)])
    return _LabelBlocks(S * mask, Hm * mask, G * mask, L * mask, n, V)


def _perms(state):
    N = state.N
    if isinstance(state, HartreeProduct):
        return [(tuple(range(N)), 1.0)]
    out = []
    for p in itertools.permutations(range(N)):
        inv = sum(1 for i in range(N) for k in range(i + 1, N) if p[i] > p[k])
        out.append((p, -1.0 if inv % 2 else 1.0))
    return out


def _label_terms(label, blocks, mask, perms, offset, grid):
    """<J_a Psi, H J_a Psi> and the analytic and lattice localization terms.

    Determinants are expanded over bra and ket permutations; a product state
    has the identity permutation only.
    """
    N = len(label)
    h3 = grid.cell_volume
    norm = 1.0 / len(perms) if len(perms) > 1 else 1.0
    wcache = {}

    def w(i, p, q, k, r, s):
        key = (label[i], p, q, label[k], r, s)
        if key not in wcache:
            if mask[p, q] == 0 or mask[r, s] == 0:
                wcache[key] = 0.0
            else:
                bi, bk = blocks[label[i]], blocks[label[k]]
                wcache[key] = complex(np.sum(bi.n[p, q] * bk.V[r, s]) * h3)
        return wcache[key]

    e_total, g_total, l_total = 0.0 + 0j, 0.0 + 0j, 0.0 + 0j
    for bra, sb in perms:
        for ket, sk in perms:
            s = [blocks[label[i]].S[bra[i], ket[i]] for i in range(N)]
            if N > 1 and sum(1 for v in s if v == 0) > 2:
                continue

            def others(*skip):
                return np.prod([s[l] for l in range(N) if l not in skip])

            e = offset * others()
            gr = lt = 0.0
            for i in range(N):
                b = blocks[label[i]]
                rest = others(i)
                e += b.H[bra[i], ket[i]] * rest
                gr += b.G[bra[i], ket[i]] * rest
                lt += b.L[bra[i], ket[i]] * rest
            for i in range(N):
                for k in range(i + 1, N):
                    e += w(i, bra[i], ket[i], k, bra[k], ket[k]) * others(i, k)
            e_total += sb * sk * e
            g_total += sb * sk * gr
            l_total += sb * sk * lt
    return tuple(float((norm * v).real) for v in (e_total, g_total, l_total))


@dataclass
class IMSResult:
    reference: float
    localized: float
    residual: float
    relative: float
    lattice_residual: float
    per_label: dict

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "localized": self.localized,
            "residual": self.residual,
            "relative": self.relative,
            "lattice_residual": self.lattice_residual,
            "per_label": {"".join(map(str, k)): list(v) for k, v in self.per_label.items()},
        }


def ims_identity_check(H: EffectiveHamiltonian, state, partition: ProductPartition) -> IMSResult:
    """|<Psi,H Psi> - sum_a (<J_a Psi, H J_a Psi> - <Psi, |grad J_a|^2 Psi>)|."""
    if not isinstance(state, (HartreeProduct, SlaterDeterminant)):
        raise UsageError("the IMS check needs a factorized (Hartree or Slater) state")
    if partition.N != state.N:
        raise UsageError(f"partition has {partition.N} particles, state has {state.N}")
    if partition.pair.grid != state.grid:
        raise UsageError("partition and state live on different grids")
    orbs = state.orbitals
    N = state.N
    if isinstance(state, SlaterDeterminant):
        sp = np.asarray(state.spins)
        mask = (sp[:, None] == sp[None, :]).astype(float)
    else:
        mask = np.ones((N, N))
    kernel = coulomb_kernel(state.grid) if N > 1 else None
    pair = partition.pair
    blocks = {b: _blocks(orbs, mask, pair.factor(b), pair.grad_sq[b - 1], H, kernel) for b in (1, 2)}
    perms = _perms(state)
    ref = expectation(H, state)
    per_label, total, lattice = {}, 0.0, 0.0
    for label in partition.labels:
        if any(not np.any(pair.factor(b)) for b in label):
            continue
        e, g, lt = _label_terms(label, blocks, mask, perms, H.offset, state.grid)
        per_label[label] = (e, g, lt)
        total += e - g
        lattice += e - lt
    res = abs(ref - total)
    rel = res / abs(ref) if ref else res
    return IMSResult(float(ref), float(total), float(res), float(rel), float(abs(ref - lattice)), per_label)


# -- supports ----------------------------------------------------------------


def _support_points(f, grid: Grid3D, level: float) -> np.ndarray:
    return grid.points()[(np.abs(f) > level).ravel()]


def support_distance(a, b, grid: Grid3D, level: float = SUPPORT_LEVEL) -> float:
    """Distance between the grid supports of two fields; +inf if either is empty."""
    pa, pb = _support_points(a, grid, level), _support_points(b, grid, level)
    if len(pa) == 0 or len(pb) == 0:
        return float("inf")
    d, _ = cKDTree(pb).query(pa, k=1)
    return float(d.min())


def support_distance_check(pair: PartitionPair, rho_parts, epsilon: float) -> tuple[bool, bool]:
    """dist(supp rho_i, supp j_{3-i}) >= 1/eps for i = 1, 2."""
    rho1, rho2 = rho_parts
    d1 = support_distance(rho1, pair.j2, pair.grid)
    d2 = support_distance(rho2, pair.j1, pair.grid, level=0.0)
    limit = 1.0 / epsilon * (1 - 1e-12)
    return d1 >= limit, d2 >= limit
