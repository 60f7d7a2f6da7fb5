"""Far-field machinery for two well separated clusters.

Clusters are Hartree blocks cut off smoothly outside a ball of radius R and
recentred so that their dipole moment is (nearly) zero.  With the second
block translated by y, |y| = 3R, the residual interaction decays like
|y|^-3, with an amplitude set by the dipole functional L(y_hat, D).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .ansatz import HartreeProduct, SlaterDeterminant, energy
from .ansatz.states import lowdin
from .binding import half_mass_radius
from .coulomb import potential_at
from .errors import UsageError
from .grid import Grid3D, MagneticGauge
from .kinetic import magnetic_translate
from .ramp import smooth_ramp

CUTOFF_RADIUS_FACTOR = 4.0
MAX_DISCARDED_MASS = 1e-2
INNER_MASS_FRACTION = 0.75
MIN_INNER_MASS = 0.5
CALIBRATION_RATIO = 0.5
_EPS = np.finfo(float).eps


def cutoff_profile(r, R: float):
    """chi_R(x) = f(|x| - R) with f = 1 on (-inf, -1] and 0 on [0, inf)."""
    return 1.0 - smooth_ramp(2.0 * (np.asarray(r, float) - R) + 3.0)


def _orbitals(state):
    if isinstance(state, (HartreeProduct, SlaterDeterminant)):
        return state.orbitals
    raise UsageError(f"cutoffs need an orbital state, got {type(state).__name__}")


def _block_density(state) -> np.ndarray:
    return np.sum(np.abs(_orbitals(state)) ** 2, axis=0)


@dataclass(frozen=True, eq=False)
class CutoffState:
    """Normalized cutoff block phi = psi chi_R^(x)m / norm."""

    state: object
    R: float
    discarded: float
    shift: tuple = (0.0, 0.0, 0.0)

    @property
    def m(self) -> int:
        return self.state.N

    @property
    def grid(self) -> Grid3D:
        return self.state.grid

    @property
    def gauge(self) -> MagneticGauge:
        return self.state.gauge

    @property
    def phi(self) -> np.ndarray:
        return self.state.orbitals

    @property
    def rho(self) -> np.ndarray:
        return _block_density(self.state)

    def support_radius(self) -> float:
        mask = np.any(self.phi != 0, axis=0)
        return float(self.grid.radius[mask].max()) if mask.any() else 0.0


def smooth_cutoff(psi, R: float) -> CutoffState:
    """Multiply every particle coordinate by chi_R and renormalize."""
    orbs = _orbitals(psi)
    grid = psi.grid
    rho = _block_density(psi)
    r_half = half_mass_radius(rho, grid)
    if R < CUTOFF_RADIUS_FACTOR * r_half:
        raise UsageError(f"R = {R} is below {CUTOFF_RADIUS_FACTOR:g} x half-mass radius {r_half:.4g}")
    chi = cutoff_profile(grid.radius, R)
    if np.all(chi[np.any(orbs != 0, axis=0)] == 1.0):
        return CutoffState(psi, float(R), 0.0)
    cut = orbs * chi
    if isinstance(psi, SlaterDeterminant):
        # det(chi phi_i) spans the same space as its Lowdin orthonormalization
        kept = float(np.real(np.linalg.det(_gram(cut, grid))))
        new = psi.replace(np.concatenate([lowdin(cut[list(g)], grid) for g in psi.spin_groups()]))
    else:
        kept = float(np.prod(np.sum(np.abs(cut) ** 2, axis=(1, 2, 3)) * grid.cell_volume))
        new = psi.replace(cut)
    discarded = 1.0 - kept
    if discarded > MAX_DISCARDED_MASS:
        raise UsageError(f"cutoff at R = {R} discards mass {discarded:.3g} > {MAX_DISCARDED_MASS:g}")
    return CutoffState(new, float(R), max(discarded, 0.0))


def _gram(orbs, grid):
    flat = orbs.reshape(len(orbs), -1)
    return flat.conj() @ flat.T * grid.cell_volume


# -- moments -----------------------------------------------------------------


def moments(rho: np.ndarray, grid: Grid3D, mask=None):
    """(mass, first moment, second moment tensor) of rho, optionally restricted."""
    w = rho * grid.cell_volume
    if mask is not None:
        w = np.where(mask, w, 0.0)
    x, y, z = grid.coords
    xs = (x, y, z)
    m0 = float(w.sum())
    m1 = np.array([float((w * c).sum()) for c in xs])
    m2 = np.array([[float((w * a * b).sum()) for b in xs] for a in xs])
    return m0, m1, m2


def quadrupole_tensor(rho: np.ndarray, grid: Grid3D) -> np.ndarray:
    """Q with f(y_hat) = y_hat . Q y_hat = int rho (3 (y_hat.u)^2 - |u|^2) / 2."""
    _, _, m2 = moments(rho, grid)
    return 1.5 * m2 - 0.5 * np.trace(m2) * np.eye(3)


def quadrupole_f(c: CutoffState, y_hat) -> float:
    u = _unit(y_hat)
    return float(u @ quadrupole_tensor(c.rho, c.grid) @ u)


def dipole(c: CutoffState) -> np.ndarray:
    return moments(c.rho, c.grid)[1]


def recenter(c: CutoffState) -> CutoffState:
    """Grid translation (with magnetic phase) removing the dipole up to m spacing / 2."""
    grid = c.grid
    d = dipole(c)
    cells = grid.snap(d / c.m)
    if not np.any(cells):
        return c
    h = cells * grid.spacing
    try:
        orbs = np.array([magnetic_translate(o, h, grid, c.gauge) for o in c.phi])
    except UsageError as exc:
        raise UsageError(f"recentering leaves the box ({exc}); use a larger box") from None
    out = CutoffState(c.state.replace(orbs), c.R, c.discarded, tuple(np.add(c.shift, h)))
    if out.support_radius() > c.R:
        raise UsageError("support margin smaller than the dipole shift: use a larger box or R")
    return out


def _unit(v) -> np.ndarray:
    v = np.asarray(v, float).reshape(3)
    n = np.linalg.norm(v)
    if n == 0:
        raise UsageError("direction must be non-zero")
    return v / n


# -- Coulomb kernel expansion ------------------------------------------------


@dataclass(frozen=True)
class KernelExpansion:
    order0: float
    order1: float
    order2: float
    remainder: float

    @property
    def total(self) -> float:
        return self.order0 + self.order1 + self.order2


def kernel_expansion(w, y) -> KernelExpansion:
    """Second-order expansion of 1/|y - w| in w for |w| < |y|."""
    w = np.asarray(w, float).reshape(3)
    y = np.asarray(y, float).reshape(3)
    ny, nw = np.linalg.norm(y), np.linalg.norm(w)
    if nw >= ny:
        raise UsageError(f"|w| = {nw} must be smaller than |y| = {ny}")
    u = y / ny
    p = float(u @ w)
    o0 = 1.0 / ny
    o1 = p / ny**2
    o2 = (3 * p**2 - nw**2) / (2 * ny**3)
    return KernelExpansion(o0, o1, o2, 1.0 / np.linalg.norm(w - y) - (o0 + o1 + o2))


def calibrate_kernel_constant(ratio: float = CALIBRATION_RATIO, n_angles: int = 2001) -> float:
    """max |remainder| |y|^4 / |w|^3 at fixed |w|/|y|, over the angle between them.

    The normalized remainder depends only on the ratio and the angle, and is
    largest for w parallel to y, so one angular sweep fixes the constant for
    every ratio up to ``ratio``.
    """
    y = np.array([0.0, 0.0, 1.0])
    worst = 0.0
    for t in np.linspace(0.0, np.pi, n_angles):
        w = ratio * np.array([np.sin(t), 0.0, np.cos(t)])
        worst = max(worst, abs(kernel_expansion(w, y).remainder) / ratio**3)
    return worst


def remainder_bound(w, y, C: float) -> float:
    """C |w|^3 / |y|^4 plus a rounding allowance for the cancelling sum."""
    nw, ny = np.linalg.norm(w), np.linalg.norm(y)
    return C * nw**3 / ny**4 + 16 * _EPS / ny


def kernel_sample_check(n: int = 1000, seed: int = 0, max_ratio: float = CALIBRATION_RATIO, C=None):
    """Random (w, y) pairs with |w|/|y| <= max_ratio; rows (w, y, |remainder|, bound)."""
    C = calibrate_kernel_constant(max_ratio) if C is None else C
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        y = rng.standard_normal(3)
        y *= 10 ** rng.uniform(0, 3) / np.linalg.norm(y)
        w = rng.standard_normal(3)
        w *= rng.uniform(0, max_ratio) * np.linalg.norm(y) / np.linalg.norm(w)
        rows.append((w, y, abs(kernel_expansion(w, y).remainder), remainder_bound(w, y, C)))
    return C, rows


# -- far field ---------------------------------------------------------------


def far_field(c: CutoffState, y, z, d=None) -> float:
    """Expansion of V_rho(z - y) through order |y|^-3 for |z| <= d.

    Carries the residual dipole p of the block, which vanishes for an
    exactly centred block and leaves the monopole, point-charge and
    quadrupole terms.
    """
    z = np.asarray(z, float).reshape(3)
    y = np.asarray(y, float).reshape(3)
    if d is not None and np.linalg.norm(z) > d:
        raise UsageError(f"|z| = {np.linalg.norm(z)} exceeds d = {d}")
    m, p, m2 = moments(c.rho, c.grid)
    ny = np.linalg.norm(y)
    u = y / ny
    uz, up = u @ z, u @ p
    Q = 1.5 * m2 - 0.5 * np.trace(m2) * np.eye(3)
    second = 0.5 * m * (3 * uz**2 - z @ z) - 3 * uz * up + z @ p
    return float(m / ny + (m * uz - up) / ny**2 + (second + u @ Q @ u) / ny**3)


def far_field_exact(c: CutoffState, y, z) -> np.ndarray:
    """V_rho(z - y) of the grid charge by direct summation (z may be (k, 3))."""
    pts = np.atleast_2d(z) - np.asarray(y, float)
    return potential_at(c.rho, c.grid, pts)


def far_field_errors(c: CutoffState, R_values, y_hat=(0.0, 0.0, 1.0), d=None, n_samples=64, seed=0):
    """max |exact - expansion| over sample points z in B_d, for |y| = 3R."""
    d = default_inner_radius(c) if d is None else d
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_samples, 3))
    zs = v / np.linalg.norm(v, axis=1)[:, None] * d * rng.uniform(0, 1, (n_samples, 1)) ** (1 / 3)
    u = _unit(y_hat)
    out = []
    for R in R_values:
        y = 3 * R * u
        exact = far_field_exact(c, y, zs)
        approx = np.array([far_field(c, y, z, d) for z in zs])
        out.append(float(np.max(np.abs(exact - approx))))
    return out


@dataclass
class MultipoleReport:
    monopole: float
    dipole: np.ndarray
    quadrupole: np.ndarray
    remainder_bound_checks: list = field(default_factory=list)

    def quadrupole_f(self, y_hat) -> float:
        u = _unit(y_hat)
        return float(u @ self.quadrupole @ u)

    def to_dict(self) -> dict:
        return {
            "monopole": self.monopole,
            "dipole": [float(v) for v in self.dipole],
            "quadrupole": self.quadrupole.tolist(),
            "remainder_bound_checks": [
                {"w": list(map(float, w)), "y": list(map(float, y)), "error": float(e), "bound": float(b)}
                for w, y, e, b in self.remainder_bound_checks
            ],
        }


def multipole_report(c: CutoffState, n_checks: int = 1000, seed: int = 0) -> MultipoleReport:
    m, p, _ = moments(c.rho, c.grid)
    _, rows = kernel_sample_check(n_checks, seed)
    return MultipoleReport(m, p, quadrupole_tensor(c.rho, c.grid), rows)


# -- dipole functional -------------------------------------------------------


def _ball(grid: Grid3D, d: float) -> np.ndarray:
    return grid.radius <= d


def _block_mass_in_ball(c: CutoffState, d: float) -> float:
    dens = np.abs(c.phi) ** 2 * c.grid.cell_volume
    inside = _ball(c.grid, d)
    return float(np.prod([o[inside].sum() for o in dens]))


def default_inner_radius(*blocks, fraction: float = INNER_MASS_FRACTION) -> float:
    """Smallest grid radius d with at least ``fraction`` of every block's mass in B_d^m."""
    radii = np.unique(blocks[0].grid.radius)
    best = 0.0
    for c in blocks:
        lo, hi = 0, len(radii) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _block_mass_in_ball(c, radii[mid]) >= fraction:
                hi = mid
            else:
                lo = mid + 1
        best = max(best, float(radii[lo]))
    return best


def block_moments(c: CutoffState, d: float):
    """Moments of S = sum_i z_i under prod_i |phi_i(z_i)|^2 restricted to B_d^m."""
    inside = _ball(c.grid, d)
    W, mu, sig = 1.0, np.zeros(3), np.zeros((3, 3))
    for o in c.phi:
        m0, m1, m2 = moments(np.abs(o) ** 2, c.grid, inside)
        W, mu, sig = W * m0, mu * m0 + W * m1, sig * m0 + np.outer(mu, m1) + np.outer(m1, mu) + W * m2
    return W, mu, sig


def _check_inner_mass(blocks, d):
    mass = float(np.prod([_block_mass_in_ball(c, d) for c in blocks]))
    if mass < MIN_INNER_MASS:
        raise UsageError(f"B_d with d = {d} carries mass {mass:.3g} < {MIN_INNER_MASS}")
    return mass


@dataclass(frozen=True)
class DipoleFunctionalResult:
    y_hat: tuple
    D_opt: float
    L_min: float
    L_at_zero: float
    D: float
    L_at_D: float
    coefficients: tuple
    d: float

    def L(self, D: float) -> float:
        a0, a1, a2 = self.coefficients
        return a0 + 2 * a1 * D + a2 * D * D

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def dipole_L(c_k: CutoffState, c_nk: CutoffState, y_hat, d=None, D="optimal") -> DipoleFunctionalResult:
    """L(y_hat, D) = int_{B_d} |(sum_{i,j} z_i.z_j - 3 (z_i.y_hat)(z_j.y_hat) + D) phi_k phi_nk|^2.

    The kernel is S_a^T Q S_b with Q = I - 3 y_hat y_hat^T and S the summed
    coordinates of a block, so L is a quadratic in D with coefficients
    built from block moments.
    """
    u = _unit(y_hat)
    d = default_inner_radius(c_k, c_nk) if d is None else float(d)
    _check_inner_mass((c_k, c_nk), d)
    Q = np.eye(3) - 3 * np.outer(u, u)
    Wa, mua, sa = block_moments(c_k, d)
    Wb, mub, sb = block_moments(c_nk, d)
    a0 = float(np.trace(Q @ sb @ Q @ sa))
    a1 = float(mua @ Q @ mub)
    a2 = Wa * Wb
    D_opt = -a1 / a2
    L_min = max(a0 - a1 * a1 / a2, 0.0)
    D_val = D_opt if isinstance(D, str) and D == "optimal" else float(D)
    res = DipoleFunctionalResult(tuple(u), D_opt, L_min, a0, D_val, 0.0, (a0, a1, a2), d)
    return DipoleFunctionalResult(tuple(u), D_opt, L_min, a0, D_val, res.L(D_val), (a0, a1, a2), d)


def _sample_points(c: CutoffState, inside, n, rng):
    pts = c.grid.points()[inside.ravel()]
    out = np.zeros((n, 3))
    for o in c.phi:
        w = (np.abs(o) ** 2)[inside]
        out += pts[rng.choice(len(w), size=n, p=w / w.sum())]
    return out


def dipole_L_monte_carlo(c_k, c_nk, y_hat, d=None, D="optimal", n=1_000_000, seed=0):
    """Independent estimate of L by sampling the restricted densities; (value, std error)."""
    u = _unit(y_hat)
    d = default_inner_radius(c_k, c_nk) if d is None else float(d)
    if isinstance(D, str):
        D = dipole_L(c_k, c_nk, u, d).D_opt
    rng = np.random.default_rng(seed)
    inside = _ball(c_k.grid, d)
    scale = _block_mass_in_ball(c_k, d) * _block_mass_in_ball(c_nk, d)
    sa = _sample_points(c_k, inside, n, rng)
    sb = _sample_points(c_nk, inside, n, rng)
    f = np.einsum("ij,ij->i", sa, sb) - 3 * (sa @ u) * (sb @ u) + D
    g = f * f
    return float(scale * g.mean()), float(scale * g.std(ddof=1) / np.sqrt(n))


SPHERE_DIRECTIONS = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)], float
)


def dipole_floor(c_k, c_nk, d=None, directions=SPHERE_DIRECTIONS) -> float:
    """min over the 26 lattice directions of inf_D L(y_hat, D)."""
    return min(dipole_L(c_k, c_nk, u, d).L_min for u in directions)


# -- interaction norm --------------------------------------------------------


@dataclass
class ScalingReport:
    R: list
    y_norm: list
    norm: list
    L_min: list
    ratio: list
    slope_running: list
    slope: float
    M: list
    C_yM: list
    cancellation: list
    d: float
    M_policy: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "y_norm", "norm", "L_min", "ratio", "slope_running"])
        for row in zip(self.R, self.y_norm, self.norm, self.L_min, self.ratio, self.slope_running):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _single_orbital(c: CutoffState):
    if not isinstance(c.state, HartreeProduct) or c.m != 1:
        raise UsageError("interaction_norm_scan supports one-particle blocks")


def interaction_terms(c_k: CutoffState, c_nk: CutoffState, y, d: float):
    """J_k tilde on B_d x B_d and the restricted product weights (k = 1, N = 2)."""
    grid = c_k.grid
    inside = _ball(grid, d)
    pts = grid.points()[inside.ravel()]
    wa = (np.abs(c_k.phi[0]) ** 2)[inside] * grid.cell_volume
    wb = (np.abs(c_nk.phi[0]) ** 2)[inside] * grid.cell_volume
    y = np.asarray(y, float)
    Vb = potential_at(c_nk.rho, grid, pts + y)
    Va = potential_at(c_k.rho, grid, pts - y)
    J = 1.0 / np.linalg.norm(pts[:, None, :] - pts[None, :, :] + y, axis=-1) - Vb[:, None] - Va[None, :]
    return J, wa, wb


def interaction_norm(c_k, c_nk, y, d, M="optimal"):
    """||(J_k tilde + M) phi_k (x) phi_nk chi_{B_d}|| and the M used."""
    J, wa, wb = interaction_terms(c_k, c_nk, y, d)
    w = wa[:, None] * wb[None, :]
    if isinstance(M, str):
        M = -float((w * J).sum() / w.sum())
    return float(np.sqrt((w * (J + M) ** 2).sum())), float(M), J


def interaction_norm_scan(psi_k, psi_nk, R_values, M_policy="optimal", y_hat=(0.0, 0.0, 1.0), d=None):
    """||I_R chi_{B_d}|| for |y| = 3R, blocks cut off at each R and recentred."""
    R_values = [float(r) for r in R_values]
    if len(R_values) < 3:
        raise UsageError("need at least three R values")
    if any(b <= a for a, b in zip(R_values, R_values[1:])):
        raise UsageError("R values must be increasing")
    if not (isinstance(M_policy, str) and M_policy == "optimal"):
        M_policy = float(M_policy)
    u = _unit(y_hat)
    k, nk = 1, 1
    rows = {key: [] for key in ("y", "norm", "L", "M", "C", "cancel")}
    for R in R_values:
        a = recenter(smooth_cutoff(psi_k, R))
        b = recenter(smooth_cutoff(psi_nk, R))
        _single_orbital(a)
        _single_orbital(b)
        if d is None:
            d = default_inner_radius(a, b)
        _check_inner_mass((a, b), d)
        ny = 3 * R
        norm, M, J = interaction_norm(a, b, ny * u, d, M_policy)
        L = dipole_L(a, b, u, d)
        C = -nk * quadrupole_f(a, u) - k * quadrupole_f(b, u) - k * nk * ny**2 + M * ny**3
        rows["y"].append(ny)
        rows["norm"].append(norm)
        rows["L"].append(L.L_min)
        rows["M"].append(M)
        rows["C"].append(float(C))
        rows["cancel"].append(float(np.max(np.abs(J + k * nk / ny)) * ny**3))
    logR, logn = np.log(R_values), np.log(rows["norm"])
    running = [float("nan")] + [float((logn[i] - logn[i - 1]) / (logR[i] - logR[i - 1])) for i in range(1, len(logR))]
    slope = float(np.polyfit(logR, logn, 1)[0])
    ratio = [n * y**3 / np.sqrt(L) if L > 0 else float("inf") for n, y, L in zip(rows["norm"], rows["y"], rows["L"])]
    return ScalingReport(
        R_values, rows["y"], rows["norm"], rows["L"], ratio, running, slope,
        rows["M"], rows["C"], rows["cancel"], float(d), "optimal" if isinstance(M_policy, str) else "fixed",
    )


def recenter_energy_shift(c: CutoffState, alpha: float) -> float:
    """|E(recentred) - E(original)|, a covariance diagnostic."""
    return abs(energy(recenter(c).state, alpha).total - energy(c.state, alpha).total)
