"""Linearized Hamiltonian and the outer self-consistent iteration.

For a fixed density sigma the operator

    H_sigma = sum_j (D_A^2 - alpha V_sigma)(x_j) + sum_{i<j} |x_i - x_j|^-1 + alpha D(sigma)

dominates the functional, <Psi, H_sigma Psi> - E(Psi) = alpha D(sigma - rho_Psi),
so alternating a decrease of <Psi, H_sigma Psi> with sigma <- rho_Psi can only
lower the energy.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .ansatz import density
from .ansatz.core import _energy, check_alpha, one_and_two_body
from .ansatz.pair import pair_kernels, pair_linearized
from .ansatz.states import HartreeProduct, PairCorrelated, PairFactor, SlaterDeterminant, TwoBodyFull
from .ansatz.twobody import apply_two_body
from .coulomb import coulomb_potential, self_energy
from .errors import ConfigurationError, UsageError
from .grid import Grid3D, MagneticGauge
from .kinetic import apply_kinetic_raw

MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class ScfConfig:
    outer_tol: float = 1e-6
    inner_tol: float = 1e-6
    max_outer: int = 200
    max_inner: int = 50
    mixing: float = 0.7
    imaginary_time_step: float = 1.0

    def __post_init__(self):
        for name in ("outer_tol", "inner_tol", "max_outer", "max_inner", "imaginary_time_step"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0 < self.mixing <= 1:
            raise ConfigurationError("mixing must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    sigma: np.ndarray
    V_sigma: np.ndarray
    offset: float
    alpha: float
    gauge: MagneticGauge
    grid: Grid3D


@dataclass
class ScfReport:
    energy_trace: list
    density_residuals: list
    el_residual: float
    lagrange_multiplier: float
    offset: float
    converged: bool
    state: object = field(default=None, repr=False)
    expectation_trace: list = field(default_factory=list)
    inner_failures: int = 0
    config: ScfConfig | None = None
    inner_residual: float = float("nan")

    @property
    def energy(self) -> float:
        return self.energy_trace[-1].total

    def to_dict(self) -> dict:
        return {
            "energy_trace": [e.to_dict() for e in self.energy_trace],
            "density_residuals": list(self.density_residuals),
            "lambda": self.lagrange_multiplier,
            "offset": self.offset,
            "el_residual": self.el_residual,
            "converged": self.converged,
            "inner_failures": self.inner_failures,
            "inner_residual": self.inner_residual,
            "config_echo": asdict(self.config) if self.config else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_linearized(sigma: np.ndarray, alpha: float, gauge: MagneticGauge, grid: Grid3D, N: int | None = None):
    """Operator data of H_sigma; ``N`` (if given) must match the charge of sigma."""
    grid.check_field(sigma)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise UsageError("sigma must be non-negative")
    q = grid.integrate(sigma)
    if N is not None and abs(q - N) > 1e-8:
        raise UsageError(f"sigma integrates to {q}, expected {N}")
    v = coulomb_potential(sigma, grid)
    return EffectiveHamiltonian(sigma, v, alpha * self_energy(sigma, grid), float(alpha), gauge, grid)


def expectation(H: EffectiveHamiltonian, state) -> float:
    kin, rep, _, rho = one_and_two_body(state)
    return kin + rep - H.alpha * H.grid.integrate(H.V_sigma * rho) + H.offset


# -- shared linear algebra -------------------------------------------------


def kinetic_symbol(grid: Grid3D) -> np.ndarray:
    """Fourier symbol of the (field-free) discrete Laplacian stencil."""
    h = grid.spacing
    th = 2 * np.pi * np.fft.fftfreq(grid.n)
    s1 = (2.5 - (8.0 / 3.0) * np.cos(th) + (1.0 / 6.0) * np.cos(2 * th)) / h**2
    return s1[:, None, None] + s1[None, :, None] + s1[None, None, :]


def preconditioner(grid: Grid3D, shift: float, dims: int = 3):
    sym = kinetic_symbol(grid)
    if dims == 6:
        sym = sym[..., None, None, None] + sym[None, None, None]
    inv = 1.0 / (sym + shift)
    axes = tuple(range(dims))

    def apply(r):
        return sfft.ifftn(sfft.fftn(r, axes=axes) * inv, axes=axes)

    return apply


def _project(v, constraints, w):
    for c in constraints:
        v = v - c * (np.vdot(c, v) * w)
    return v


def rr_step(x, ax, op, prec, p, constraints, w):
    """One locally optimal (LOBPCG-type) step for the lowest Rayleigh quotient.

    ``x`` is normalized and orthogonal to ``constraints``; ``ax = op(x)``.
    Returns (x, ax, p, lam, residual_norm).
    """
    lam = float(np.vdot(x, ax).real * w)
    r = _project(ax - lam * x, constraints, w)
    rnorm = float(np.sqrt(np.vdot(r, r).real * w))
    basis = [x]
    for v in (prec(r), p):
        if v is None:
            continue
        v = _project(v, constraints + [x], w)
        nv = np.sqrt(np.vdot(v, v).real * w)
        if nv > 1e-300:
            basis.append(v / nv)
    if len(basis) == 1:
        return x, ax, None, lam, rnorm
    images = [ax] + [op(b) for b in basis[1:]]
    flat = np.array([b.ravel() for b in basis])
    aflat = np.array([a.ravel() for a in images])
    s = (flat.conj() @ flat.T) * w
    hm = (flat.conj() @ aflat.T) * w
    hm = 0.5 * (hm + hm.conj().T)
    ev, u = np.linalg.eigh(s)
    keep = ev > 1e-10 * ev.max()
    t = u[:, keep] / np.sqrt(ev[keep])
    mu, y = np.linalg.eigh(t.conj().T @ hm @ t)
    c = t @ y[:, 0]
    if mu[0] > lam:
        return x, ax, None, lam, rnorm
    xn = (c @ flat).reshape(x.shape)
    axn = (c @ aflat).reshape(x.shape)
    nrm = np.sqrt(np.vdot(xn, xn).real * w)
    xn, axn = xn / nrm, axn / nrm
    pn = xn - x * (np.vdot(x, xn) * w)
    return xn, axn, pn, float(mu[0]), rnorm


# -- inner minimizers --------------------------------------------------------


@dataclass
class InnerResult:
    state: object
    gradient_norm: float
    iterations: int
    failed: bool = False


def _orbital_operator(H, orbitals, pots, j, same_spin):
    g = H.grid
    v = -H.alpha * H.V_sigma
    for i, pot in enumerate(pots):
        if i != j:
            v = v + pot
    others = [orbitals[i] for i in same_spin if i != j]

    def op(psi):
        out = apply_kinetic_raw(psi, g, H.gauge) + v * psi
        for phi in others:
            out -= phi * coulomb_potential(np.conj(phi) * psi, g)
        return out

    return op


def _orbital_inner(H, state, cfg) -> InnerResult:
    g = H.grid
    w = g.cell_volume
    orb = state.orbitals.copy()
    N = len(orb)
    slater = isinstance(state, SlaterDeterminant)
    groups = state.spin_groups() if slater else {}
    same = [groups[state.spins[j]] if slater else [j] for j in range(N)]
    pots = [coulomb_potential(np.abs(phi) ** 2, g) for phi in orb] if N > 1 else [0.0]
    dirs = [None] * N
    images = [None] * N
    precs = []
    for phi in orb:
        kin = g.inner(phi, apply_kinetic_raw(phi, g, H.gauge)).real
        precs.append(preconditioner(g, max(kin, 1e-3)))
    gnorm = np.inf
    it = 0
    for it in range(1, cfg.max_inner + 1):
        res2 = 0.0
        for j in range(N):
            op = _orbital_operator(H, orb, pots, j, same[j])
            cons = [orb[i] for i in same[j] if i != j]
            # with one orbital the operator is fixed and op(x) can be reused
            ax = images[j] if N == 1 and images[j] is not None else op(orb[j])
            x, images[j], dirs[j], _, rn = rr_step(orb[j], ax, op, precs[j], dirs[j], cons, w)
            orb[j] = x
            if N > 1:
                pots[j] = coulomb_potential(np.abs(x) ** 2, g)
            res2 += rn**2
        gnorm = np.sqrt(res2)
        # every step rejected: the Rayleigh quotients sit at rounding level
        stalled = all(d is None for d in dirs)
        if gnorm < cfg.inner_tol or stalled:
            break
    new = state.replace(orb)
    return InnerResult(new, float(gnorm), it, not (gnorm < cfg.inner_tol or stalled))


def _two_body_inner(H, state, cfg) -> InnerResult:
    g = H.grid
    w = g.cell_volume**2

    def op(psi):
        return apply_two_body(psi, g, H.gauge, H.V_sigma, H.alpha)

    x = state.psi
    ax = op(x)
    kin = np.vdot(x, ax).real * w
    prec = preconditioner(g, max(abs(kin), 1e-2), dims=6)
    p = None
    rn = np.inf
    it = 0
    for it in range(1, cfg.max_inner + 1):
        x, ax, p, _, rn = rr_step(x, ax, op, prec, p, [], w)
        if rn < cfg.inner_tol or p is None:
            break
    return InnerResult(TwoBodyFull(x, g, state.gauge), float(rn), it, not (rn < cfg.inner_tol or p is None))


def _norm(g, f):
    return np.sqrt(np.vdot(f, f).real * g.cell_volume)


def _pair_factor_step(H, state, value, step=0.1):
    """Finite-difference descent on (c, log w) with an expanding line search."""
    g = H.grid
    pair = state.pair
    phi = state.orbital

    def f(c, lw):
        if c >= 0.98 or c <= -2.0:
            return np.inf
        K = pair_kernels(g, H.gauge, PairFactor(c, float(np.exp(lw)), pair.table))
        return pair_linearized(phi, K, H.V_sigma, H.alpha, H.offset, gradient=False)[0]

    x0 = np.array([pair.c, np.log(pair.w)])
    d = 1e-4
    grad = np.array([(f(*(x0 + d * e)) - f(*(x0 - d * e))) / (2 * d) for e in np.eye(2)])
    if not np.all(np.isfinite(grad)) or not np.any(grad):
        return state, value
    u = -grad / np.linalg.norm(grad)
    t, best, best_t = step, value, 0.0
    for _ in range(16):
        v = f(*(x0 + t * u))
        if v < best:
            best, best_t = v, t
            t *= 2.0
        elif best_t > 0:
            break
        else:
            t *= 0.5
    if best_t == 0:
        return state, value
    c1, lw1 = x0 + best_t * u
    return state.replace(pair=PairFactor(float(c1), float(np.exp(lw1)), pair.table)), best


def _pair_inner(H, state, cfg, optimize_pair=True) -> InnerResult:
    g = H.grid
    K = pair_kernels(state)
    phi = state.orbital
    f, G = pair_linearized(phi, K, H.V_sigma, H.alpha, H.offset)
    kin = max(abs(f), 1e-3)
    prec = preconditioner(g, kin)
    tau = cfg.imaginary_time_step
    d_prev = None
    pg_prev = None
    gn = np.inf
    failed = False
    it = 0
    for it in range(1, cfg.max_inner + 1):
        gn = _norm(g, G)
        if gn < cfg.inner_tol:
            break
        pg = prec(G)
        d = -pg
        if d_prev is not None:
            beta = max(0.0, np.vdot(G, pg - pg_prev).real / np.vdot(G_prev, pg_prev).real)
            d = d + beta * d_prev
            if np.vdot(G, d).real >= 0:
                d = -pg
        for _ in range(40):
            trial = phi + tau * d
            trial /= _norm(g, trial)
            ft, Gt = pair_linearized(trial, K, H.V_sigma, H.alpha, H.offset)
            if ft <= f:
                break
            tau *= 0.5
        else:
            failed = True
            break
        phi, f, G_prev, G, pg_prev, d_prev = trial, ft, G, Gt, pg, d
        tau *= 1.5
    new = state.replace(orbital=phi)
    if optimize_pair:
        new, _ = _pair_factor_step(H, new, f)
    return InnerResult(new, float(gn), it, failed or not gn < cfg.inner_tol)


def _inner(H, start, cfg) -> InnerResult:
    if isinstance(start, (HartreeProduct, SlaterDeterminant)):
        return _orbital_inner(H, start, cfg)
    if isinstance(start, PairCorrelated):
        return _pair_inner(H, start, cfg)
    if isinstance(start, TwoBodyFull):
        return _two_body_inner(H, start, cfg)
    raise UsageError(f"unknown ansatz {type(start).__name__}")


def inner_minimize(H: EffectiveHamiltonian, start, cfg: ScfConfig = ScfConfig()):
    """Decrease <Psi, H Psi> on the ansatz manifold starting from ``start``."""
    start.check_normalized()
    return _inner(H, start, cfg).state


# -- outer loop ----------------------------------------------------------------


def outer_scf(start, alpha: float, cfg: ScfConfig = ScfConfig()) -> ScfReport:
    """sigma_{n+1} = (1 - m) sigma_n + m rho_{Psi_{n+1}} until the density settles."""
    check_alpha(alpha)
    start.check_normalized()
    g = start.grid
    state = start
    sigma = density(state)
    trace = [_energy(state, alpha)]
    residuals = []
    expect = []
    failures = 0
    converged = False
    for _ in range(cfg.max_outer):
        H = build_linearized(sigma, alpha, state.gauge, g)
        res = _inner(H, state, cfg)
        failures += res.failed
        state = res.state
        expect.append(expectation(H, state))
        rho = density(state)
        new_sigma = (1.0 - cfg.mixing) * sigma + cfg.mixing * rho
        change = float(np.abs(new_sigma - sigma).sum() * g.cell_volume)
        sigma = new_sigma
        residuals.append(change)
        trace.append(_energy(state, alpha))
        # a truncated inner solve also leaves sigma almost unchanged, so the
        # last linearized problem must itself be solved to inner_tol
        if change < cfg.outer_tol and not res.failed:
            converged = True
            break
    lam, el = euler_lagrange_residual(state, alpha)
    off = alpha * self_energy(density(state), g)
    return ScfReport(trace, residuals, el, lam, off, converged, state, expect, failures, cfg, res.gradient_norm)


def euler_lagrange_residual(state, alpha: float) -> tuple[float, float]:
    """(lambda, residual) at sigma = rho_Psi.

    lambda is the multiplier of the nonlinear equation, <Psi, H_rho Psi>
    minus the offset alpha D(rho); the residual is the norm of the
    projected gradient on the family's tangent space (orbital variations
    for product, Slater and pair states, the full space for two-body states).
    """
    state.check_normalized()
    g = state.grid
    rho = density(state)
    H = build_linearized(rho, alpha, state.gauge, g)
    lam = expectation(H, state) - H.offset
    w = g.cell_volume
    if isinstance(state, (HartreeProduct, SlaterDeterminant)):
        orb = state.orbitals
        N = len(orb)
        slater = isinstance(state, SlaterDeterminant)
        groups = state.spin_groups() if slater else {}
        pots = [coulomb_potential(np.abs(phi) ** 2, g) for phi in orb]
        total = 0.0
        for j in range(N):
            same = groups[state.spins[j]] if slater else [j]
            op = _orbital_operator(H, orb, pots, j, same)
            r = op(orb[j])
            occ = [orb[i] for i in same]
            r = _project(r, occ, w)
            total += np.vdot(r, r).real * w
        return float(lam), float(np.sqrt(total))
    if isinstance(state, PairCorrelated):
        K = pair_kernels(state)
        _, G = pair_linearized(state.orbital, K, H.V_sigma, alpha, H.offset)
        return float(lam), float(_norm(g, G))
    psi = state.psi
    hpsi = apply_two_body(psi, g, state.gauge, H.V_sigma, alpha) + H.offset * psi
    r = hpsi - (lam + H.offset) * psi
    return float(lam), float(np.sqrt(np.vdot(r, r).real * w * w))
