"""Energy tables, binding energies, parameter scans and decay fits.

Table entries are ansatz upper bounds.  Splitting a cluster into two parts
that are moved infinitely far apart costs nothing in the limit, so every
entry is reported as min(E_scf^N, min_k E^k + E^{N-k}); the raw SCF value
is kept alongside.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .ansatz import HartreeProduct, PairCorrelated, PairFactor, SlaterDeterminant, TwoBodyFull, density
from .ansatz.states import gaussian_orbital
from .errors import UsageError
from .grid import Grid3D, MagneticGauge
from .scf import ScfConfig, outer_scf

FAMILIES = ("hartree", "slater", "pair", "twobody")
BINDING_FACTOR = 3.0


@dataclass
class EnergyTable:
    alpha: float
    B: tuple
    energies: list
    scf_energies: list
    converged: list
    tags: list
    el_residuals: list
    reports: list = field(default_factory=list, repr=False)

    @property
    def reliable(self) -> bool:
        return all(self.converged)


@dataclass
class BindingRecord:
    N: int
    alpha: float
    B: tuple
    energies: list
    delta_E: float
    argmin_k: int
    ansatz_tags: list
    converged: list
    bound: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScanResult:
    axis: str
    values: list
    points: list
    concavity_violations: int
    threshold_estimate: float | None = None
    second_differences: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "values": list(self.values),
            "points": [p.to_dict() for p in self.points],
            "concavity_violations": self.concavity_violations,
            "threshold_estimate": self.threshold_estimate,
            "second_differences": self.second_differences,
        }


@dataclass
class DecayFit:
    beta: float
    fit_window: tuple
    r_squared: float
    delta_E_ref: float
    shortfall: bool
    radii: np.ndarray = field(repr=False, default=None)
    log_density: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared,
            "delta_E_ref": self.delta_E_ref,
            "sqrt_delta_E": float(np.sqrt(max(self.delta_E_ref, 0.0))),
            "shortfall": self.shortfall,
        }


# -- starts ------------------------------------------------------------------


def start_state(family: str, N: int, grid: Grid3D, gauge: MagneticGauge, seed: int, width: float):
    """Deterministic start of a family; seed 0 is the centred symmetric start."""
    if family not in FAMILIES:
        raise UsageError(f"unknown ansatz tag {family!r}")
    if family in ("pair", "twobody") and N != 2:
        raise UsageError(f"{family} states exist only for N = 2")
    rng = np.random.default_rng(seed)
    spread = 0.0 if seed == 0 else 0.5 * width
    orbs = []
    for _ in range(N):
        c = rng.normal(0.0, spread, 3) if spread else np.zeros(3)
        w = width * (1.0 if seed == 0 else rng.uniform(0.8, 1.2))
        phi = gaussian_orbital(grid, w, c)
        if seed:
            phi = phi * (1 + 0.05 * rng.standard_normal(grid.shape))
        orbs.append(phi)
    if family == "hartree":
        return HartreeProduct.from_orbitals(orbs, grid, gauge)
    if family == "slater":
        return SlaterDeterminant.from_orbitals(orbs, grid, gauge)
    if family == "pair":
        return PairCorrelated.from_orbital(orbs[0], PairFactor(0.3, width), grid, gauge)
    return TwoBodyFull.from_product(orbs[0], orbs[1], grid, gauge)


def default_family(N: int) -> str:
    return "hartree"


# -- tables ------------------------------------------------------------------


def solve_best(family, N, alpha, grid, gauge, cfg, seeds=(0, 1, 2), width=4.0):
    """Best (lowest energy) of several seeded outer_scf runs."""
    best = None
    for seed in seeds:
        rep = outer_scf(start_state(family, N, grid, gauge, seed, width), alpha, cfg)
        if best is None or rep.energy < best.energy:
            best = rep
    return best


def energy_table(
    N_max: int,
    alpha: float,
    B,
    grid: Grid3D,
    families: dict | None = None,
    cfg: ScfConfig = ScfConfig(),
    seeds=(0, 1, 2),
    width: float = 4.0,
) -> EnergyTable:
    """E^m for m = 1..N_max with the split closure applied."""
    gauge = MagneticGauge(B)
    families = families or {}
    chosen = [families.get(m, default_family(m)) for m in range(1, N_max + 1)]
    for m, fam in enumerate(chosen, start=1):
        if fam not in FAMILIES:
            raise UsageError(f"unknown ansatz tag {fam!r}")
        if m == 1 and fam not in ("hartree", "slater"):
            raise UsageError("N = 1 uses the Hartree family")
        if m >= 3 and fam not in ("hartree", "slater"):
            raise UsageError("N >= 3 supports only Hartree and Slater families")
    scf, conv, tags, res, reps = [], [], [], [], []
    for m, fam in enumerate(chosen, start=1):
        rep = solve_best(fam, m, alpha, grid, gauge, cfg, seeds, width)
        scf.append(rep.energy)
        conv.append(bool(rep.converged))
        tags.append(fam)
        res.append(rep.el_residual)
        reps.append(rep)
    return EnergyTable(float(alpha), gauge.B, split_closure(scf), scf, conv, tags, res, reps)


def split_closure(energies) -> list:
    """E^N <- min(E^N, min_k E^k + E^{N-k}), built up in N."""
    out = []
    for m, e in enumerate(energies, start=1):
        best = e
        for k in range(1, m):
            best = min(best, out[k - 1] + out[m - k - 1])
        out.append(float(best))
    return out


def binding_energy(energies) -> tuple[float, int]:
    """Delta E = min_k (E^k + E^{N-k}) - E^N and the minimizing k."""
    e = list(energies)
    N = len(e)
    if N < 2 or any(v is None or not np.isfinite(v) for v in e):
        raise UsageError("binding energy needs a complete finite table E^1..E^N")
    splits = [e[k - 1] + e[N - k - 1] for k in range(1, N)]
    k = int(np.argmin(splits)) + 1
    return float(splits[k - 1] - e[N - 1]), k


def binding_record(table: EnergyTable, tol: float) -> BindingRecord:
    de, k = binding_energy(table.energies)
    return BindingRecord(
        len(table.energies),
        table.alpha,
        table.B,
        table.energies,
        de,
        k,
        table.tags,
        table.converged,
        bool(de > BINDING_FACTOR * tol and table.reliable),
    )


# -- scans -------------------------------------------------------------------


def second_differences(x, y) -> np.ndarray:
    """Divided second differences of y(x) on a possibly uneven grid."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    d1 = np.diff(y) / np.diff(x)
    return 2 * np.diff(d1) / (x[2:] - x[:-2])


def concavity_violations(x, y, tol: float) -> int:
    return int(np.sum(second_differences(x, y) > tol))


def bisect_threshold(f, lo: float, hi: float, width: float = 0.01) -> float:
    """Midpoint of a bracket [lo, hi] with f(lo) <= 0 < f(hi) shrunk to ``width``."""
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _scan(values, solve, concave_tol=None, mapper=map):
    records = list(mapper(solve, values))
    totals = np.array([r.energies[-1] for r in records])
    sd, bad = [], 0
    if len(values) >= 3:
        sd = second_differences(values, totals)
        scale = np.max(np.abs(totals))
        bad = int(np.sum(sd > (concave_tol if concave_tol is not None else 1e-6 * scale)))
    return records, [float(v) for v in sd], bad


def _alpha_point(a, N, B, grid, cfg, families, seeds, width):
    return binding_record(energy_table(N, a, B, grid, families, cfg, seeds, width), cfg.outer_tol)


def _b_point(b, N, alpha, grid, cfg, families, seeds, width):
    return binding_record(energy_table(N, alpha, (0.0, 0.0, b), grid, families, cfg, seeds, width), cfg.outer_tol)


def alpha_scan(
    N, B, alphas, grid, cfg=ScfConfig(), families=None, seeds=(0, 1, 2), width=4.0, refine=True, mapper=map
):
    """Binding records along alpha with a concavity check and threshold bisection.

    ``mapper`` evaluates the scan points (an executor's ``map`` runs them in
    parallel); results keep the input order.
    """
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])) or alphas[0] <= 0 or alphas[-1] > 1:
        raise UsageError("alphas must increase strictly within (0, 1]")
    tol = cfg.outer_tol
    solve = partial(_alpha_point, N=N, B=B, grid=grid, cfg=cfg, families=families, seeds=seeds, width=width)
    records, sd, bad = _scan(alphas, solve, mapper=mapper)
    threshold = None
    bound = [r.bound for r in records]
    if any(bound):
        i = bound.index(True)
        threshold = alphas[i]
        if refine and i > 0:
            threshold = bisect_threshold(
                lambda a: solve(a).delta_E - BINDING_FACTOR * tol, alphas[i - 1], alphas[i]
            )
    return ScanResult("alpha", alphas, records, bad, threshold, sd)


def b_scan(N, alpha, bz_values, grid, cfg=ScfConfig(), families=None, seeds=(0, 1, 2), width=4.0, mapper=map):
    """Binding records along |B| with B parallel to z."""
    bz = [float(b) for b in bz_values]
    if any(b <= a for a, b in zip(bz, bz[1:])):
        raise UsageError("field values must increase strictly")
    solve = partial(_b_point, N=N, alpha=alpha, grid=grid, cfg=cfg, families=families, seeds=seeds, width=width)
    return ScanResult("B", bz, list(mapper(solve, bz)), 0, None, [])


def records_csv(records) -> str:
    n = max(r.N for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "alpha", "Bz"] + [f"E{m}" for m in range(1, n + 1)] + ["deltaE", "argmin_k", "converged_flags"])
    for r in records:
        es = [repr(float(e)) for e in r.energies] + [""] * (n - len(r.energies))
        flags = "".join("1" if c else "0" for c in r.converged)
        w.writerow([r.N, repr(r.alpha), repr(r.B[2])] + es + [repr(r.delta_E), r.argmin_k, flags])
    return buf.getvalue()


# -- decay -------------------------------------------------------------------


def radial_profile(rho: np.ndarray, grid: Grid3D, center=None):
    """Spherical shell averages of rho about ``center`` (default: centre of mass)."""
    x, y, z = grid.coords
    if center is None:
        q = grid.integrate(rho)
        center = [grid.integrate(rho * c) / q for c in (x, y, z)]
    r = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2)
    h = grid.spacing
    idx = np.rint(r / h).astype(int).ravel()
    counts = np.bincount(idx)
    sums = np.bincount(idx, rho.ravel())
    rsum = np.bincount(idx, r.ravel())
    ok = counts > 0
    return rsum[ok] / counts[ok], sums[ok] / counts[ok], np.asarray(center)


def half_mass_radius(rho: np.ndarray, grid: Grid3D, center=None) -> float:
    x, y, z = grid.coords
    if center is None:
        q = grid.integrate(rho)
        center = [grid.integrate(rho * c) / q for c in (x, y, z)]
    r = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2).ravel()
    order = np.argsort(r)
    cum = np.cumsum(rho.ravel()[order])
    return float(r[order][np.searchsorted(cum, 0.5 * cum[-1])])


def decay_fit_density(rho: np.ndarray, grid: Grid3D, delta_E: float, floor: float = 1e-14) -> DecayFit:
    """Fit log of the shell-averaged density against -2 beta r outside the core."""
    r, prof, c = radial_profile(rho, grid)
    r_half = half_mass_radius(rho, grid, c)
    # stay inside the inscribed ball so shells are complete
    r_box = 0.5 * grid.side - np.max(np.abs(c)) - 2 * grid.spacing
    noise = max(floor, 10 * floor)
    keep = (r > 2 * r_half) & (r < r_box) & (prof > noise)
    if keep.sum() < 4:
        raise UsageError("no fit window outside the core: enlarge the box")
    rr, ly = r[keep], np.log(prof[keep])
    slope, icpt = np.polyfit(rr, ly, 1)
    pred = slope * rr + icpt
    ss_res = np.sum((ly - pred) ** 2)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    beta = max(-0.5 * slope, 0.0)
    shortfall = bool(beta < np.sqrt(max(delta_E, 0.0)) - 0.1)
    return DecayFit(float(beta), (float(rr[0]), float(rr[-1])), float(r2), float(delta_E), shortfall, r, np.log(np.maximum(prof, 1e-300)))


def decay_fit(state, delta_E: float, floor: float = 1e-14) -> DecayFit:
    return decay_fit_density(density(state), state.grid, delta_E, floor)
