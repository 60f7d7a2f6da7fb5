"""Batch command line: ``pekarlab <task> --config run.ini [--out DIR] [--seed S] [--jobs J]``.

The config is an INI file.  Every section and key is optional except where a
task needs it; unknown keys are rejected so typos surface as usage errors.

    [grid]   n = 32, spacing = 2.0, periodic_z = false
    [field]  Bz = 0.0
    [model]  N = 1, alpha = 1.0, alphas = 0.6 0.8 1.0, bz_values = 0 0.5 1,
             ansatz = hartree (or "1:hartree 2:pair" per N), width = 4.0
    [scf]    outer_tol, inner_tol, max_outer, max_inner, mixing
    [run]    seed = 0, starts = 1
    [multipole] R_cells = 8 16 32, mc_samples = 0, kernel_samples = 1000
    [ims]    epsilon = 0.5, R_eps = 1.0, N = 1, alpha = 0.0, width = 2.0, trivial = false
    [decay]  delta_E = (defaults to |B| - lambda)
    [output] plot_script = false

Exit status: 0 success, 2 a solve did not converge (artifacts still
written), 1 usage or configuration error.  Reports contain no timestamps, so
identical config and seed give byte-identical JSON.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PekarError, UsageError
from .grid import Grid3D, MagneticGauge

TASKS = ("solve", "scan-alpha", "scan-B", "binding", "multipole-verify", "ims-check", "decay-fit", "oracle-2body")
EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2

SCHEMA = {
    "grid": {"n": int, "spacing": float, "periodic_z": bool},
    "field": {"Bz": float},
    "model": {"N": int, "alpha": float, "alphas": "floats", "bz_values": "floats", "ansatz": str, "width": float},
    "scf": {"outer_tol": float, "inner_tol": float, "max_outer": int, "max_inner": int, "mixing": float},
    "run": {"seed": int, "starts": int},
    "multipole": {"R_cells": "floats", "mc_samples": int, "kernel_samples": int},
    "ims": {"epsilon": float, "R_eps": float, "N": int, "alpha": float, "width": float, "trivial": bool},
    "decay": {"delta_E": float},
    "output": {"plot_script": bool},
}


@dataclass
class RunConfig:
    task: str
    values: dict = field(default_factory=dict)
    seed: int | None = None
    out: Path = Path("out")
    jobs: int = 1

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section, key):
        v = self.get(section, key)
        if v is None:
            raise UsageError(f"{section}.{key}: required for task {self.task}")
        return v

    def echo(self) -> dict:
        return {"task": self.task, "seed": self.seed, "config": self.values}


def _convert(section, key, kind, raw):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "floats":
            return [float(v) for v in raw.replace(",", " ").split()]
        return kind(raw)
    except ValueError:
        name = kind if isinstance(kind, str) else kind.__name__
        raise UsageError(f"{section}.{key}: expected {name}, got {raw!r}") from None


def parse_config(text: str, task: str) -> RunConfig:
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"config does not parse: {exc}") from None
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise UsageError(f"{sec}: unknown section")
        values[sec] = {}
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise UsageError(f"{sec}.{key}: unknown key")
            values[sec][key] = _convert(sec, key, SCHEMA[sec][key], raw)
    cfg = RunConfig(task, values, values.get("run", {}).get("seed"))
    return cfg


# -- builders ------------------------------------------------------------------


def _grid(cfg: RunConfig) -> Grid3D:
    return Grid3D(cfg.require("grid", "n"), cfg.require("grid", "spacing"), cfg.get("grid", "periodic_z", False))


def _scf(cfg: RunConfig):
    from .scf import ScfConfig

    return ScfConfig(**cfg.values.get("scf", {}))


def _families(cfg: RunConfig, N: int) -> dict:
    entries = cfg.get("model", "ansatz", "hartree").split()
    if len(entries) == 1 and ":" not in entries[0]:
        return {m: entries[0] for m in range(2, N + 1)} | {1: "hartree"}
    out = {}
    for item in entries:
        try:
            k, fam = item.split(":")
            out[int(k)] = fam
        except ValueError:
            raise UsageError(f"model.ansatz: bad entry {item!r}, expected N:family") from None
    return out


def _seeds(cfg: RunConfig) -> tuple:
    starts = cfg.get("run", "starts", 1)
    if starts < 1:
        raise UsageError("run.starts: must be at least 1")
    if starts > 1 and cfg.seed is None:
        raise UsageError("run.seed: required for randomized starts")
    base = cfg.seed or 0
    # the first start is always the centred symmetric one
    return (0,) + tuple(base + k for k in range(1, starts))


def _dump(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _report(cfg: RunConfig, body: dict) -> dict:
    return {"version": __version__, "config_echo": cfg.echo(), **body}


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _plot_script(cfg, out, data_file, xlabel, ylabel, using="1:2"):
    if cfg.get("output", "plot_script", False):
        _write(
            out,
            Path(data_file).stem + ".gp",
            f'set datafile separator ","\nset xlabel "{xlabel}"\nset ylabel "{ylabel}"\n'
            f'plot "{data_file}" every ::1 using {using} with linespoints notitle\n',
        )


# -- tasks ---------------------------------------------------------------------


def task_solve(cfg: RunConfig, out: Path) -> int:
    from .binding import solve_best
    from .checkpoint import save_state

    N = cfg.get("model", "N", 1)
    alpha = cfg.require("model", "alpha")
    fam = _families(cfg, N).get(N, "hartree")
    grid = _grid(cfg)
    gauge = MagneticGauge.along_z(cfg.get("field", "Bz", 0.0))
    rep = solve_best(fam, N, alpha, grid, gauge, _scf(cfg), _seeds(cfg), cfg.get("model", "width", 4.0))
    body = {"ansatz": fam, "N": N, "alpha": alpha, "B": gauge.B, "energy": rep.energy, "scf": rep.to_dict()}
    _write(out, "report.json", _dump(_report(cfg, body)))
    save_state(out / "state.pkls", rep.state)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def _scan(cfg: RunConfig, out: Path, axis: str) -> int:
    from .binding import alpha_scan, b_scan, records_csv

    N = cfg.get("model", "N", 2)
    common = dict(grid=_grid(cfg), cfg=_scf(cfg), families=_families(cfg, N), seeds=_seeds(cfg),
                  width=cfg.get("model", "width", 4.0))
    with _mapper(cfg) as mapper:
        if axis == "alpha":
            B = (0.0, 0.0, cfg.get("field", "Bz", 0.0))
            res = alpha_scan(N, B, cfg.require("model", "alphas"), mapper=mapper, **common)
        else:
            res = b_scan(N, cfg.require("model", "alpha"), cfg.require("model", "bz_values"), mapper=mapper, **common)
    _write(out, "scan.json", _dump(_report(cfg, {"scan": res.to_dict()})))
    _write(out, "scan.csv", records_csv(res.points))
    _plot_script(cfg, out, "scan.csv", axis, f"E{N}", using=f"{2 if axis == 'alpha' else 3}:{3 + N}")
    return EXIT_OK if all(all(r.converged) for r in res.points) else EXIT_NONCONVERGED


class _mapper:
    """Context giving ``map`` or a process pool's ordered ``map``."""

    def __init__(self, cfg):
        self.pool = ProcessPoolExecutor(max_workers=cfg.jobs) if cfg.jobs > 1 else None

    def __enter__(self):
        return self.pool.map if self.pool else map

    def __exit__(self, *exc):
        if self.pool:
            self.pool.shutdown()


def task_binding(cfg: RunConfig, out: Path) -> int:
    from .binding import binding_record, energy_table, records_csv

    N = cfg.get("model", "N", 2)
    alpha = cfg.require("model", "alpha")
    scf = _scf(cfg)
    t = energy_table(
        N, alpha, (0.0, 0.0, cfg.get("field", "Bz", 0.0)), _grid(cfg), _families(cfg, N), scf, _seeds(cfg),
        cfg.get("model", "width", 4.0),
    )
    rec = binding_record(t, scf.outer_tol)
    body = {
        "record": rec.to_dict(),
        "scf_energies": t.scf_energies,
        "el_residuals": t.el_residuals,
        "reliable": t.reliable,
        "reports": [r.to_dict() for r in t.reports],
    }
    _write(out, "binding.json", _dump(_report(cfg, body)))
    _write(out, "binding.csv", records_csv([rec]))
    return EXIT_OK if t.reliable else EXIT_NONCONVERGED


def task_multipole(cfg: RunConfig, out: Path) -> int:
    from . import asymptotics as asy
    from .binding import solve_best

    grid = _grid(cfg)
    alpha = cfg.get("model", "alpha", 1.0)
    rep = solve_best("hartree", 1, alpha, grid, MagneticGauge(), _scf(cfg), (0,), cfg.get("model", "width", 4.0))
    R = [c * grid.spacing for c in cfg.get("multipole", "R_cells", [8.0, 16.0, 32.0])]
    scan = asy.interaction_norm_scan(rep.state, rep.state, R)
    block = asy.recenter(asy.smooth_cutoff(rep.state, R[0]))
    n_kernel = cfg.get("multipole", "kernel_samples", 1000)
    C, rows = asy.kernel_sample_check(n_kernel, seed=cfg.seed or 0)
    far = asy.far_field_errors(block, R, d=scan.d, seed=cfg.seed or 0)
    dips = [asy.dipole_L(block, block, u, scan.d).to_dict() for u in asy.SPHERE_DIRECTIONS]
    body = {
        "block_energy": rep.energy,
        "kernel": {"C": C, "max_ratio": max(e / b for _, _, e, b in rows), "samples": n_kernel},
        "far_field": {"R": R, "errors": far, "scaled": [e * r**4 for e, r in zip(far, R)]},
        "scaling": scan.to_dict(),
        "dipole": dips,
        "dipole_floor": min(d["L_min"] for d in dips),
        "multipoles": asy.multipole_report(block, n_checks=0).to_dict(),
    }
    n_mc = cfg.get("multipole", "mc_samples", 0)
    if n_mc:
        if cfg.seed is None:
            raise UsageError("run.seed: required for Monte Carlo sampling")
        mc, se = asy.dipole_L_monte_carlo(block, block, (0, 0, 1), scan.d, n=n_mc, seed=cfg.seed)
        body["monte_carlo"] = {"L": mc, "stderr": se, "closed_form": asy.dipole_L(block, block, (0, 0, 1), scan.d).L_min}
    _write(out, "multipole.json", _dump(_report(cfg, body)))
    _write(out, "scaling.csv", scan.to_csv())
    _plot_script(cfg, out, "scaling.csv", "R", "norm")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def task_ims(cfg: RunConfig, out: Path) -> int:
    from .ansatz import HartreeProduct, density, gaussian_orbital
    from .ims import ProductPartition, build_pair, ims_identity_check, trivial_pair
    from .scf import build_linearized

    grid = _grid(cfg)
    gauge = MagneticGauge.along_z(cfg.get("field", "Bz", 0.0))
    N = cfg.get("ims", "N", 1)
    alpha = cfg.get("ims", "alpha", 0.0)
    width = cfg.get("ims", "width", 2.0)
    offsets = [(0.5 * k, -0.25 * k, 0.0) for k in range(N)]
    state = HartreeProduct.from_orbitals([gaussian_orbital(grid, width, c) for c in offsets], grid, gauge)
    if cfg.get("ims", "trivial", False):
        pair = trivial_pair(grid)
    else:
        pair = build_pair(cfg.get("ims", "epsilon", 0.5), cfg.get("ims", "R_eps", 1.0), grid)
    sigma = density(state) if alpha else np.zeros(grid.shape)
    H = build_linearized(sigma, alpha, gauge, grid, N=N if alpha else None)
    res = ims_identity_check(H, state, ProductPartition(pair, N))
    body = {
        "ims": res.to_dict(),
        "sum_squares_error": pair.sum_squares_error(),
        "measured_gradient_sup": list(pair.measured_gradient_sup()) if pair.epsilon else [0.0, 0.0],
        "derivative_sup": pair.derivative_sup,
    }
    _write(out, "ims.json", _dump(_report(cfg, body)))
    return EXIT_OK


def task_decay(cfg: RunConfig, out: Path) -> int:
    from .binding import decay_fit, solve_best
    from .scf import euler_lagrange_residual

    grid = _grid(cfg)
    gauge = MagneticGauge.along_z(cfg.get("field", "Bz", 0.0))
    alpha = cfg.require("model", "alpha")
    rep = solve_best("hartree", 1, alpha, grid, gauge, _scf(cfg), _seeds(cfg), cfg.get("model", "width", 4.0))
    delta_E = cfg.get("decay", "delta_E")
    if delta_E is None:
        lam, _ = euler_lagrange_residual(rep.state, alpha)
        delta_E = gauge.strength - lam
    fit = decay_fit(rep.state, delta_E)
    _write(out, "decay.json", _dump(_report(cfg, {"energy": rep.energy, "fit": fit.to_dict()})))
    rows = "\n".join(f"{r!r},{v!r}" for r, v in zip(fit.radii.tolist(), fit.log_density.tolist()))
    _write(out, "decay.csv", "r,log_rho\n" + rows + "\n")
    _plot_script(cfg, out, "decay.csv", "r", "log rho")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def task_oracle(cfg: RunConfig, out: Path) -> int:
    from .ansatz import TwoBodyFull, energy
    from .binding import solve_best
    from .scf import outer_scf

    grid = _grid(cfg)
    if grid.n > 16:
        raise UsageError("grid.n: the two-body oracle is limited to n <= 16")
    alpha = cfg.require("model", "alpha")
    scf = _scf(cfg)
    width = cfg.get("model", "width", 4.0)
    gauge = MagneticGauge.along_z(cfg.get("field", "Bz", 0.0))
    prod = solve_best("hartree", 2, alpha, grid, gauge, scf, (0,), width)
    pair = solve_best("pair", 2, alpha, grid, gauge, scf, (0,), width)
    full = outer_scf(TwoBodyFull.from_pair(pair.state), alpha, scf)
    e = {"product": prod.energy, "pair": pair.energy, "twobody": energy(full.state, alpha).total}
    body = {"energies": e, "ordered": bool(e["twobody"] <= e["pair"] < e["product"]),
            "converged": {"product": prod.converged, "pair": pair.converged, "twobody": full.converged}}
    _write(out, "oracle.json", _dump(_report(cfg, body)))
    return EXIT_OK if prod.converged and pair.converged else EXIT_NONCONVERGED


RUNNERS = {
    "solve": task_solve,
    "scan-alpha": lambda c, o: _scan(c, o, "alpha"),
    "scan-B": lambda c, o: _scan(c, o, "B"),
    "binding": task_binding,
    "multipole-verify": task_multipole,
    "ims-check": task_ims,
    "decay-fit": task_decay,
    "oracle-2body": task_oracle,
}


def run(cfg: RunConfig) -> int:
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"output directory {cfg.out}: {exc}") from None
    return RUNNERS[cfg.task](cfg, cfg.out)


def _jobs(value) -> int:
    raw = value if value is not None else os.environ.get("PEKARLAB_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise UsageError(f"--jobs: expected integer, got {raw!r}") from None
    if jobs < 1:
        raise UsageError("--jobs: must be at least 1")
    return jobs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pekarlab", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs")
    ap.add_argument("--version", action="version", version=f"pekarlab {__version__}")
    args = ap.parse_args(argv)
    try:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise UsageError(f"--config: {exc}") from None
        cfg = parse_config(text, args.task)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise UsageError("--seed: must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        cfg.out = args.out
        cfg.jobs = _jobs(args.jobs)
        return run(cfg)
    except (PekarError, TypeError) as exc:
        print(f"pekarlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
