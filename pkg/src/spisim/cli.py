"""``spisim`` command-line front end.

Exit codes: 0 full success, 2 finished with flagged cells, 1 fatal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, parse_config
from .analytic import PhotonEnvelope
from .params import EmitterParams, ProbeState
from .parallel import WORKERS_ENV, resolve_workers
from .pointer import qbhat_coherent_numeric, qbhat_quantum_exp, qbhat_quantum_general, sweep_qbhat
from .polarization import polarization_run, stokes_trajectory, write_stokes_csv
from .readout import advantage_map, readout_curves
from .slh.integrate import ATOL, RTOL, TRUNCATION_TOL
from .slh.model import CONVERGENCE_TOL, numeric_qbhat
from .slh.triple import coherent_cutoff, default_layout
from .validation import format_table, run_checks

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

DEFAULT_GRIDS = {
    "sweep": {"nbar": np.linspace(0.0, 1.0, 11), "bandwidth": np.logspace(-2, 1, 13)},
    "readout": {"bandwidth": np.logspace(-2, 1, 15)},
    "advantage-map": {"eta": np.linspace(0.55, 1.0, 10), "gamma_star": np.linspace(0.0, 0.45, 10)},
}


def _probe(cfg: RunConfig, nbar=None, bandwidth=None, polarization=None) -> ProbeState:
    p = cfg.probe
    nbar = p.nbar if nbar is None else nbar
    pol = p.polarization if polarization is None else polarization
    if p.envelope == "gaussian":
        env = PhotonEnvelope.gaussian(center=p.center, width=p.width)
    else:
        env = PhotonEnvelope.exponential((p.bandwidth if bandwidth is None else bandwidth) * cfg.gamma)
    return ProbeState(p.kind, nbar, env, polarization=pol)


def _emitter(cfg: RunConfig) -> EmitterParams:
    return EmitterParams(cfg.gamma, cfg.gamma_star * cfg.gamma, cfg.eta)


def _grid(cfg: RunConfig, key: str) -> np.ndarray:
    if key in cfg.grid:
        return cfg.grid[key]
    return DEFAULT_GRIDS[cfg.experiment][key]


def _cutoffs(probe: ProbeState) -> list:
    if probe.statistics == "coherent":
        return [coherent_cutoff(probe.nbar)] * 2
    lay = default_layout(probe)
    return [lay.fock_r, lay.fock_l]


# --------------------------------------------------------------------------
# experiments: each returns (flags, metadata extras)


def run_qbhat(cfg: RunConfig, out: Path, workers: int):
    probe = _probe(cfg)
    emitter = _emitter(cfg)
    rows = []
    if probe.statistics == "superposition":
        if cfg.probe.envelope == "exponential" and cfg.gamma_star == 0 and cfg.eta == 1:
            rows.append(qbhat_quantum_exp(probe.nbar, probe.bandwidth, cfg.gamma))
        elif cfg.gamma_star == 0 and cfg.eta == 1:
            rows.append(qbhat_quantum_general(probe, cfg.gamma))
        rows.append(numeric_qbhat(probe, emitter))
    else:
        if cfg.probe.envelope == "exponential":
            rows.append(qbhat_coherent_numeric(probe, emitter))
        else:
            rows.append(numeric_qbhat(probe, emitter))
    with open(out / "qbhat.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "qbhat", "error_estimate", "converged", "time_over_inverse_gamma"])
        for r in rows:
            w.writerow([r.method, repr(r.value), repr(float(r.error_estimate)), int(r.converged),
                        "" if r.time is None else repr(float(r.time))])
    flags = [not r.converged for r in rows]
    for r in rows:
        print(f"{r.method:22s} qBhat = {r.value:.10f}")
    return flags, {"fock_cutoffs": _cutoffs(probe)}


def run_sweep(cfg: RunConfig, out: Path, workers: int):
    kind = "quantum" if cfg.probe.kind == "superposition" else "coherent"
    grid = sweep_qbhat(_grid(cfg, "nbar"), _grid(cfg, "bandwidth"), kind, gamma=cfg.gamma, workers=workers)
    grid.to_csv(out / "sweep.csv")
    flags = [not c for c in grid.converged.ravel()]
    print(f"{grid.values.size} cells, {sum(flags)} flagged")
    return flags, {"fock_cutoffs": "none (closed form or displaced frame)"}


def run_readout(cfg: RunConfig, out: Path, workers: int):
    emitter = _emitter(cfg)
    curves = readout_curves(_grid(cfg, "bandwidth") * cfg.gamma, nbar=cfg.probe.nbar, emitter=emitter,
                            phi=cfg.phi, workers=workers)
    curves.to_csv(out / "readout.csv")
    flags = [not c for c in curves.converged]
    print(f"phase = {curves.phi:.6f}; ordering holds at {int(curves.ordering_ok().sum())}/{curves.Gamma.size}"
          f" points; region (1) at {int(curves.region_one().sum())} points")
    return flags, {"phase": curves.phi, "fock_cutoffs": [3, 1]}


def run_advantage(cfg: RunConfig, out: Path, workers: int):
    amap = advantage_map(_grid(cfg, "eta"), _grid(cfg, "gamma_star"), Gamma=cfg.probe.bandwidth,
                         gamma=cfg.gamma, phi=cfg.phi, workers=workers)
    amap.to_csv(out / "advantage_map.csv")
    eta_t, gs_t = amap.eta_threshold(0.0), amap.gamma_star_threshold(1.0)
    print(f"eta threshold (gamma_star = 0): {eta_t}")
    print(f"gamma_star threshold (eta = 1): {gs_t}")
    flags = [not c for c in amap.converged.ravel()]
    return flags, {"phase": amap.phi, "eta_threshold": eta_t, "gamma_star_threshold": gs_t,
                   "fock_cutoffs": [3, 1]}


def run_polarization(cfg: RunConfig, out: Path, workers: int):
    probe = _probe(cfg)
    emitter = _emitter(cfg)
    branches, flags = {}, []
    for spin in ("up", "down"):
        traj = polarization_run(probe, spin, emitter, t_end=cfg.t_end, n_points=cfg.n_points)
        branches[spin] = stokes_trajectory(traj, spin)
        flags.append(traj.max_truncation_tail > TRUNCATION_TOL)
    write_stokes_csv(out / "polarization.csv", branches)
    for spin, samples in branches.items():
        if samples:
            s = samples[-1]
            print(f"spin {spin:4s} final Stokes ({s.eps_x:+.4f}, {s.eps_y:+.4f}, {s.eps_z:+.4f})")
    return flags, {"fock_cutoffs": _cutoffs(probe) if probe.statistics == "superposition" else "displaced frame"}


def run_validate(cfg: RunConfig, out: Path, workers: int):
    results = run_checks()
    print(format_table(results))
    with open(out / "validate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "value", "threshold", "passed", "detail"])
        for r in results:
            w.writerow([r.name, repr(r.value), repr(r.threshold), int(r.passed), r.detail])
    return [not r.passed for r in results], {}


RUNNERS = {
    "qbhat": run_qbhat,
    "sweep": run_sweep,
    "readout": run_readout,
    "advantage-map": run_advantage,
    "polarization": run_polarization,
    "validate": run_validate,
}


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        return None if math.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def run(cfg: RunConfig, out_dir: str | Path | None = None, workers: int | None = None) -> int:
    """Execute ``cfg``, write CSV plus ``metadata.json`` into the output directory, return an exit code."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = resolve_workers(workers if workers is not None else cfg.workers)
    flags, extra = RUNNERS[cfg.experiment](cfg, out, workers)
    n_flagged = int(sum(bool(f) for f in flags))
    meta = {
        "tool": "spisim",
        "version": __version__,
        "experiment": cfg.experiment,
        "config_sha256": cfg.digest,
        "config_text_sha256": hashlib.sha256(cfg.source_text.encode()).hexdigest(),
        "seed": cfg.seed,
        "workers": workers,
        "integrator": {"method": "RK45", "rtol": RTOL, "atol": ATOL},
        "long_time_tolerance": CONVERGENCE_TOL,
        "truncation_tolerance": TRUNCATION_TOL,
        "cell_flags": [int(bool(f)) for f in flags],
        "flagged_cells": n_flagged,
    }
    meta.update({k: _jsonable(v) for k, v in extra.items()})
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_PARTIAL if n_flagged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spisim", description="Spin-photon interface readout simulator.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--workers", type=int, help=f"worker processes (overrides {WORKERS_ENV})")
    ap.add_argument("--seed", type=int, help="seed recorded for quasi-random sequences")
    ap.add_argument("--version", action="version", version=f"spisim {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, experiment=args.experiment)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for experiment {cfg.experiment!r}, not {args.experiment!r}")
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        print(cfg.echo())
        return run(cfg, args.out, args.workers)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"spisim: error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except Exception as exc:  # noqa: BLE001 - fatal, reported with exit code 1
        print(f"spisim: fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
