"""Experiment orchestration shared by the CLI and the test suite."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import (
    Tracker,
    centered_derivative,
    evacuation_scan,
    h2_norm,
    morawetz_action,
    morawetz_rhs,
    scatter_detect,
)
from .dynamics import Trajectory, evolve, gaussian
from .exponents import compute_exponents
from .groundstate import GroundStateResult, petviashvili
from .io import (
    RunConfig,
    append_timeseries,
    checkpoint_writer,
    list_checkpoints,
    read_checkpoint,
    read_timeseries,
    truncate_timeseries,
    write_checkpoint,
)
from .spectral import SpectralCache

log = logging.getLogger(__name__)

TIMESERIES = "timeseries.csv"
CHECKPOINTS = "checkpoints"


def params_dict(cfg: RunConfig) -> dict:
    v = cfg.values
    return {k: v[k] for k in ("N", "alpha", "b", "p") if v.get(k) is not None}


def build_cache(cfg: RunConfig, R: float | None = None) -> SpectralCache:
    v = cfg.values
    for k in ("alpha", "b", "p"):
        if v.get(k) is None:
            raise ValueError(f"missing model parameter {k!r}")
    return SpectralCache(
        cfg.grid,
        v["alpha"],
        v["b"],
        v["p"],
        sigma=v["sigma"],
        dealias=v["dealias"],
        coupling=cfg.coupling,
        R=R,
    )


def compute_groundstate(cfg: RunConfig, cache: SpectralCache | None = None) -> GroundStateResult:
    """Focusing ground state on the configured grid."""
    v = cfg.values
    if cache is None or cache.coupling != 1.0:
        cache = SpectralCache(cfg.grid, v["alpha"], v["b"], v["p"], sigma=v["sigma"], dealias=v["dealias"])
    seed = gaussian(cache.grid, 1.0, v["gs_seed_width"])
    return petviashvili(cache, seed, tol=v["gs_tol"], max_iter=v["gs_max_iter"])


def perturbation_field(cfg: RunConfig, grid) -> np.ndarray:
    """Seeded smooth perturbation: unit Gaussian of width 2, random offset and phase."""
    rng = np.random.default_rng(cfg["seed"])
    c = rng.uniform(-1.0, 1.0, grid.d)
    theta = rng.uniform(0.0, 2 * math.pi)
    return gaussian(grid, 1.0, 2.0, center=list(c)) * np.exp(1j * theta)


def initial_field(cfg: RunConfig, cache: SpectralCache, gs: GroundStateResult | None = None):
    v = cfg.values
    g = cache.grid
    kind = v["initial"]
    if kind == "gaussian":
        vel = v["velocity"] or None
        cen = v["center"] or None
        for name, vec in (("velocity", vel), ("center", cen)):
            if vec is not None and len(vec) != g.d:
                raise ValueError(f"{name} needs {g.d} components, got {len(vec)}")
        u0 = gaussian(g, v["amplitude"], v["width"], velocity=vel, center=cen)
    elif kind == "groundstate":
        if gs is None:
            gs = compute_groundstate(cfg)
        u0 = v["lambda"] * gs.phi
    elif kind == "file":
        u0, _ = read_checkpoint(v["init_path"])
        if u0.shape != g.shape:
            raise ValueError(f"initial field shape {u0.shape} does not match grid {g.shape}")
    else:
        raise ValueError(f"unknown initial family {kind!r}")
    if v["perturbation"]:
        u0 = u0 + v["perturbation"] * perturbation_field(cfg, g)
    return u0


def diag_radius(cfg: RunConfig) -> float:
    return cfg["R"] if cfg["R"] is not None else cfg.grid.L / 8


@dataclass
class EvolveResult:
    trajectory: Trajectory
    tracker: Tracker
    cache: SpectralCache
    u0: np.ndarray
    groundstate: GroundStateResult | None
    out_dir: Path | None


def run_evolve(cfg: RunConfig, out_dir=None, resume=None, keep_states: bool = False) -> EvolveResult:
    """Main loop: diagnostics rows every cadence, checkpoints per config.

    ``resume`` names a checkpoint from an earlier run in ``out_dir``; the
    time series is truncated to that time and the run continues from it.
    """
    v = cfg.values
    cache = build_cache(cfg, R=v["R_virial"])
    ecfg = cfg.evolve
    ecfg.keep_states = keep_states
    gs = None
    if v["initial"] == "groundstate":
        gs = compute_groundstate(cfg)
    u0 = initial_field(cfg, cache, gs)
    exps = compute_exponents(cfg.params) if gs is not None else None
    tracker = Tracker(cache, diag_radius(cfg), gs=gs, exps=exps)

    out = Path(out_dir) if out_dir is not None else None
    csv_path = None
    ckdir = None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / TIMESERIES
        ckdir = out / CHECKPOINTS
        writer = checkpoint_writer(cache.grid, params_dict(cfg))
        if resume is None:
            if csv_path.exists():
                csv_path.unlink()
            if ckdir.exists():
                for f in list_checkpoints(ckdir):
                    f.unlink()

    step0 = 0
    u_start = u0
    if resume is not None:
        u_start, t0 = read_checkpoint(resume)
        step0 = int(round(t0 / ecfg.dt))
        if step0 % ecfg.cadence:
            raise ValueError(f"resume time t={t0} is not a sample time (cadence {ecfg.cadence})")
        acc = 0.0
        if csv_path is not None and csv_path.exists():
            truncate_timeseries(csv_path, t0)
            ts = read_timeseries(csv_path)
            hit = np.flatnonzero(np.isclose(ts["t"], t0, rtol=1e-12, atol=1e-15))
            if hit.size:
                acc = float(ts["spacetime_acc"][hit[-1]])
        tracker.prime(step0 * ecfg.dt, u_start, acc)

    hooks = [tracker]
    if csv_path is not None:
        hooks.append(lambda n, t, u: append_timeseries(tracker.samples[-1], csv_path))
    traj = evolve(
        u_start,
        ecfg,
        cache,
        hooks=tuple(hooks),
        checkpoint_dir=ckdir if ecfg.checkpoint_every else None,
        step0=step0,
        writer=writer,
        sample_start=resume is None,
    )
    if out is not None and gs is not None:
        write_checkpoint(gs.phi, 0.0, out / "groundstate.bin", cache.grid, params_dict(cfg))
    return EvolveResult(traj, tracker, cache, u0, gs, out)


def run_groundstate(cfg: RunConfig, out_dir=None) -> GroundStateResult:
    gs = compute_groundstate(cfg)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_checkpoint(gs.phi, 0.0, out / "groundstate.bin", cfg.grid, params_dict(cfg))
        (out / "groundstate.json").write_text(json.dumps(gs.summary(), indent=2, sort_keys=True) + "\n")
    return gs


def morawetz_verify(cfg: RunConfig, n_samples: int = 20) -> dict:
    """Short run comparing centered differences of M_R with the assembled RHS.

    Needs ``R_virial``. Samples ``n_samples`` interior times evenly.
    """
    v = cfg.values
    if v["R_virial"] is None:
        raise ValueError("morawetz-verify needs R_virial")
    cache = build_cache(cfg, R=v["R_virial"])
    ecfg = cfg.evolve
    ecfg.cadence = 1
    n = ecfg.nsteps
    if n < 2 * (n_samples + 1):
        raise ValueError(f"run too short for {n_samples} interior samples ({n} steps)")
    every = n // (n_samples + 1)
    targets = {every * (i + 1) for i in range(n_samples)}
    vb = cache.virial
    actions: dict[int, float] = {}
    rhs: dict = {}

    def hook(k, t, u):
        if k - 1 in targets or k in targets or k + 1 in targets:
            actions[k] = morawetz_action(u, cache.grid, vb)
        if k in targets:
            rhs[k] = morawetz_rhs(u, cache, vb)

    u0 = initial_field(cfg, cache)
    evolve(u0, ecfg, cache, hooks=(hook,))
    rows = []
    for k in sorted(targets):
        fd = float(centered_derivative([actions[k - 1], actions[k], actions[k + 1]], ecfg.dt)[0])
        r = rhs[k]
        assembly = abs(sum(r.terms()) - r.total) / max(abs(r.total), 1e-300)
        rows.append(
            {
                "t": k * ecfg.dt,
                "fd": fd,
                "rhs": r.total,
                "rel_err": abs(fd - r.total) / abs(r.total),
                "assembly": assembly,
                "terms": r.terms(),
            }
        )
    return {
        "samples": rows,
        "max_rel_err": max(r["rel_err"] for r in rows),
        "max_assembly": max(r["assembly"] for r in rows),
        "M_R0": morawetz_action(u0, cache.grid, vb),
    }


def scatter_scan(cfg: RunConfig, ckdir) -> dict:
    paths = list_checkpoints(ckdir)
    cache = build_cache(cfg)
    times, states = [], []
    for pth in paths:
        u, t = read_checkpoint(pth)
        times.append(t)
        states.append(u)
    scale = None
    if times:
        scale = h2_norm(states[int(np.argmin(times))], cache.grid)
    rep = scatter_detect(times, states, cache, h2_scale=scale, rel_threshold=cfg["scatter_threshold"])
    return rep.as_dict()


def evac_scan(csv_path) -> dict:
    ts = read_timeseries(csv_path)
    rep = evacuation_scan(ts["t"], ts["local_mass"])
    return {
        "minima": rep.minima,
        "slope": rep.slope,
        "initial": float(ts["local_mass"][0]),
        "final_min_ratio": (rep.minima[-1][1] / ts["local_mass"][0]) if rep.minima else None,
    }


def dump_cache(cache: SpectralCache, directory) -> list[Path]:
    """Each cached real array as a checkpoint-format file."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, arr in sorted(cache.dump().items()):
        paths.append(write_checkpoint(np.asarray(arr, dtype=complex), 0.0, out / f"{name}.bin", cache.grid))
    return paths
