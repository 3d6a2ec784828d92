"""Command-line entry point: ``bihartree <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import runs
from .exponents import check_condition_C, compute_exponents, in_intercritical_range
from .io import ConfigError, dump_config, load_config
from .spectral import set_threads

SUBCOMMANDS = ("exponents", "check-c", "groundstate", "evolve", "morawetz-verify", "scatter-scan", "evac-scan")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--threads", type=int, default=None, help="FFT worker threads (default: BIHARTREE_THREADS or 1)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--dump-cache", metavar="DIR", help="write the spectral cache arrays as checkpoint files")
    p.add_argument("--defocusing", action="store_true", help="flip the sign of the nonlinearity")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="bihartree", description="Fourth-order inhomogeneous Hartree simulator and diagnostics.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.add_parser("exponents", parents=[common], help="critical exponents for (N, alpha, b, p)")
    sub.add_parser("check-c", parents=[common], help="verdict on the parameter condition (C)")
    sub.add_parser("groundstate", parents=[common], help="Petviashvili ground state and summary")
    ev = sub.add_parser("evolve", parents=[common], help="run the time integration")
    ev.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint of the same run")
    ev.add_argument("--print-config", action="store_true", help="print the canonical config and exit")
    mv = sub.add_parser("morawetz-verify", parents=[common], help="finite-difference check of the Morawetz identity")
    mv.add_argument("--samples", type=int, default=20)
    sc = sub.add_parser("scatter-scan", parents=[common], help="pullback Cauchy analysis of stored checkpoints")
    sc.add_argument("--checkpoints", metavar="DIR", help="checkpoint directory (default: <out>/checkpoints)")
    ea = sub.add_parser("evac-scan", parents=[common], help="local-mass minima from a time series")
    ea.add_argument("--timeseries", metavar="CSV", help="time-series file (default: <out>/timeseries.csv)")
    return parser


def _emit(data: dict, as_json: bool, out=None):
    out = out if out is not None else sys.stdout
    if as_json:
        json.dump(_clean(data), out, indent=2, sort_keys=True)
        out.write("\n")
        return
    for k, v in data.items():
        if isinstance(v, float):
            v = f"{v:.12g}"
        out.write(f"{k} = {v}\n")


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg["output_dir"])


def _run(args) -> int:
    overrides = list(args.overrides)
    if args.defocusing:
        overrides.append("defocusing=true")
    cfg = load_config(args.config, overrides)
    if args.dump_cache:
        paths = runs.dump_cache(runs.build_cache(cfg, R=cfg["R_virial"]), args.dump_cache)
        logging.info("wrote %d cache arrays to %s", len(paths), args.dump_cache)

    cmd = args.command
    if cmd == "exponents":
        params = cfg.params
        exps = compute_exponents(params)
        rng = in_intercritical_range(params, exps)
        data = dict(exps.as_dict())
        data.update(nonradial_range=rng.nonradial, radial_range=rng.radial)
        _emit(data, args.json)
    elif cmd == "check-c":
        v = cfg.values
        rep = check_condition_C((v["N"], v["alpha"], v["b"], v["p"]))
        _emit({"condition_C": rep.ok, "violations": rep.violations}, args.json)
    elif cmd == "groundstate":
        gs = runs.run_groundstate(cfg, _out_dir(args, cfg))
        _emit(gs.summary(), args.json)
    elif cmd == "evolve":
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        res = runs.run_evolve(cfg, _out_dir(args, cfg), resume=args.resume)
        last = res.tracker.samples[-1]
        summary = {
            "steps": res.trajectory.steps[-1] if res.trajectory.steps else 0,
            "t": last.t,
            "mass": last.mass,
            "energy": last.energy,
            "local_mass": last.local_mass,
            "spacetime_acc": last.spacetime_acc,
            "checkpoints": len(res.trajectory.checkpoints),
        }
        _emit(summary, args.json)
    elif cmd == "morawetz-verify":
        rep = runs.morawetz_verify(cfg, n_samples=args.samples)
        if args.json:
            _emit(rep, True)
        else:
            _emit({k: rep[k] for k in ("max_rel_err", "max_assembly", "M_R0")}, False)
    elif cmd == "scatter-scan":
        ck = Path(args.checkpoints) if args.checkpoints else _out_dir(args, cfg) / runs.CHECKPOINTS
        rep = runs.scatter_scan(cfg, ck)
        if args.json:
            _emit(rep, True)
        else:
            _emit({k: rep[k] for k in ("verdict", "final_residual", "threshold")} | {"consecutive": rep["consecutive"]}, False)
    elif cmd == "evac-scan":
        ts = Path(args.timeseries) if args.timeseries else _out_dir(args, cfg) / runs.TIMESERIES
        _emit(runs.evac_scan(ts), args.json)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    set_threads(args.threads)
    try:
        return _run(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as e:
        print(f"bihartree {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
