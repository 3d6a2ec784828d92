"""Run configuration, binary checkpoints and CSV time series.

Config files are flat ``key = value`` text; ``#`` starts a comment. Every key
belongs to the schema below, unknown keys are rejected and errors carry the
line number.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsSample
from .dynamics import EvolveConfig
from .exponents import ModelParams
from .spectral import TorusGrid

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


class VersionError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _floats(s: str) -> list:
    s = s.strip()
    if not s:
        return []
    return [float(x) for x in s.split(",")]


def _opt_float(s: str):
    s = s.strip()
    return None if s.lower() in ("", "none") else float(s)


def _int(s: str) -> int:
    f = float(s)
    if f != int(f):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


# key: (parser, default); None default means required for the subsystems that use it
SCHEMA = {
    # model
    "N": (_int, None),
    "alpha": (float, None),
    "b": (float, None),
    "p": (float, None),
    # grid
    "d": (_int, None),
    "L": (float, None),
    "M": (_int, None),
    # time stepping
    "dt": (float, 1e-3),
    "T": (float, 1.0),
    "cadence": (_int, 10),
    "sigma": (float, 0.5),
    "dealias": (_bool, True),
    "nonlinear": (_bool, True),
    "defocusing": (_bool, False),
    "checkpoint_every": (_int, 0),
    # diagnostics
    "R": (_opt_float, None),
    "R_virial": (_opt_float, None),
    "scatter_threshold": (float, 1e-3),
    # initial data
    "initial": (str, "gaussian"),
    "amplitude": (float, 1.0),
    "width": (float, 1.0),
    "velocity": (_floats, []),
    "center": (_floats, []),
    "lambda": (float, 0.5),
    "perturbation": (float, 0.0),
    "init_path": (str, ""),
    "seed": (_int, 0),
    # ground state
    "gs_tol": (float, 1e-8),
    "gs_max_iter": (_int, 500),
    "gs_seed_width": (float, 1.0),
    # outputs
    "output_dir": (str, "run"),
}

INITIAL_FAMILIES = ("gaussian", "groundstate", "file")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def params(self) -> ModelParams:
        missing = [k for k in ("N", "alpha", "b", "p") if self.values.get(k) is None]
        if missing:
            raise ConfigError(f"missing model parameter(s): {', '.join(missing)}")
        v = self.values
        return ModelParams(v["N"], v["alpha"], v["b"], v["p"])

    @property
    def grid(self) -> TorusGrid:
        missing = [k for k in ("d", "L", "M") if self.values.get(k) is None]
        if missing:
            raise ConfigError(f"missing grid key(s): {', '.join(missing)}")
        v = self.values
        return TorusGrid(v["d"], v["L"], v["M"])

    @property
    def coupling(self) -> float:
        return -1.0 if self.values["defocusing"] else 1.0

    @property
    def evolve(self) -> EvolveConfig:
        v = self.values
        return EvolveConfig(
            dt=v["dt"],
            T=v["T"],
            cadence=v["cadence"],
            dealias=v["dealias"],
            sigma=v["sigma"],
            R_diag=v["R"],
            nonlinear=v["nonlinear"],
            checkpoint_every=v["checkpoint_every"],
        )

    def validate(self) -> "RunConfig":
        """Check every sub-configuration that has enough keys to be built."""
        v = self.values
        if all(v.get(k) is not None for k in ("N", "alpha", "b", "p")):
            try:
                self.params
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if all(v.get(k) is not None for k in ("d", "L", "M")):
            try:
                self.grid
            except ValueError as e:
                raise ConfigError(str(e)) from None
        try:
            self.evolve
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if v["initial"] not in INITIAL_FAMILIES:
            raise ConfigError(f"initial must be one of {INITIAL_FAMILIES}, got {v['initial']!r}")
        if v["initial"] == "file" and not v["init_path"]:
            raise ConfigError("initial = file needs init_path")
        return self


def _set(values: dict, key: str, raw: str, where: str):
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    parser = SCHEMA[key][0]
    try:
        values[key] = parser(raw)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None


def parse_config(text: str, source: str = "<config>", overrides=()) -> RunConfig:
    values = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        _set(values, key, raw, f"{source}:{lineno}")
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"--set {ov!r}: expected key=value")
        key, raw = (s.strip() for s in ov.split("=", 1))
        _set(values, key, raw, f"--set {ov}")
    return RunConfig(values).validate()


def load_config(path=None, overrides=()) -> RunConfig:
    if path is None:
        return parse_config("", overrides=overrides)
    path = Path(path)
    return parse_config(path.read_text(), source=str(path), overrides=overrides)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text: schema order, every key, normalized values."""
    return "".join(f"{k} = {_fmt(cfg.values[k])}\n" for k in SCHEMA)


# -- checkpoints ---------------------------------------------------------------


def write_checkpoint(u, t: float, path, grid: TorusGrid, params: dict | None = None) -> Path:
    """JSON header line followed by little-endian interleaved complex128."""
    u = np.asarray(u)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    payload = np.ascontiguousarray(u, dtype="<c16").tobytes(order="C")
    header = {
        "format_version": FORMAT_VERSION,
        "d": grid.d,
        "M": grid.M,
        "L": grid.L,
        "t": float(t),
        "params": params or {},
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    os.replace(tmp, path)
    return path


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: malformed checkpoint header ({e})") from None


def read_checkpoint(path, with_header: bool = False):
    """Returns (u, t), or (u, t, header) with ``with_header``."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: malformed checkpoint header ({e})") from None
    ver = header.get("format_version")
    if ver != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint format_version {ver!r} (expected {FORMAT_VERSION})")
    d, M = int(header["d"]), int(header["M"])
    expected = 16 * M**d
    if len(payload) != expected or hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch ({len(payload)} bytes, expected {expected})")
    u = np.frombuffer(payload, dtype="<c16").reshape((M,) * d).astype(complex)
    if with_header:
        return u, header["t"], header
    return u, header["t"]


def checkpoint_writer(grid: TorusGrid, params: dict | None = None):
    def write(u, t, path):
        write_checkpoint(u, t, path, grid, params)

    return write


def list_checkpoints(directory) -> list[Path]:
    return sorted(Path(directory).glob("ckpt_*.bin"))


# -- time series ----------------------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".17g")


def append_timeseries(sample: DiagnosticsSample, path) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        if new:
            fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.write(",".join(_num(v) for v in sample.row()) + "\n")


def read_timeseries(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: not a time-series file (bad header)")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(CSV_COLUMNS)}


def truncate_timeseries(path, t_max: float) -> None:
    """Drop rows with t > t_max (used before resuming a run)."""
    path = Path(path)
    lines = path.read_text().splitlines(keepends=True)
    keep = lines[:1] + [ln for ln in lines[1:] if float(ln.split(",", 1)[0]) <= t_max * (1 + 1e-12) + 1e-15]
    path.write_text("".join(keep))


def finite_or_none(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None
