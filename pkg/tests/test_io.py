import hashlib
import json

import numpy as np
import pytest

from bihartree import runs
from bihartree.diagnostics import CSV_COLUMNS, DiagnosticsSample
from bihartree.io import (
    FORMAT_VERSION,
    SCHEMA,
    ChecksumError,
    ConfigError,
    VersionError,
    append_timeseries,
    dump_config,
    list_checkpoints,
    load_config,
    parse_config,
    read_checkpoint,
    read_checkpoint_header,
    read_timeseries,
    truncate_timeseries,
    write_checkpoint,
)
from bihartree.spectral import make_grid

from .conftest import DATA

MINIMAL = "N = 3\nalpha = 2\nb = -1\np = 2.5\nd = 2\nL = 20\nM = 32\n"

# small run used for determinism and resume checks
SMALL = MINIMAL + "dt = 0.01\nT = 0.4\ncadence = 5\ncheckpoint_every = 10\nR_virial = 4\ninitial = gaussian\namplitude = 0.8\nvelocity = 0.5, 0\nperturbation = 0.05\nseed = 7\n"


def sample(t, **kw):
    vals = {c: float(i) + t for i, c in enumerate(CSV_COLUMNS)}
    vals.update(t=t, **kw)
    return DiagnosticsSample(**vals)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg["dt"] == 1e-3 and cfg["cadence"] == 10 and cfg["sigma"] == 0.5 and cfg["dealias"] is True
        assert cfg.params.N == 3 and cfg.grid.M == 32 and cfg.coupling == 1.0

    def test_positive_b_rejected(self):
        with pytest.raises(ConfigError, match="b must be negative"):
            parse_config(MINIMAL.replace("b = -1", "b = 0.5"))

    def test_unknown_key_line_number(self):
        with pytest.raises(ConfigError, match=r"cfg:3: unknown key 'gamma'"):
            parse_config("N = 3\n# comment\ngamma = 2\n", source="cfg")

    def test_syntax_error_line_number(self):
        with pytest.raises(ConfigError, match=r":2: expected"):
            parse_config("N = 3\nalpha 2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value for 'M'"):
            parse_config("M = 3.5\n")
        with pytest.raises(ConfigError, match="bad value for 'dealias'"):
            parse_config("dealias = maybe\n")

    def test_invalid_grid_and_evolve(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("M = 32", "M = 7"))
        with pytest.raises(ConfigError, match="dt"):
            parse_config(MINIMAL + "dt = 2\nT = 1\n")
        with pytest.raises(ConfigError, match="initial"):
            parse_config(MINIMAL + "initial = noise\n")
        with pytest.raises(ConfigError, match="init_path"):
            parse_config(MINIMAL + "initial = file\n")

    def test_overrides(self):
        cfg = parse_config(MINIMAL, overrides=["M=64", "defocusing = yes"])
        assert cfg["M"] == 64 and cfg.coupling == -1.0
        with pytest.raises(ConfigError, match="--set"):
            parse_config(MINIMAL, overrides=["M"])

    def test_missing_keys_reported(self):
        cfg = parse_config("")
        with pytest.raises(ConfigError, match="N, alpha, b, p"):
            cfg.params
        with pytest.raises(ConfigError, match="d, L, M"):
            cfg.grid

    def test_dump_idempotent(self):
        cfg = parse_config(SMALL)
        text = dump_config(cfg)
        assert [ln.split(" = ")[0] for ln in text.splitlines()] == list(SCHEMA)
        again = dump_config(parse_config(text))
        assert again == text
        assert parse_config(text).values == cfg.values

    @pytest.mark.parametrize("name", ["subthreshold.cfg", "morawetz.cfg"])
    def test_shipped_configs_validate(self, name):
        cfg = load_config(DATA / name)
        cfg.params, cfg.grid, cfg.evolve

    def test_load_without_path(self):
        assert load_config(None, ["N=5"])["N"] == 5


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path, rng):
        g = make_grid(3, 5.0, 8)
        u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        u[0, 0, 0] = complex(np.nextafter(0, 1), -0.0)
        p = write_checkpoint(u, 1.5, tmp_path / "a.bin", g, {"p": 2.5})
        v, t, hdr = read_checkpoint(p, with_header=True)
        assert v.tobytes() == u.tobytes() and t == 1.5
        assert hdr["params"] == {"p": 2.5} and hdr["format_version"] == FORMAT_VERSION
        assert p.stat().st_size == len(json.dumps(hdr, sort_keys=True)) + 1 + 16 * 8**3

    def test_truncated(self, tmp_path):
        g = make_grid(1, 1.0, 16)
        p = write_checkpoint(np.ones(16), 0.0, tmp_path / "a.bin", g)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ChecksumError):
            read_checkpoint(p)

    def test_corrupted(self, tmp_path):
        g = make_grid(1, 1.0, 16)
        p = write_checkpoint(np.ones(16), 0.0, tmp_path / "a.bin", g)
        raw = bytearray(p.read_bytes())
        raw[-3] ^= 0x01
        p.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            read_checkpoint(p)

    def test_version(self, tmp_path):
        g = make_grid(1, 1.0, 8)
        p = write_checkpoint(np.zeros(8), 0.0, tmp_path / "a.bin", g)
        head, _, payload = p.read_bytes().partition(b"\n")
        h = json.loads(head)
        h["format_version"] = 99
        p.write_bytes(json.dumps(h).encode() + b"\n" + payload)
        with pytest.raises(VersionError, match="99"):
            read_checkpoint(p)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"not json\n")
        with pytest.raises(ValueError, match="malformed"):
            read_checkpoint(p)
        with pytest.raises(ValueError, match="malformed"):
            read_checkpoint_header(p)

    def test_shape_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            write_checkpoint(np.zeros(4), 0.0, tmp_path / "a.bin", make_grid(1, 1.0, 8))

    def test_pinned_fixture(self):
        path = DATA / "pinned.ckpt"
        assert hashlib.sha256(path.read_bytes()).hexdigest() == "e246af47aa32af0ba254560e6e2af90c598bb13981e6cf47fdf8ae5a58c438a2"
        u, t, hdr = read_checkpoint(path, with_header=True)
        assert hdr["sha256"] == "4e4ced0f337f3cafe77606ddab8b2cec09059d695fa07e30e512261b65161c93"
        j = np.arange(64).reshape(8, 8)
        # values are exactly representable up to the last bit of each operation
        assert np.array_equal(u, j / 7.0 - 1j * np.sqrt(j + 1.0) / 3.0)
        assert t == 0.125 and hdr["L"] == 6.0

    def test_list_checkpoints(self, tmp_path):
        g = make_grid(1, 1.0, 8)
        for n in (20, 3, 100):
            write_checkpoint(np.zeros(8), n, tmp_path / f"ckpt_{n:08d}.bin", g)
        (tmp_path / "other.bin").write_bytes(b"")
        assert [p.name for p in list_checkpoints(tmp_path)] == ["ckpt_00000003.bin", "ckpt_00000020.bin", "ckpt_00000100.bin"]


class TestTimeseries:
    def test_header_and_rows(self, tmp_path):
        p = tmp_path / "ts.csv"
        for t in (0.0, 0.1, 0.2):
            append_timeseries(sample(t), p)
        lines = p.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "t,mass,energy,ME,MG,M_R,rhs_R,local_mass,lrstar_local,spacetime_acc,cauchy_h2"

    def test_seventeen_digits_round_trip(self, tmp_path):
        p = tmp_path / "ts.csv"
        x = 0.1 + 0.2
        append_timeseries(sample(x, mass=1 / 3, ME=float("nan")), p)
        row = p.read_text().splitlines()[1].split(",")
        assert row[0] == "0.30000000000000004"
        ts = read_timeseries(p)
        assert ts["t"][0] == x and ts["mass"][0] == 1 / 3 and np.isnan(ts["ME"][0])

    def test_truncate(self, tmp_path):
        p = tmp_path / "ts.csv"
        for t in (0.0, 0.1, 0.2, 0.3):
            append_timeseries(sample(t), p)
        truncate_timeseries(p, 0.1 + 0.1)
        assert list(read_timeseries(p)["t"]) == [0.0, 0.1, 0.2]

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_timeseries(p)


class TestRuns:
    def test_double_run_byte_identical(self, tmp_path):
        cfg = parse_config(SMALL)
        runs.run_evolve(cfg, tmp_path / "a")
        runs.run_evolve(cfg, tmp_path / "b")
        a, b = tmp_path / "a", tmp_path / "b"
        assert (a / runs.TIMESERIES).read_bytes() == (b / runs.TIMESERIES).read_bytes()
        ca, cb = list_checkpoints(a / runs.CHECKPOINTS), list_checkpoints(b / runs.CHECKPOINTS)
        assert len(ca) == 5
        assert [x.read_bytes() for x in ca] == [x.read_bytes() for x in cb]

    def test_rerun_replaces_outputs(self, tmp_path):
        cfg = parse_config(SMALL)
        runs.run_evolve(cfg, tmp_path)
        first = (tmp_path / runs.TIMESERIES).read_bytes()
        runs.run_evolve(cfg, tmp_path)
        assert (tmp_path / runs.TIMESERIES).read_bytes() == first

    def test_resume_matches_uninterrupted(self, tmp_path):
        cfg = parse_config(SMALL)
        full = runs.run_evolve(cfg, tmp_path / "full")
        part_dir = tmp_path / "part"
        runs.run_evolve(parse_config(SMALL.replace("T = 0.4", "T = 0.2")), part_dir)
        resumed = runs.run_evolve(cfg, part_dir, resume=part_dir / runs.CHECKPOINTS / "ckpt_00000020.bin")
        assert np.max(np.abs(resumed.trajectory.final - full.trajectory.final)) < 1e-12
        fa = read_timeseries(tmp_path / "full" / runs.TIMESERIES)
        fb = read_timeseries(part_dir / runs.TIMESERIES)
        for c in CSV_COLUMNS:
            np.testing.assert_allclose(fb[c], fa[c], rtol=1e-12, atol=1e-14, equal_nan=True)

    def test_resume_off_cadence(self, tmp_path):
        cfg = parse_config(SMALL)
        g = cfg.grid
        ck = write_checkpoint(np.zeros(g.shape), 0.03, tmp_path / "x.bin", g)
        with pytest.raises(ValueError, match="sample time"):
            runs.run_evolve(cfg, tmp_path / "o", resume=ck)

    def test_seeded_perturbation(self):
        cfg = parse_config(SMALL)
        g = cfg.grid
        a = runs.perturbation_field(cfg, g)
        assert np.array_equal(a, runs.perturbation_field(cfg, g))
        other = parse_config(SMALL.replace("seed = 7", "seed = 8"))
        assert not np.array_equal(a, runs.perturbation_field(other, g))

    def test_initial_from_file(self, tmp_path):
        cfg = parse_config(SMALL)
        g = cfg.grid
        u = np.full(g.shape, 0.25 + 0.5j)
        p = write_checkpoint(u, 0.0, tmp_path / "u0.bin", g)
        fcfg = parse_config(MINIMAL + f"initial = file\ninit_path = {p}\n")
        assert np.array_equal(runs.initial_field(fcfg, runs.build_cache(fcfg)), u)

    def test_initial_vector_length(self):
        cfg = parse_config(MINIMAL + "velocity = 1, 2, 3\n")
        with pytest.raises(ValueError, match="velocity needs 2"):
            runs.initial_field(cfg, runs.build_cache(cfg))

    def test_groundstate_outputs(self, tmp_path):
        cfg = parse_config(MINIMAL.replace("d = 2", "d = 3").replace("M = 32", "M = 16"))
        gs = runs.run_groundstate(cfg, tmp_path)
        u, _ = read_checkpoint(tmp_path / "groundstate.bin")
        assert np.array_equal(u, gs.phi)
        assert json.loads((tmp_path / "groundstate.json").read_text())["iterations"] == gs.iterations

    def test_dump_cache(self, tmp_path):
        cfg = parse_config(SMALL)
        paths = runs.dump_cache(runs.build_cache(cfg, R=4.0), tmp_path)
        names = sorted(p.stem for p in paths)
        assert {"k4", "riesz", "w_b", "a", "lap3_a", "psiR"} <= set(names)
        u, _ = read_checkpoint(tmp_path / "w_b.bin")
        assert np.all(u.imag == 0)

    def test_morawetz_verify_needs_radius(self):
        with pytest.raises(ValueError, match="R_virial"):
            runs.morawetz_verify(parse_config(MINIMAL))
