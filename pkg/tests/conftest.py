from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from bihartree import runs
from bihartree.dynamics import gaussian
from bihartree.exponents import ModelParams, compute_exponents
from bihartree.groundstate import petviashvili
from bihartree.io import load_config
from bihartree.spectral import SpectralCache, make_grid

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

# model parameters shared by the simulation fixtures
FIXTURE = dict(alpha=2.0, b=-1.0, p=2.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fixture_params():
    return ModelParams(3, **FIXTURE)


@pytest.fixture(scope="session")
def fixture_exps(fixture_params):
    return compute_exponents(fixture_params)


@pytest.fixture(scope="session")
def gs128():
    """Ground states on the d=3, L=40, M=128 grid from two different seeds."""
    g = make_grid(3, 40.0, 128)
    cache = SpectralCache(g, **FIXTURE)
    a = petviashvili(cache, gaussian(g, 1.0, 1.0), tol=1e-8, max_iter=500)
    b = petviashvili(cache, gaussian(g, 0.7, 2.0), tol=1e-8, max_iter=500)
    return cache, a, b


@pytest.fixture(scope="session")
def gs64():
    g = make_grid(3, 40.0, 64)
    cache = SpectralCache(g, **FIXTURE)
    return cache, petviashvili(cache, gaussian(g, 1.0, 1.0))


@pytest.fixture(scope="session")
def subthreshold_run(tmp_path_factory):
    """T=20 evolution of 0.5 phi + perturbation, with CSV and checkpoints."""
    cfg = load_config(DATA / "subthreshold.cfg")
    out = tmp_path_factory.mktemp("subthreshold")
    res = runs.run_evolve(cfg, out)
    return cfg, res


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
