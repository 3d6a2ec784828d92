"""Hartree nonlinearity, biharmonic propagator and Strang time stepping.

The evolution equation is

    i u_t + Lap^2 u - (I_alpha * w_b |u|^p) w_b |u|^(p-2) u = 0,

i.e. u_t = i Lap^2 u - i N(u). ``cache.coupling = -1`` flips the sign of the
nonlinearity (defocusing exploration).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .spectral import SpectralCache, apply_real_multiplier, fftn, ifftn

log = logging.getLogger(__name__)

_ABS_FLOOR = 1e-300


class BlowUpError(RuntimeError):
    """Non-finite values appeared in the state."""

    def __init__(self, msg, t_last_good=None, last_good=None):
        super().__init__(msg)
        self.t_last_good = t_last_good
        self.last_good = last_good


def abs_power(absu: np.ndarray, e: float) -> np.ndarray:
    if e == 0:
        return np.ones_like(absu)
    if e == 1:
        return absu
    if e == 2:
        return absu * absu
    return np.power(np.maximum(absu, _ABS_FLOOR), e)


def density(u, cache: SpectralCache) -> np.ndarray:
    """w_b |u|^p, the source of the Riesz potential."""
    return cache.w_b * abs_power(np.abs(u), cache.p)


def hartree_potential(u, cache: SpectralCache) -> np.ndarray:
    """V = I_alpha(w_b |u|^p); the density is real so V is real by construction."""
    return apply_real_multiplier(density(u, cache), cache.potential_half)


def phase_potential(u, cache: SpectralCache) -> np.ndarray:
    """Real G with N(u) = G u; constant along the exact nonlinear substep."""
    absu = np.abs(u)
    rho = cache.w_b * abs_power(absu, cache.p)
    V = apply_real_multiplier(rho, cache.potential_half)
    return cache.coupling * V * cache.w_b * abs_power(absu, cache.p - 2)


def nonlinearity(u, cache: SpectralCache) -> np.ndarray:
    return phase_potential(u, cache) * u


def nonlinear_substep(u, tau: float, cache: SpectralCache) -> np.ndarray:
    return u * np.exp(-1j * tau * phase_potential(u, cache))


def linear_propagator(u, tau: float, cache: SpectralCache) -> np.ndarray:
    """Free flow e^{i tau Lap^2}: multiplier e^{i tau |k|^4}."""
    if tau == 0:
        return np.array(u, dtype=complex, copy=True)
    return ifftn(cache.propagator_phase(tau) * fftn(u))


def strang_step(u, dt: float, cache: SpectralCache, nonlinear: bool = True) -> np.ndarray:
    if not nonlinear:
        return linear_propagator(u, dt, cache)
    u = nonlinear_substep(u, dt / 2, cache)
    u = linear_propagator(u, dt, cache)
    return nonlinear_substep(u, dt / 2, cache)


def mass(u, grid) -> float:
    return float(grid.dV * np.sum(np.abs(u) ** 2))


def kinetic(u, cache: SpectralCache) -> float:
    """||Lap u||^2 computed from the Fourier side (Parseval)."""
    uh = fftn(u)
    g = cache.grid
    return float(g.dV / g.npoints * np.sum(cache.k4 * np.abs(uh) ** 2))


def potential_energy(u, cache: SpectralCache) -> float:
    """int (I_alpha * w_b|u|^p) w_b |u|^p."""
    rho = density(u, cache)
    V = apply_real_multiplier(rho, cache.potential_half)
    return float(cache.grid.dV * np.sum(V * rho))


def energy(u, cache: SpectralCache) -> float:
    return kinetic(u, cache) - cache.coupling / cache.p * potential_energy(u, cache)


@dataclass
class EvolveConfig:
    dt: float = 1e-3
    T: float = 1.0
    cadence: int = 10
    dealias: bool = True
    sigma: float = 0.5
    R_diag: float | None = None
    nonlinear: bool = True
    checkpoint_every: int = 0  # steps; 0 disables
    keep_states: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if self.T > 0 and not self.dt <= self.T:
            raise ValueError(f"dt={self.dt} exceeds T={self.T}")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            raise ValueError(f"cadence must be an integer >= 1, got {self.cadence}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    @property
    def nsteps(self) -> int:
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * max(self.T, self.dt):
            raise ValueError(f"T={self.T} is not a whole number of steps dt={self.dt}")
        return int(n)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    states: dict = field(default_factory=dict)  # step -> array, when kept
    checkpoints: dict = field(default_factory=dict)  # step -> path
    final: np.ndarray | None = None

    def state_at(self, step):
        return self.states[step]


def evolve(
    u0: np.ndarray,
    cfg: EvolveConfig,
    cache: SpectralCache,
    hooks: tuple[Callable, ...] = (),
    checkpoint_dir: str | Path | None = None,
    step0: int = 0,
    writer: Callable | None = None,
    sample_start: bool = True,
) -> Trajectory:
    """Fixed-step Strang integration from step ``step0`` to ``cfg.nsteps``.

    Hooks are called as ``hook(step, t, u)`` at every sample step (multiples
    of the cadence plus the final step); a non-None return value is stored in
    ``Trajectory.samples``. Sample and checkpoint steps are absolute indices,
    so resuming from a checkpoint reproduces the uninterrupted schedule.
    ``writer(u, t, path)`` persists checkpoints. A resumed run passes
    ``sample_start=False`` so the starting step is not sampled twice.
    """
    if u0.shape != cache.grid.shape:
        raise ValueError(f"initial field shape {u0.shape} does not match grid {cache.grid.shape}")
    if cache.dealias != cfg.dealias or cache.sigma != cfg.sigma:
        raise ValueError("cache was built with different dealias/sigma settings than the config")
    n_end = cfg.nsteps
    dt = cfg.dt
    u = np.array(u0, dtype=complex, copy=True)
    traj = Trajectory()
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    def is_sample(n):
        return n % cfg.cadence == 0 or n == n_end

    def is_checkpoint(n):
        return cfg.checkpoint_every and (n % cfg.checkpoint_every == 0 or n == n_end)

    def record(n, u, sample=True):
        t = n * dt
        if not np.all(np.isfinite(u)):
            last = traj.steps[-1] if traj.steps else None
            raise BlowUpError(
                f"non-finite state at t={t:g} (step {n})",
                t_last_good=None if last is None else last * dt,
                last_good=traj.checkpoints.get(last),
            )
        if not sample:
            return
        if is_sample(n):
            traj.times.append(t)
            traj.steps.append(n)
            for hook in hooks:
                out = hook(n, t, u)
                if out is not None:
                    traj.samples.append(out)
            if cfg.keep_states:
                traj.states[n] = u.copy()
        if is_checkpoint(n) and ckdir is not None and writer is not None:
            path = ckdir / f"ckpt_{n:08d}.bin"
            writer(u, t, path)
            traj.checkpoints[n] = path

    record(step0, u, sample_start)
    n = step0
    while n < n_end:
        sync = n + 1
        while not (is_sample(sync) or is_checkpoint(sync)):
            sync += 1
        if cfg.nonlinear:
            # merged half-steps: N(dt/2) N(dt/2) = N(dt) because |u| is invariant
            u = nonlinear_substep(u, dt / 2, cache)
            for i in range(sync - n):
                u = linear_propagator(u, dt, cache)
                u = nonlinear_substep(u, dt if i < sync - n - 1 else dt / 2, cache)
        else:
            u = linear_propagator(u, (sync - n) * dt, cache)
        n = sync
        record(n, u)
    traj.final = u
    log.debug("evolved %d steps to t=%g", n_end - step0, n_end * dt)
    return traj


def gaussian(grid, amplitude=1.0, width=1.0, velocity=None, center=None) -> np.ndarray:
    """A exp(-|x - c|^2 / w^2) e^{i v.x}."""
    x = grid.coords
    c = center if center is not None else [0.0] * grid.d
    r2 = sum((xj - cj) ** 2 for xj, cj in zip(x, c))
    u = amplitude * np.exp(-r2 / width**2) * np.ones(grid.shape)
    if velocity is not None:
        u = u * np.exp(1j * sum(vj * xj for vj, xj in zip(velocity, x)))
    return u.astype(complex)


def relative_drift(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v - v[0])) / abs(v[0])) if v[0] != 0 else math.nan
