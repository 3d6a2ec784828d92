"""Ground state of phi + Lap^2 phi = K(phi) by Petviashvili iteration.

K(phi) = (I_alpha * w_b|phi|^p) w_b |phi|^(p-2) phi. The iteration works on
the real half-spectrum since the equation preserves realness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import energy, kinetic, mass, phase_potential
from .exponents import CriticalExponents
from .spectral import SpectralCache, half, irfftn, rfftn

log = logging.getLogger(__name__)


class NoConvergenceError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = list(trace or [])


class SeedError(ValueError):
    """The renormalization factor left the positive cone."""


class ThresholdError(ValueError):
    pass


@dataclass
class GroundStateResult:
    phi: np.ndarray
    mass: float
    deltaSq: float
    energy: float
    residual: float
    iterations: int
    S_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "mass": self.mass,
            "deltaSq": self.deltaSq,
            "energy": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "S_final": self.S_history[-1] if self.S_history else None,
        }


def hartree_k(phi, cache: SpectralCache) -> np.ndarray:
    return phase_potential(phi, cache) * phi


def elliptic_residual(phi, cache: SpectralCache) -> float:
    """||phi + Lap^2 phi - K(phi)|| / ||phi||, each term evaluated directly."""
    phi = np.asarray(phi)
    if np.iscomplexobj(phi):
        phi = phi.real
    lap2 = irfftn(rfftn(phi) * half(cache.k4), phi.shape)
    r = phi + lap2 - hartree_k(phi, cache)
    return float(np.linalg.norm(r) / np.linalg.norm(phi))


def _half_weights(shape) -> np.ndarray:
    """Multiplicity of each rfftn mode in the full spectrum."""
    m = shape[-1]
    w = np.full(m // 2 + 1, 2.0)
    w[0] = 1.0
    if m % 2 == 0:
        w[-1] = 1.0
    return w


def petviashvili(
    cache: SpectralCache,
    seed: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    gamma: float | None = None,
    diverge_window: int = 20,
) -> GroundStateResult:
    """Renormalized fixed-point iteration for the ground state.

    Raises SeedError when the stabilizing factor is non-positive and
    NoConvergenceError when the residual grows ``diverge_window`` times in a
    row or ``max_iter`` is exhausted.
    """
    p = cache.p
    if p < 2:
        raise ValueError(f"ground-state iteration needs p >= 2, got {p}")
    seed = np.asarray(seed)
    if seed.shape != cache.grid.shape:
        raise ValueError(f"seed shape {seed.shape} does not match grid {cache.grid.shape}")
    phi = np.real(seed).astype(float)
    if not np.any(phi):
        raise ValueError("seed must be nonzero")
    if gamma is None:
        gamma = (2 * p - 1) / (2 * p - 2)
    lin = 1.0 + half(cache.k4)
    shape = phi.shape
    wts = _half_weights(shape)

    S_hist: list[float] = []
    res_hist: list[float] = []
    grow = 0
    it = 0
    while True:
        ph = rfftn(phi)
        K = hartree_k(phi, cache)
        Kh = rfftn(K)
        num = np.sum(wts * lin * np.abs(ph) ** 2)
        den = np.sum(wts * np.real(Kh * np.conj(ph)))
        if not den > 0:
            if it == 0 and math.isfinite(den):
                raise SeedError(f"stabilizing factor is non-positive for this seed (denominator {den:.3e})")
            raise NoConvergenceError(f"iterate collapsed at iteration {it} (denominator {den:.3e})", res_hist)
        S = float(num / den)
        S_hist.append(S)
        lap2 = irfftn(ph * half(cache.k4), shape)
        res = float(np.linalg.norm(phi + lap2 - K) / np.linalg.norm(phi))
        res_hist.append(res)
        if not (math.isfinite(S) and math.isfinite(res)):
            raise NoConvergenceError(f"non-finite iterate at iteration {it}", res_hist)
        if res <= tol and abs(S - 1) <= tol:
            break
        if len(res_hist) > 1 and res > res_hist[-2]:
            grow += 1
            if grow >= diverge_window:
                raise NoConvergenceError(f"residual grew for {grow} consecutive iterations", res_hist)
        else:
            grow = 0
        if it >= max_iter:
            raise NoConvergenceError(f"no convergence within {max_iter} iterations (residual {res:.3e})", res_hist)
        try:
            fac = S**gamma
        except OverflowError:
            raise NoConvergenceError(f"stabilizing factor overflowed at iteration {it}", res_hist) from None
        phi = irfftn(fac * Kh / lin, shape)
        it += 1

    # sign convention: positive at the centre
    center = tuple(m // 2 for m in shape)
    if phi[center] < 0:
        phi = -phi
    u = phi.astype(complex)
    log.info("ground state converged in %d iterations, residual %.3e", it, res)
    return GroundStateResult(
        phi=u,
        mass=mass(u, cache.grid),
        deltaSq=kinetic(u, cache),
        energy=energy(u, cache),
        residual=res,
        iterations=it,
        S_history=S_hist,
        residual_history=res_hist,
    )


@dataclass
class ThresholdReport:
    ME: float
    MG: float
    below: bool

    def as_dict(self):
        return {"ME": self.ME, "MG": self.MG, "below": self.below}


def thresholds(u, gs: GroundStateResult, exps: CriticalExponents, cache: SpectralCache) -> ThresholdReport:
    """Scale-invariant mass-energy and mass-gradient ratios against phi."""
    sc = exps.s_c
    if not 0 < sc < 2:
        raise ThresholdError(f"thresholds need 0 < s_c < 2, got s_c = {sc}")
    if gs.energy == 0 or gs.mass == 0:
        raise ThresholdError("degenerate ground state (zero mass or energy)")
    e = (2 - sc) / sc
    Mu = mass(u, cache.grid)
    mr = Mu / gs.mass
    ME = energy(u, cache) / gs.energy * mr**e
    MG = math.sqrt(kinetic(u, cache) / gs.deltaSq) * math.sqrt(mr) ** e
    return ThresholdReport(ME=float(ME), MG=float(MG), below=bool(ME < 1 and MG < 1))
