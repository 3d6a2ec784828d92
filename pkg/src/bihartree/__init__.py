"""Pseudospectral simulator and diagnostics for the fourth-order inhomogeneous
generalized Hartree equation

    i u_t + Lap^2 u - (I_alpha * |x|^b |u|^p) |x|^b |u|^(p-2) u = 0.
"""

from .diagnostics import morawetz_rhs, scatter_detect
from .dynamics import EvolveConfig, energy, evolve, mass
from .exponents import CriticalExponents, ModelParams, compute_exponents
from .groundstate import petviashvili, thresholds
from .io import load_config
from .spectral import SpectralCache, TorusGrid, make_grid

__all__ = [
    "CriticalExponents",
    "EvolveConfig",
    "ModelParams",
    "SpectralCache",
    "TorusGrid",
    "compute_exponents",
    "energy",
    "evolve",
    "load_config",
    "make_grid",
    "mass",
    "morawetz_rhs",
    "petviashvili",
    "scatter_detect",
    "thresholds",
]

__version__ = "0.1.0"
