"""Periodic grids, Fourier multipliers and real-space weights.

Layout conventions (fixed, checkpoints depend on them):

* arrays are C-ordered with shape ``(M,) * d``; axis j carries coordinate x_j;
* coordinates are ``-L/2 + h*i`` for ``i = 0..M-1``, so the origin sits at
  index ``M//2`` and ``|x|`` is the min-image distance;
* wavevectors follow ``numpy.fft.fftfreq`` ordering (negative frequencies in
  the upper half of each axis).
"""

from __future__ import annotations

import functools
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import chebyshev as cheb
from scipy.special import erfc

_workers = max(1, int(os.environ.get("BIHARTREE_THREADS", "1") or 1))


def set_threads(n: int | None) -> None:
    """Bound the FFT worker count (falls back to BIHARTREE_THREADS)."""
    global _workers
    if n is None:
        n = int(os.environ.get("BIHARTREE_THREADS", "1") or 1)
    _workers = max(1, int(n))


def fftn(u):
    return sfft.fftn(u, workers=_workers)


def ifftn(u):
    return sfft.ifftn(u, workers=_workers)


def rfftn(u):
    return sfft.rfftn(u, workers=_workers)


def irfftn(u, shape):
    return sfft.irfftn(u, s=shape, workers=_workers)


@dataclass(frozen=True)
class TorusGrid:
    d: int
    L: float
    M: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"grid dimension d must be 1, 2 or 3, got {self.d}")
        if int(self.M) != self.M or self.M < 8 or self.M % 2:
            raise ValueError(f"M must be an even integer >= 8, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def dV(self) -> float:
        """Quadrature weight h^d."""
        return self.h**self.d

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    @property
    def npoints(self) -> int:
        return self.M**self.d

    def memory_estimate(self) -> int:
        """Bytes held by one complex field on this grid."""
        return 16 * self.npoints

    @functools.cached_property
    def x1(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.M)

    @functools.cached_property
    def k1(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.M, d=self.h)

    def _axis(self, v, j):
        shape = [1] * self.d
        shape[j] = self.M
        return v.reshape(shape)

    @functools.cached_property
    def coords(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        return [self._axis(self.x1, j) for j in range(self.d)]

    @functools.cached_property
    def kvec(self) -> list:
        return [self._axis(self.k1, j) for j in range(self.d)]

    @functools.cached_property
    def kvec_odd(self) -> list:
        """Wavevectors with the Nyquist entry zeroed, for odd-order derivatives."""
        k = self.k1.copy()
        k[self.M // 2] = 0.0
        return [self._axis(k, j) for j in range(self.d)]

    @functools.cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.coords)) * np.ones(self.shape)

    @functools.cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.kvec) * np.ones(self.shape)

    @functools.cached_property
    def k4(self) -> np.ndarray:
        return self.k2**2


def make_grid(d: int, L: float, M: int) -> TorusGrid:
    return TorusGrid(d, L, M)


def half(m: np.ndarray) -> np.ndarray:
    """Restrict a full (even) multiplier to the rfftn half-spectrum."""
    return m[..., : m.shape[-1] // 2 + 1]


def transform(u: np.ndarray, grid: TorusGrid, inverse: bool = False) -> np.ndarray:
    """Unitary Fourier coefficients: sum |c_k|^2 equals h^d sum |u|^2."""
    u = np.asarray(u)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    scale = math.sqrt(grid.dV)
    if inverse:
        return sfft.ifftn(u, norm="ortho", workers=_workers) / scale
    return sfft.fftn(u, norm="ortho", workers=_workers) * scale


def apply_multiplier(u: np.ndarray, m) -> np.ndarray:
    """inverse-transform(m * transform(u)); normalization cancels."""
    u = np.asarray(u)
    if np.ndim(m) and np.shape(m) != u.shape:
        raise ValueError(f"multiplier shape {np.shape(m)} does not match field {u.shape}")
    return ifftn(m * fftn(u))


def apply_real_multiplier(f: np.ndarray, m_half: np.ndarray) -> np.ndarray:
    """Real field times a real even multiplier given on the half-spectrum."""
    return irfftn(rfftn(f) * m_half, f.shape)


def laplacian(u, grid):
    return apply_multiplier(u, -grid.k2)


def gradient(u, grid) -> list:
    uh = fftn(u)
    return [ifftn(1j * k * uh) for k in grid.kvec_odd]


def riesz_multiplier(grid: TorusGrid, alpha: float) -> np.ndarray:
    """|k|^-alpha with the zero mode set to 0."""
    if not alpha > 0:
        raise ValueError(f"Riesz order alpha must be positive, got {alpha}")
    k2 = grid.k2.copy()
    zero = k2 == 0
    k2[zero] = 1.0
    m = k2 ** (-alpha / 2)
    m[zero] = 0.0
    return m


def riesz_apply(g: np.ndarray, alpha: float, grid: TorusGrid) -> np.ndarray:
    m = riesz_multiplier(grid, alpha)
    if np.isrealobj(g):
        return apply_real_multiplier(g, half(m))
    return apply_multiplier(g, m)


def dealias_mask(grid: TorusGrid) -> np.ndarray:
    """Two-thirds rule: keep modes with |m_j| < M/3 on every axis."""
    keep = np.abs(np.fft.fftfreq(grid.M, d=1.0 / grid.M)) < grid.M / 3
    out = np.ones(grid.shape)
    for j in range(grid.d):
        out = out * grid._axis(keep.astype(float), j)
    return out


def weight_b(grid: TorusGrid, b: float, sigma: float = 0.5) -> np.ndarray:
    """(|x|^2 + (sigma h)^2)^(b/2); b = 0 gives the homogeneous weight 1."""
    if b > 0:
        raise ValueError(f"b must be non-positive, got {b}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if b == 0:
        return np.ones(grid.shape)
    return (grid.radius**2 + (sigma * grid.h) ** 2) ** (b / 2)


# -- smooth profiles ---------------------------------------------------------


# sigma(t) = exp(-_STEP_C / t); 2 halves the Fourier tail of the step at ~20
# points per transition compared with 1.
_STEP_C = 2.0


def _sig(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-_STEP_C / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a, b = _sig(t), _sig(1.0 - t)
    return a / (a + b)


@functools.lru_cache(maxsize=1)
def _step_integrals():
    """Chebyshev antiderivatives of the smooth step on [0, 1]."""
    c = cheb.Chebyshev.interpolate(smooth_step, 120, domain=[0, 1])
    F1 = c.integ(lbnd=0)
    return F1, F1.integ(lbnd=0)


def cutoff_profile(t):
    """Radial bump: 1 on [0, 1/2], 0 on [1, inf), monotone in between."""
    return smooth_step(2.0 * (1.0 - np.asarray(t, dtype=float)))


def cutoff_psi(grid: TorusGrid, R: float) -> np.ndarray:
    if not R > 0:
        raise ValueError(f"cutoff radius must be positive, got {R}")
    if R > grid.L / 2:
        warnings.warn(
            f"cutoff radius R={R} exceeds the inscribed half-box L/2={grid.L / 2}; "
            "the cutoff is truncated by periodicity",
            stacklevel=2,
        )
    return cutoff_profile(grid.radius / R)


# -- virial weight -----------------------------------------------------------


def virial_profile(rho):
    """(f, f', f'') of the unscaled radial virial profile.

    f'' = 1 on [0, 1], 1 - S(rho - 1) on [1, 2], 0 beyond; f(0) = f'(0) = 0.
    """
    rho = np.asarray(rho, dtype=float)
    F1, F2 = _step_integrals()
    f = np.empty_like(rho)
    f1 = np.empty_like(rho)
    f2 = np.empty_like(rho)
    inner = rho <= 1
    f[inner] = rho[inner] ** 2 / 2
    f1[inner] = rho[inner]
    f2[inner] = 1.0
    mid = (rho > 1) & (rho < 2)
    t = rho[mid] - 1.0
    f2[mid] = 1.0 - smooth_step(t)
    f1[mid] = 1.0 + t - F1(t)
    f[mid] = 0.5 + t + t**2 / 2 - F2(t)
    outer = rho >= 2
    slope = 2.0 - F1(1.0)
    f2[outer] = 0.0
    f1[outer] = slope
    f[outer] = 2.0 - F2(1.0) + slope * (rho[outer] - 2.0)
    return f, f1, f2


@dataclass
class VirialBundle:
    """Virial weight a = f_R sampled on the grid with its derivative tensors.

    ``hess[j][k]`` is d_jk a, ``dlap[j][k]`` is d_jk (Lap a).
    """

    R: float
    a: np.ndarray
    grad: list
    hess: list
    lap: np.ndarray
    lap2: np.ndarray
    lap3: np.ndarray
    dlap: list
    r_taper: tuple = field(default=(0.0, 0.0))


def _outer_taper(r, ra, rb):
    """(T, T', int_ra^r T) for an erfc blend from 1 at r = ra to 0 at r = rb.

    Analytic in r, so its Fourier tail is Gaussian; the residual at the two
    ends is erfc(5)/2 ~ 8e-13.
    """
    c, delta = (ra + rb) / 2, (rb - ra) / 10
    z = (r - c) / delta
    za = (ra - c) / delta

    def prim(z):
        return z * erfc(z) - np.exp(-(z**2)) / np.sqrt(np.pi)

    T = 0.5 * erfc(z)
    T1 = -np.exp(-(z**2)) / (np.sqrt(np.pi) * delta)
    return T, T1, 0.5 * delta * (prim(z) - prim(za))


def _taper_start(R: float, L: float) -> float:
    # at least L/4 of blending room so the taper stays resolved when 2R is close to L/2
    return min(2.0 * R, L / 4)


def _radial_weight(grid: TorusGrid, R: float):
    """Radial values (g, g', g'') of the periodized weight as functions of r.

    g' = R f'(r/R) T(r) with T an erfc blend from 1 at ra to 0 at L/2, so
    the sampled weight is smooth and periodic (constant near the faces of
    the box). Inside r <= ra (which is >= R) this is R^2 f(r/R) up to ~1e-12.
    """
    r = grid.radius
    ra, rb = _taper_start(R, grid.L), grid.L / 2
    f, f1, f2 = virial_profile(r / R)
    T, T1, IT = _outer_taper(r, ra, rb)
    gp = R * f1 * T
    gpp = f2 * T + R * f1 * T1

    g = R**2 * f
    fa = virial_profile(np.array([ra / R]))[0][0] * R**2
    r2 = max(ra, 2.0 * R)
    g2 = fa
    if ra < 2.0 * R:
        # integrate g' across the part of the f'' transition that overlaps the taper
        def gprime(s):
            return R * virial_profile(s / R)[1] * _outer_taper(s, ra, rb)[0]

        C = cheb.Chebyshev.interpolate(gprime, 200, domain=[ra, r2]).integ(lbnd=ra)
        mid = (r > ra) & (r <= r2)
        g[mid] = fa + C(r[mid])
        g2 = fa + C(r2)
    slope = virial_profile(np.array([2.0]))[1][0] * R
    IT2 = _outer_taper(np.array([r2]), ra, rb)[2][0]
    out = r > r2
    g[out] = g2 + slope * (IT[out] - IT2)
    return g, gp, gpp, (ra, rb)


def virial_weight(grid: TorusGrid, R: float) -> VirialBundle:
    """Sample the virial weight and differentiate it spectrally."""
    if not 0 < R < grid.L / 4:
        raise ValueError(f"virial radius must satisfy 0 < R < L/4 = {grid.L / 4}, got R={R}")
    a, _, _, taper = _radial_weight(grid, R)
    ah = fftn(a)
    kv, ko, d = grid.kvec, grid.kvec_odd, grid.d

    def real(m):
        return ifftn(m * ah).real

    grad = [real(1j * ko[j]) for j in range(d)]
    hess = [[real(-kv[j] * kv[k]) for k in range(d)] for j in range(d)]
    k2 = grid.k2
    dlap = [[real(kv[j] * kv[k] * k2) for k in range(d)] for j in range(d)]
    return VirialBundle(
        R=R,
        a=a,
        grad=grad,
        hess=hess,
        lap=real(-k2),
        lap2=real(k2**2),
        lap3=real(-(k2**3)),
        dlap=dlap,
        r_taper=taper,
    )


def virial_hessian_analytic(grid: TorusGrid, R: float) -> list:
    """d_jk a from the radial formula (delta_jk/r - x_j x_k/r^3) g' + x_j x_k/r^2 g''."""
    _, gp, gpp, _ = _radial_weight(grid, R)
    r = grid.radius
    x = grid.coords
    safe = np.where(r > 0, r, 1.0)
    out = []
    for j in range(grid.d):
        row = []
        for k in range(grid.d):
            xx = x[j] * x[k] / safe**2
            val = ((1.0 if j == k else 0.0) - xx) * gp / safe + xx * gpp
            # at the origin the weight is |x|^2/2
            val = np.where(r > 0, val, 1.0 if j == k else 0.0)
            row.append(val)
        out.append(row)
    return out


# -- cache -------------------------------------------------------------------


@dataclass
class SpectralCache:
    """Everything the dynamics and diagnostics reuse for one parameter set."""

    grid: TorusGrid
    alpha: float
    b: float
    p: float
    sigma: float = 0.5
    dealias: bool = True
    coupling: float = 1.0  # +1 focusing (minus sign in the equation), -1 defocusing
    R: float | None = None

    def __post_init__(self):
        g = self.grid
        self.riesz = riesz_multiplier(g, self.alpha)
        self.mask = dealias_mask(g) if self.dealias else np.ones(g.shape)
        self.potential_half = half(self.riesz * self.mask)
        self.w_b = weight_b(g, self.b, self.sigma)
        self.psiR = None
        self.virial = None
        if self.R is not None:
            self.psiR = cutoff_psi(g, self.R)
            if self.R < g.L / 4:
                self.virial = virial_weight(g, self.R)
        self._phases = {}

    @property
    def k2(self):
        return self.grid.k2

    @property
    def k4(self):
        return self.grid.k4

    def propagator_phase(self, tau: float) -> np.ndarray:
        ph = self._phases.get(tau)
        if ph is None:
            if len(self._phases) > 8:
                self._phases.clear()
            ph = np.exp(1j * tau * self.grid.k4)
            self._phases[tau] = ph
        return ph

    def dump(self) -> dict:
        """Named real arrays for debugging dumps."""
        out = {"k2": self.k2, "k4": self.k4, "riesz": self.riesz, "w_b": self.w_b}
        if self.psiR is not None:
            out["psiR"] = self.psiR
        if self.virial is not None:
            v = self.virial
            out.update(a=v.a, lap_a=v.lap, lap2_a=v.lap2, lap3_a=v.lap3)
        return out
