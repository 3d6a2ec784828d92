"""Morawetz identity, local mass, spacetime norms and the scattering detector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .dynamics import abs_power, energy, hartree_potential, kinetic, linear_propagator, mass
from .exponents import CriticalExponents
from .spectral import SpectralCache, TorusGrid, VirialBundle, fftn, ifftn

SHARP = "sharp-ball"
PSI = "psi-cutoff"

SCATTERING = "scattering-consistent"
INCONCLUSIVE = "inconclusive"
NON_SCATTERING = "non-scattering-trend"


class InsufficientDataError(ValueError):
    pass


def h2_norm(u, grid: TorusGrid) -> float:
    """(||u||^2 + ||Lap u||^2)^(1/2)."""
    uh = fftn(u)
    s = np.sum((1.0 + grid.k4) * np.abs(uh) ** 2)
    return float(math.sqrt(grid.dV / grid.npoints * s))


# -- Morawetz ---------------------------------------------------------------


def morawetz_action(u, grid: TorusGrid, vb: VirialBundle) -> float:
    """M_a = 2 int grad a . Im(grad u conj(u))."""
    uh = fftn(u)
    ub = np.conj(u)
    real_input = not np.iscomplexobj(u) or not np.any(np.imag(u))
    tot = 0.0
    for j, kj in enumerate(grid.kvec_odd):
        du = ifftn(1j * kj * uh)
        if real_input:
            # derivative of a real field is real; drop transform roundoff
            du = du.real
        tot += np.sum(vb.grad[j] * np.imag(du * ub))
    return float(2.0 * grid.dV * tot)


@dataclass
class MorawetzTerms:
    """The six contributions to dM_a/dt; ``total`` is their single-pass sum."""

    bilaplace_third: float  # 4 d_jk Lap a Re(d_j u d_k conj u)
    lap3_mass: float  # -Lap^3 a |u|^2
    hessian_second: float  # -8 d_jk a Re(d_ik u d_ij conj u)
    lap2_gradient: float  # 2 Lap^2 a |grad u|^2
    potential_lap: float  # 2(1 - 2/p) Lap a V w |u|^p
    potential_grad: float  # -(4/p) d_k a d_k(w V) |u|^p
    total: float

    def terms(self) -> list[float]:
        return [
            self.bilaplace_third,
            self.lap3_mass,
            self.hessian_second,
            self.lap2_gradient,
            self.potential_lap,
            self.potential_grad,
        ]

    @property
    def linear(self) -> float:
        return sum(self.terms()[:4])

    @property
    def nonlinear(self) -> float:
        return sum(self.terms()[4:])


def weighted_potential(u, cache: SpectralCache) -> np.ndarray:
    """w_b (I_alpha * w_b |u|^p), real."""
    return cache.w_b * hartree_potential(u, cache)


def morawetz_rhs(u, cache: SpectralCache, vb: VirialBundle | None = None) -> MorawetzTerms:
    """Right-hand side of the Morawetz identity, term by term."""
    vb = vb if vb is not None else cache.virial
    if vb is None:
        raise ValueError("no virial bundle: build the cache with R < L/4 or pass one")
    g = cache.grid
    p = cache.p
    if p < 2:
        raise ValueError(f"Morawetz identity needs p >= 2, got {p}")
    d = g.d
    dV = g.dV
    uh = fftn(u)
    kv, ko = g.kvec, g.kvec_odd
    du = [ifftn(1j * ko[j] * uh) for j in range(d)]
    ddu = [[ifftn(-kv[i] * kv[j] * uh) for j in range(d)] for i in range(d)]
    absu = np.abs(u)

    t1 = t3 = 0.0
    for j in range(d):
        for k in range(d):
            t1 += np.sum(vb.dlap[j][k] * np.real(du[j] * np.conj(du[k])))
            acc = sum(np.real(ddu[i][k] * np.conj(ddu[i][j])) for i in range(d))
            t3 += np.sum(vb.hess[j][k] * acc)
    grad2 = sum(np.abs(x) ** 2 for x in du)
    t1 = 4.0 * dV * t1
    t2 = -dV * np.sum(vb.lap3 * absu**2)
    t3 = -8.0 * dV * t3
    t4 = 2.0 * dV * np.sum(vb.lap2 * grad2)

    up = abs_power(absu, p)
    wV = weighted_potential(u, cache)
    t5 = 2.0 * (1.0 - 2.0 / p) * dV * np.sum(vb.lap * wV * up)
    wVh = fftn(wV)
    t6 = 0.0
    for k in range(d):
        t6 += np.sum(vb.grad[k] * np.real(ifftn(1j * ko[k] * wVh)) * up)
    t6 = -(4.0 / p) * dV * t6
    t5 *= cache.coupling
    t6 *= cache.coupling
    vals = [float(x) for x in (t1, t2, t3, t4, t5, t6)]
    return MorawetzTerms(*vals, total=float(math.fsum(vals)))


def morawetz_rhs_product_rule(u, cache: SpectralCache, vb: VirialBundle | None = None) -> float:
    """Last nonlocal term with d_k(w V) = (d_k w) V + w d_k V, d_k w analytic.

    Cross-check for the spectral-gradient-of-product form.
    """
    vb = vb if vb is not None else cache.virial
    g = cache.grid
    p, b, s = cache.p, cache.b, cache.sigma * g.h
    V = hartree_potential(u, cache)
    Vh = fftn(V)
    up = abs_power(np.abs(u), p)
    w = cache.w_b
    eps2 = s * s
    r2 = g.radius**2
    tot = 0.0
    for k in range(g.d):
        # d_k (|x|^2 + eps^2)^(b/2) = b x_k (|x|^2 + eps^2)^(b/2 - 1)
        dw = b * g.coords[k] * (r2 + eps2) ** (b / 2 - 1)
        dV = np.real(ifftn(1j * g.kvec_odd[k] * Vh))
        tot += np.sum(vb.grad[k] * (dw * V + w * dV) * up)
    return float(-(4.0 / p) * g.dV * tot * cache.coupling)


def centered_derivative(values, dt: float) -> np.ndarray:
    """(f[n+1] - f[n-1]) / (2 dt) at interior samples."""
    v = np.asarray(values, dtype=float)
    return (v[2:] - v[:-2]) / (2.0 * dt)


# -- local quantities -----------------------------------------------------------


def ball_mask(grid: TorusGrid, R: float) -> np.ndarray:
    """Grid-point membership in the closed ball |x| <= R."""
    return grid.radius <= R


def local_mass(u, grid: TorusGrid, R: float, mode: str = SHARP, psi: np.ndarray | None = None) -> float:
    """int_{|x|<=R} |u|^2 (sharp) or int psi_R |u|^2 (smooth cutoff)."""
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    rho = np.abs(u) ** 2
    if mode == SHARP:
        return float(grid.dV * np.sum(rho[ball_mask(grid, R)]))
    if mode == PSI:
        from .spectral import cutoff_psi

        w = psi if psi is not None else cutoff_psi(grid, R)
        return float(grid.dV * np.sum(w * rho))
    raise ValueError(f"unknown local-mass mode {mode!r}; expected {SHARP!r} or {PSI!r}")


def local_lr_norm(u, grid: TorusGrid, R: float, r: float) -> float:
    """||u||_{L^r(|x|<R)}."""
    if not (r >= 1 and math.isfinite(r)):
        raise ValueError(f"Lebesgue exponent must be finite and >= 1, got {r}")
    vals = np.abs(u[ball_mask(grid, R)])
    return float((grid.dV * np.sum(vals**r)) ** (1.0 / r))


def r_star(d: int, alpha: float, b: float, p: float) -> float:
    """2dp / (d + alpha + 2b) with the analytic dimension taken as d."""
    den = d + alpha + 2 * b
    if not den > 0:
        raise ValueError(f"r* is not finite: d + alpha + 2b = {den}")
    return 2 * d * p / den


@dataclass
class SpacetimeSeries:
    times: np.ndarray
    integrand: np.ndarray
    accumulated: np.ndarray
    exponent: float  # 1/(1-b)

    def envelope_fit(self, t_min: float = 0.0) -> tuple[float, float]:
        """Least-squares (C, slope) of log acc against log T over T >= t_min."""
        sel = (self.times >= t_min) & (self.times > 0) & (self.accumulated > 0)
        if np.count_nonzero(sel) < 2:
            return math.nan, math.nan
        x, y = np.log(self.times[sel]), np.log(self.accumulated[sel])
        slope, icpt = np.polyfit(x, y, 1)
        return float(math.exp(icpt)), float(slope)

    def envelope_constant(self, t_min: float = 0.0) -> float:
        """Least-squares C with the slope fixed at 1/(1-b)."""
        sel = (self.times >= t_min) & (self.times > 0) & (self.accumulated > 0)
        if not np.any(sel):
            return math.nan
        y = np.log(self.accumulated[sel]) - self.exponent * np.log(self.times[sel])
        return float(math.exp(np.mean(y)))


def spacetime_accumulate(times, norms, p: float, b: float) -> SpacetimeSeries:
    """Running trapezoid of ||u(t)||^{2p}_{L^{r*}(ball)} from per-sample norms."""
    t = np.asarray(times, dtype=float)
    f = np.asarray(norms, dtype=float) ** (2 * p)
    if t.shape != f.shape:
        raise ValueError("times and norms must have the same length")
    acc = np.zeros_like(t)
    if t.size > 1:
        acc[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return SpacetimeSeries(times=t, integrand=f, accumulated=acc, exponent=1.0 / (1.0 - b))


@dataclass
class EvacuationReport:
    minima: list  # (t, local mass)
    slope: float  # d/dt of log running minimum, least squares
    running_min: np.ndarray = field(repr=False, default=None)


def evacuation_scan(times, values) -> EvacuationReport:
    """Local minima of t -> local mass and the decay trend of the running minimum."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 3:
        raise InsufficientDataError("evacuation scan needs at least 3 samples")
    minima = []
    for i in range(1, v.size):
        if v[i] < v[i - 1] and (i == v.size - 1 or v[i] <= v[i + 1]):
            minima.append((float(t[i]), float(v[i])))
    run = np.minimum.accumulate(v)
    if np.all(run > 0):
        slope = float(np.polyfit(t, np.log(run), 1)[0])
        if abs(slope) < 1e-14:
            slope = 0.0
    else:
        slope = -math.inf
    return EvacuationReport(minima=minima, slope=slope, running_min=run)


@dataclass
class CoercivityResult:
    lhs: float
    rhs_norm: float
    ratio: float  # nan when rhs_norm == 0


def coercivity_check(u, cache: SpectralCache, R: float, exps: CriticalExponents, psi=None) -> CoercivityResult:
    """||Lap(psi_R u)||^2 - (B/2p) P(psi_R u) against ||psi_R u||^{2p}_{r*}."""
    from .dynamics import potential_energy
    from .spectral import cutoff_psi

    if not math.isfinite(exps.B):
        raise ValueError("exponent B must be finite")
    g = cache.grid
    v = (psi if psi is not None else cutoff_psi(g, R)) * u
    p = cache.p
    lhs = kinetic(v, cache) - exps.B / (2 * p) * potential_energy(v, cache)
    rs = exps.r_star
    norm = (g.dV * np.sum(np.abs(v) ** rs)) ** (1.0 / rs)
    rhs = float(norm ** (2 * p))
    ratio = lhs / rhs if rhs > 0 else math.nan
    return CoercivityResult(lhs=float(lhs), rhs_norm=rhs, ratio=float(ratio))


# -- scattering --------------------------------------------------------------


def pullback(u, t: float, cache: SpectralCache) -> np.ndarray:
    """e^{-it Lap^2} u(t)."""
    return linear_propagator(u, -t, cache)


@dataclass
class ScatterReport:
    sample_times: list
    pullbacks_cauchy: np.ndarray
    u_plus: np.ndarray = field(repr=False)
    final_residual: float
    residuals: list  # ||u(t_i) - e^{it_i Lap^2} u_plus||_{H^2}
    consecutive: list
    threshold: float
    verdict: str

    def as_dict(self) -> dict:
        return {
            "sample_times": list(self.sample_times),
            "pullbacks_cauchy": self.pullbacks_cauchy.tolist(),
            "consecutive": list(self.consecutive),
            "residuals": list(self.residuals),
            "final_residual": self.final_residual,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }


def scatter_verdict(consecutive, threshold: float, tail: int = 5, floor: float = 0.0) -> str:
    """Classify a sequence of consecutive pullback distances.

    Consistent when the distances between the last ``tail`` samples decrease
    (ties allowed below ``floor``) and the final one is under ``threshold``;
    a strictly increasing tail is flagged as a non-scattering trend.
    """
    c = np.asarray(consecutive, dtype=float)
    if c.size == 0:
        raise InsufficientDataError("no consecutive distances")
    c_tail = c[-max(tail - 1, 1):]
    diffs = np.diff(c_tail)
    decreasing = bool(np.all((diffs < 0) | (c_tail[1:] <= floor)))
    if decreasing and c[-1] < threshold:
        return SCATTERING
    if diffs.size and np.all(diffs > 0):
        return NON_SCATTERING
    return INCONCLUSIVE


def scatter_detect(
    times,
    states,
    cache: SpectralCache,
    h2_scale: float | None = None,
    rel_threshold: float = 1e-3,
    tail: int = 5,
) -> ScatterReport:
    """Cauchy test of the pulled-back states e^{-it Lap^2} u(t).

    ``h2_scale`` defaults to the H^2 norm of the earliest state.
    """
    times = [float(t) for t in times]
    states = list(states)
    if len(times) != len(states):
        raise ValueError("times and states must have the same length")
    if len(states) < 3 or any(s is None for s in states):
        raise InsufficientDataError("scattering detection needs at least 3 checkpointed states")
    g = cache.grid
    order = np.argsort(times, kind="stable")
    pbs = [pullback(states[i], times[i], cache) for i in order]
    times = [times[i] for i in order]
    n = len(pbs)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = h2_norm(pbs[i] - pbs[j], g)
    consecutive = [float(D[i, i + 1]) for i in range(n - 1)]
    scale = h2_scale if h2_scale is not None else h2_norm(states[order[0]], g)
    threshold = rel_threshold * scale
    u_plus = pbs[-1]
    residuals = [float(D[i, -1]) for i in range(n)]
    final = h2_norm(states[order[-1]] - linear_propagator(u_plus, times[-1], cache), g)
    if final > 1e-10 * max(scale, 1.0):
        raise AssertionError(f"pullback round trip is not exact: {final:.3e}")
    verdict = scatter_verdict(consecutive, threshold, tail=tail, floor=1e-10 * max(scale, 1.0))
    return ScatterReport(
        sample_times=times,
        pullbacks_cauchy=D,
        u_plus=u_plus,
        final_residual=float(final),
        residuals=residuals,
        consecutive=consecutive,
        threshold=threshold,
        verdict=verdict,
    )


# -- per-sample tracking -----------------------------------------------------------

CSV_COLUMNS = (
    "t",
    "mass",
    "energy",
    "ME",
    "MG",
    "M_R",
    "rhs_R",
    "local_mass",
    "lrstar_local",
    "spacetime_acc",
    "cauchy_h2",
)


@dataclass
class DiagnosticsSample:
    t: float
    mass: float
    energy: float
    ME: float
    MG: float
    M_R: float
    rhs_R: float
    local_mass: float
    lrstar_local: float
    spacetime_acc: float
    cauchy_h2: float

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self) -> dict:
        return asdict(self)


class Tracker:
    """Evolution hook producing one DiagnosticsSample per sampled step.

    ``R`` is the local-mass / spacetime radius; Morawetz columns use the
    cache's virial bundle and are NaN without one. Threshold columns need a
    ground state and exponents.
    """

    def __init__(self, cache: SpectralCache, R: float, gs=None, exps: CriticalExponents | None = None):
        self.cache = cache
        self.R = R
        self.gs = gs
        self.exps = exps
        g = cache.grid
        self.rstar = r_star(g.d, cache.alpha, cache.b, cache.p)
        self.samples: list[DiagnosticsSample] = []
        self._prev_t = None
        self._prev_f = None
        self._prev_pb = None
        self._acc = 0.0

    def prime(self, t: float, u, spacetime_acc: float) -> None:
        """Restore running state from a sampled state, for resumed runs."""
        c = self.cache
        self._prev_t = t
        self._prev_f = local_lr_norm(u, c.grid, self.R, self.rstar) ** (2 * c.p)
        self._prev_pb = pullback(u, t, c)
        self._acc = float(spacetime_acc)

    def __call__(self, n, t, u) -> DiagnosticsSample:
        from .groundstate import thresholds

        c, g = self.cache, self.cache.grid
        me = mg = math.nan
        if self.gs is not None and self.exps is not None:
            rep = thresholds(u, self.gs, self.exps, c)
            me, mg = rep.ME, rep.MG
        if c.virial is not None:
            mr = morawetz_action(u, g, c.virial)
            rhs = morawetz_rhs(u, c).total
        else:
            mr = rhs = math.nan
        lr = local_lr_norm(u, g, self.R, self.rstar)
        f = lr ** (2 * c.p)
        if self._prev_t is not None:
            self._acc += 0.5 * (f + self._prev_f) * (t - self._prev_t)
        pb = pullback(u, t, c)
        ch = math.nan if self._prev_pb is None else h2_norm(pb - self._prev_pb, g)
        self._prev_t, self._prev_f, self._prev_pb = t, f, pb
        s = DiagnosticsSample(
            t=t,
            mass=mass(u, g),
            energy=energy(u, c),
            ME=me,
            MG=mg,
            M_R=mr,
            rhs_R=rhs,
            local_mass=local_mass(u, g, self.R),
            lrstar_local=lr,
            spacetime_acc=self._acc,
            cauchy_h2=ch,
        )
        self.samples.append(s)
        return s

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])
