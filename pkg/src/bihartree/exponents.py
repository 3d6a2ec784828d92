"""Exponent algebra for the inhomogeneous fourth-order Hartree problem.

Everything here is a pure function of (N, alpha, b, p) and plain floats.
Infinite exponents (energy-critical power for N <= 4, the time exponent of
the (2, ...) endpoint) are represented by ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf


class ExponentError(ValueError):
    """Raised when an exponent relation has no admissible solution."""


@dataclass(frozen=True)
class ModelParams:
    N: int
    alpha: float
    b: float
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not 0 < self.alpha < self.N:
            raise ValueError(f"alpha must satisfy 0 < alpha < N, got alpha={self.alpha}, N={self.N}")
        if not self.b < 0:
            raise ValueError(f"b must be negative, got b={self.b}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got p={self.p}")

    @property
    def scaling_sum(self) -> float:
        """The combination 4 + 2b + alpha appearing in every scaling exponent."""
        return 4.0 + 2.0 * self.b + self.alpha


@dataclass(frozen=True)
class CriticalExponents:
    s_c: float
    p_star: float
    p_upper: float
    x_alpha: float | None
    B: float
    r1: float
    r_star: float

    def as_dict(self) -> dict:
        return {
            "s_c": self.s_c,
            "p_star": self.p_star,
            "p_upper": self.p_upper,
            "x_alpha": self.x_alpha,
            "B": self.B,
            "r1": self.r1,
            "r_star": self.r_star,
        }


def _check_scaling(params: ModelParams) -> float:
    c = params.scaling_sum
    if c <= 0:
        raise ExponentError(
            f"degenerate scaling: 4 + 2b + alpha = {c:g} must be positive "
            f"(b={params.b}, alpha={params.alpha})"
        )
    return c


def critical_index(N: float, alpha: float, b: float, p: float) -> float:
    return N / 2.0 - (4.0 + 2.0 * b + alpha) / (2.0 * (p - 1.0))


def compute_exponents(params: ModelParams) -> CriticalExponents:
    c = _check_scaling(params)
    N, alpha, b, p = params.N, params.alpha, params.b, params.p
    s_c = critical_index(N, alpha, b, p)
    p_star = 1.0 + c / N
    p_upper = 1.0 + c / (N - 4) if N >= 5 else INF
    xa = x_alpha(params) if N >= 5 else None
    return CriticalExponents(
        s_c=s_c,
        p_star=p_star,
        p_upper=p_upper,
        x_alpha=xa,
        B=2.0 + (p - 1.0) * s_c,
        r1=2.0 * N * (p - 1.0) / c,
        r_star=2.0 * N * p / (N + alpha + 2.0 * b),
    )


def x_alpha(params: ModelParams) -> float:
    """Larger root of (X - 1)(2X - 1) - (4 + 2b + alpha)/(N - 4)."""
    if params.N <= 4:
        raise ExponentError(f"x_alpha needs N >= 5 (polynomial undefined for N={params.N})")
    c = params.scaling_sum / (params.N - 4)
    return (3.0 + math.sqrt(1.0 + 8.0 * c)) / 4.0


def x_alpha_residual(params: ModelParams, x: float) -> float:
    c = params.scaling_sum / (params.N - 4)
    return (x - 1.0) * (2.0 * x - 1.0) - c


@dataclass
class Report:
    """Boolean verdict with the list of clauses that failed."""

    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_condition_C(params) -> Report:
    """Validity of (N, alpha, b) for the local theory.

    Accepts a ModelParams or any (N, alpha, b[, p]) tuple, so that parameter
    sets outside the ModelParams invariants can still be reported on.
    """
    if isinstance(params, ModelParams):
        N, alpha, b = params.N, params.alpha, params.b
    else:
        N, alpha, b = params[0], params[1], params[2]
    bad = []
    if not 0 < alpha < N:
        bad.append(f"0 < alpha < N violated (alpha={alpha}, N={N})")
    if not 2 * b > -(N + alpha):
        bad.append(f"2b > -(N+alpha) violated ({2 * b:g} <= {-(N + alpha):g})")
    if not 2 * b > -4.0 * (1.0 + alpha / N):
        bad.append(f"2b > -4(1+alpha/N) violated ({2 * b:g} <= {-4.0 * (1.0 + alpha / N):g})")
    if not 2 * b > N - 8 - alpha:
        bad.append(f"2b > N-8-alpha violated ({2 * b:g} <= {N - 8 - alpha:g})")
    if not 2 * b < 0:
        bad.append(f"2b < 0 violated (2b={2 * b:g})")
    if 3 <= N <= 4:
        if not 2 * alpha + 4 * b + N > 0:
            bad.append(f"2alpha + 4b + N > 0 violated ({2 * alpha + 4 * b + N:g}) for 3 <= N <= 4")
    elif N < 3:
        bad.append(f"dimension clause violated: need N >= 5 or 3 <= N <= 4 (N={N})")
    return Report(ok=not bad, violations=bad)


@dataclass
class RangeReport:
    nonradial: bool
    radial: bool
    nonradial_violations: list[str]
    radial_violations: list[str]


def in_intercritical_range(params: ModelParams, exps: CriticalExponents) -> RangeReport:
    """Hypotheses of the non-radial and radial scattering theorems."""
    N, alpha, p = params.N, params.alpha, params.p
    cond = check_condition_C(params)
    common = list(cond.violations)
    if not p < exps.p_upper:
        common.append(f"p < p^* violated (p={p}, p^*={exps.p_upper})")

    nonrad = list(common)
    if not exps.p_star < p:
        nonrad.append(f"p_* < p violated (p={p}, p_*={exps.p_star})")
    if not p >= 2:
        nonrad.append(f"p >= 2 violated (p={p})")
    if not N >= 5:
        nonrad.append(f"N >= 5 violated (N={N})")

    rad = list(common)
    if exps.x_alpha is None:
        rad.append(f"x_alpha undefined for N={N}")
        lower = exps.p_star
    else:
        lower = max(exps.p_star, exps.x_alpha)
    if not lower < p:
        rad.append(f"max(p_*, x_alpha) < p violated (p={p}, bound={lower})")
    pmin = max(2.0, 1.5 + alpha / N)
    if not p >= pmin:
        rad.append(f"p >= max(2, 3/2 + alpha/N) violated (p={p}, bound={pmin})")
    return RangeReport(not nonrad, not rad, nonrad, rad)


@dataclass(frozen=True)
class AdmissiblePair:
    q: float
    r: float
    s: float


def admissible_q(N: int, s: float, r: float, check_window: bool = True) -> AdmissiblePair:
    """Solve N(1/2 - 1/r) = 4/q + s for the time exponent q.

    With ``check_window`` the pair must lie in Gamma_s: 2N/(N-2s) <= r < 2N/(N-4)
    (upper bound only for N >= 5) and 2 <= q, r <= inf. Without it only the
    balance is solved (used for the dual pairs with negative s).
    """
    lhs = N * (0.5 - (0.0 if r == INF else 1.0 / r))
    gap = lhs - s
    if check_window:
        if r < 2:
            raise ExponentError(f"r={r} below 2")
        # equivalent to r >= 2N/(N-2s), valid for any sign of N-2s
        if gap < -1e-14:
            raise ExponentError(f"lower bound r >= 2N/(N-2s) violated (r={r}, N={N}, s={s})")
        if N >= 5 and not r < 2.0 * N / (N - 4):
            raise ExponentError(
                f"upper bound r < 2N/(N-4) = {2.0 * N / (N - 4):g} violated (r={r}); endpoint excluded"
            )
    if abs(gap) <= 1e-14:
        q = INF
    elif gap < 0:
        raise ExponentError(f"no positive q: N(1/2-1/r) - s = {gap:g} < 0")
    else:
        q = 4.0 / gap
    if check_window and q < 2:
        raise ExponentError(f"q={q:g} below 2")
    return AdmissiblePair(q=q, r=r, s=s)


def admissible_residual(N: int, pair: AdmissiblePair) -> float:
    inv_q = 0.0 if pair.q == INF else 1.0 / pair.q
    inv_r = 0.0 if pair.r == INF else 1.0 / pair.r
    return N * (0.5 - inv_r) - 4.0 * inv_q - pair.s


def _conj(x: float) -> float:
    return x / (x - 1.0)


def hls_solve(N, alpha, gamma=0.0, mu=0.0, q=None, r=None, s=None, tie_qr=False) -> dict:
    """Complete an exponent triple for 1 + (alpha - gamma - mu)/N = 1/q + 1/r + 1/s.

    Exactly one of q, r, s is left as None, or q and r both None with
    ``tie_qr`` to impose q = r. Nonzero gamma / mu must satisfy the weight
    windows 0 < -gamma < N/s' and 0 < -mu < N/q'.
    """
    total = 1.0 + (alpha - gamma - mu) / N
    known = {"q": q, "r": r, "s": s}
    missing = [k for k, v in known.items() if v is None]
    if tie_qr:
        if sorted(missing) != ["q", "r"]:
            raise ExponentError("tie_qr needs exactly q and r unknown")
        inv = (total - 1.0 / s) / 2.0
        if inv <= 0:
            raise ExponentError(f"infeasible: 1/q = {inv:g}")
        known["q"] = known["r"] = 1.0 / inv
    else:
        if len(missing) != 1:
            raise ExponentError(f"exactly one unknown expected, got {missing}")
        name = missing[0]
        inv = total - sum(1.0 / v for k, v in known.items() if k != name)
        if inv <= 0:
            raise ExponentError(f"infeasible: 1/{name} = {inv:g} <= 0")
        known[name] = 1.0 / inv
    for k, v in known.items():
        if not 1.0 < v < INF:
            raise ExponentError(f"{k} = {v:g} outside (1, inf)")
    if gamma != 0 and not 0 < -gamma < N / _conj(known["s"]):
        raise ExponentError(f"weight window 0 < -gamma < N/s' violated (gamma={gamma}, N/s'={N / _conj(known['s']):g})")
    if mu != 0 and not 0 < -mu < N / _conj(known["q"]):
        raise ExponentError(f"weight window 0 < -mu < N/q' violated (mu={mu}, N/q'={N / _conj(known['q']):g})")
    return known


def hls_residual(N, alpha, gamma, mu, triple) -> float:
    return 1.0 + (alpha - gamma - mu) / N - 1.0 / triple["q"] - 1.0 / triple["r"] - 1.0 / triple["s"]


@dataclass(frozen=True)
class Fn1Exponents:
    theta: float
    a: float
    d: float
    r: float
    d_prime: float
    identity_residual: float
    a_in_gamma: bool  # (a, r) in Gamma_{s_c}, window included
    d_balance: bool  # (d, r) satisfies the Gamma_{-s_c} balance
    d_in_window: bool  # ... and also 2 <= d


def fn1_exponents(params: ModelParams, exps: CriticalExponents, theta: float) -> Fn1Exponents:
    p, N, sc = params.p, params.N, exps.s_c
    if not 0 < theta < 2 * p - 1:
        raise ExponentError(f"theta must lie in (0, 2p-1), got {theta}")
    if not 0 < sc < 2:
        raise ExponentError(f"s_c must lie in (0, 2), got {sc}")
    m = 2 * p - theta
    a = 2 * m / (2 - sc)
    d = 2 * m / (2 + (2 * p - 1 - theta) * sc)
    den = (N - 2 * sc) * m - 4 * (2 - sc)
    if den <= 0:
        raise ExponentError(f"infeasible theta={theta}: denominator of r is {den:g} <= 0")
    r = 2 * N * m / den
    d_prime = _conj(d)
    resid = (2 * p - 1 - theta) * d_prime - a

    try:
        admissible_q(N, sc, r)
        a_in = abs(admissible_residual(N, AdmissiblePair(a, r, sc))) < 1e-9
    except ExponentError:
        a_in = False
    q_dual = admissible_q(N, -sc, r, check_window=False).q
    d_bal = abs(q_dual - d) <= 1e-9 * max(1.0, d)
    return Fn1Exponents(theta, a, d, r, d_prime, resid, a_in, d_bal, d_bal and d >= 2)


@dataclass
class BootstrapReport:
    ok: bool
    bound: float
    violations: list[str]

    def __bool__(self):
        return self.ok


def bootstrap_check(a: float, bcoef: float, theta: float, X0: float, samples=()) -> BootstrapReport:
    """Check the continuity-argument hypotheses and conclusion X <= theta a/(theta-1)."""
    bad = []
    if not (a > 0 and bcoef > 0 and theta > 1):
        bad.append(f"need a, b > 0 and theta > 1 (a={a}, b={bcoef}, theta={theta})")
        return BootstrapReport(False, math.nan, bad)
    base = (theta * bcoef) ** (1.0 / (1.0 - theta))
    if not a < (1.0 - 1.0 / theta) * base:
        bad.append(f"hypothesis a < (1-1/theta)(theta b)^(1/(1-theta)) = {(1 - 1 / theta) * base:g} fails")
    if not X0 <= base:
        bad.append(f"hypothesis X(0) <= (theta b)^(1/(1-theta)) = {base:g} fails")
    bound = theta * a / (theta - 1.0)
    over = [x for x in samples if x > bound]
    if over:
        bad.append(f"{len(over)} samples exceed theta a/(theta-1) = {bound:g} (max {max(over):g})")
    return BootstrapReport(not bad, bound, bad)
