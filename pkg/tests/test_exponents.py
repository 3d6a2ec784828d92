import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from bihartree.exponents import (
    INF,
    AdmissiblePair,
    ExponentError,
    ModelParams,
    admissible_q,
    admissible_residual,
    bootstrap_check,
    check_condition_C,
    compute_exponents,
    critical_index,
    fn1_exponents,
    hls_residual,
    hls_solve,
    in_intercritical_range,
    x_alpha,
    x_alpha_residual,
)

from .oracles import s_c_from_scaling


@st.composite
def valid_params(draw, min_N=1, max_N=12):
    N = draw(st.integers(min_N, max_N))
    alpha = draw(st.floats(0.01, N - 0.01))
    # keep 4 + 2b + alpha > 0 so that every scaling exponent exists
    b = -draw(st.floats(1e-3, min(3.0, (4 + alpha) / 2 - 1e-3)))
    p = draw(st.floats(1.01, 12.0))
    return ModelParams(N, alpha, b, p)


@st.composite
def intercritical_params(draw, min_N=5, max_N=12):
    """p strictly between the mass- and energy-critical powers."""
    N = draw(st.integers(min_N, max_N))
    alpha = draw(st.floats(0.01, N - 0.01))
    b = -draw(st.floats(1e-3, min(3.0, (4 + alpha) / 2 - 1e-3)))
    c = 4 + 2 * b + alpha
    lo, hi = 1 + c / N, 1 + c / (N - 4)
    p = lo + draw(st.floats(0.01, 0.99)) * (hi - lo)
    return ModelParams(N, alpha, b, p)


class TestModelParams:
    def test_invariants(self):
        with pytest.raises(ValueError, match="b must be negative"):
            ModelParams(3, 1.0, 0.5, 2.0)
        with pytest.raises(ValueError, match="alpha"):
            ModelParams(3, 3.0, -1.0, 2.0)
        with pytest.raises(ValueError, match="p must exceed 1"):
            ModelParams(3, 1.0, -1.0, 1.0)
        with pytest.raises(ValueError, match="positive integer"):
            ModelParams(2.5, 1.0, -1.0, 2.0)

    def test_degenerate_scaling_rejected(self):
        with pytest.raises(ExponentError, match="4 \\+ 2b \\+ alpha"):
            compute_exponents(ModelParams(3, 1.0, -2.6, 2.0))


class TestCriticalExponents:
    def test_mass_critical_example(self):
        e = compute_exponents(ModelParams(5, 2, -0.5, 2))
        assert e.s_c == pytest.approx(0, abs=1e-12)
        assert e.p_star == pytest.approx(2)

    def test_energy_critical_example(self):
        e = compute_exponents(ModelParams(5, 2, -0.5, 6))
        assert e.s_c == pytest.approx(2, abs=1e-12)
        assert e.p_upper == pytest.approx(6)

    def test_intercritical_example(self):
        e = compute_exponents(ModelParams(5, 2, -0.5, 3))
        assert e.s_c == pytest.approx(1.25, abs=1e-12)
        assert e.B == pytest.approx(4.5, abs=1e-12)
        assert e.r1 == pytest.approx(4, abs=1e-12)
        assert e.r_star == pytest.approx(5, abs=1e-12)

    def test_low_dimension_sentinels(self):
        e = compute_exponents(ModelParams(3, 2, -1, 2.5))
        assert e.p_upper == INF and e.x_alpha is None
        assert e.s_c == pytest.approx(1 / 6)

    @given(valid_params())
    def test_matches_scaling_oracle(self, P):
        e = compute_exponents(P)
        assert e.s_c == pytest.approx(s_c_from_scaling(P.N, P.alpha, P.b, P.p), abs=1e-12)

    @given(valid_params())
    def test_critical_powers(self, P):
        e = compute_exponents(P)
        assert abs(critical_index(P.N, P.alpha, P.b, e.p_star)) < 1e-12
        if P.N >= 5:
            assert abs(critical_index(P.N, P.alpha, P.b, e.p_upper) - 2) < 1e-12

    @given(valid_params(min_N=5))
    def test_B_endpoints(self, P):
        e = compute_exponents(P)
        lo = compute_exponents(ModelParams(P.N, P.alpha, P.b, e.p_star))
        hi = compute_exponents(ModelParams(P.N, P.alpha, P.b, e.p_upper))
        assert lo.B == pytest.approx(2, abs=1e-12)
        assert hi.B == pytest.approx(2 * e.p_upper, abs=1e-12)

    @given(valid_params())
    def test_B_matches_pohozaev_form(self, P):
        # B = (N(p-1) - alpha - 2b) / 2, the virial balance of the elliptic equation
        e = compute_exponents(P)
        assert e.B == pytest.approx((P.N * (P.p - 1) - P.alpha - 2 * P.b) / 2, rel=1e-12, abs=1e-12)


class TestXAlpha:
    def test_example(self):
        x = x_alpha(ModelParams(5, 2, -0.5, 3))
        assert x == pytest.approx((3 + math.sqrt(41)) / 4, abs=1e-14)
        assert abs(x_alpha_residual(ModelParams(5, 2, -0.5, 3), x)) < 1e-12

    def test_small_c_limit(self):
        # c = (4 + 2b + alpha)/(N - 4) -> 0
        x = x_alpha(ModelParams(200, 0.01, -1.99, 3))
        assert x == pytest.approx(1, abs=1e-3)

    def test_low_dimension_rejected(self):
        with pytest.raises(ExponentError, match="N >= 5"):
            x_alpha(ModelParams(4, 2, -0.5, 3))

    @given(valid_params(min_N=5))
    def test_root_property(self, P):
        x = x_alpha(P)
        assert abs(x_alpha_residual(P, x)) < 1e-12 * max(1.0, x * x)
        assert x > 1


class TestConditionC:
    def test_valid_high_dimension(self):
        assert check_condition_C(ModelParams(5, 2, -0.5, 3))

    def test_clause_named(self):
        rep = check_condition_C((5, 2, -3, 3))
        assert not rep
        assert any("-4(1+alpha/N)" in v for v in rep.violations)

    def test_three_dimensional_fixture(self):
        rep = check_condition_C(ModelParams(3, 2, -1, 2.5))
        assert rep.ok and rep.violations == []

    def test_low_dimension_clause(self):
        rep = check_condition_C((2, 1, -0.5))
        assert not rep and "dimension clause" in rep.violations[-1]


class TestIntercriticalRange:
    def _rng(self, p):
        P = ModelParams(5, 2, -0.5, p)
        return in_intercritical_range(P, compute_exponents(P))

    def test_both(self):
        r = self._rng(3)
        assert r.nonradial and r.radial

    def test_radial_needs_x_alpha(self):
        r = self._rng(2.1)
        assert r.nonradial and not r.radial

    def test_boundary_excluded(self):
        r = self._rng(2.0)
        assert not r.nonradial
        assert any("p_* < p" in v for v in r.nonradial_violations)


class TestAdmissible:
    def test_endpoint_infinite_q(self):
        for N in (1, 3, 5, 9):
            assert admissible_q(N, 0.0, 2.0).q == INF

    def test_example(self):
        assert admissible_q(5, 0.0, 10 / 3).q == pytest.approx(4, abs=1e-12)

    def test_excluded_upper_endpoint(self):
        with pytest.raises(ExponentError, match="upper bound"):
            admissible_q(5, 0.0, 10.0)

    def test_lower_bound_named(self):
        with pytest.raises(ExponentError, match="lower bound"):
            admissible_q(5, 1.0, 2.5)

    @given(st.integers(5, 12), st.floats(0, 1.9), st.floats(0.0, 1.0))
    def test_balance(self, N, s, frac):
        lo = 2 * N / (N - 2 * s)
        hi = 2 * N / (N - 4)
        r = lo + frac * (hi - lo) * 0.999
        pair = admissible_q(N, s, r)
        assert abs(admissible_residual(N, pair)) < 1e-12

    def test_residual_of_infinite_pair(self):
        assert admissible_residual(3, AdmissiblePair(INF, 2.0, 0.0)) == 0.0


class TestHLS:
    def test_tied_example(self):
        t = hls_solve(5, 2, s=2, tie_qr=True)
        assert t["q"] == pytest.approx(20 / 9, abs=1e-12)
        assert t["r"] == pytest.approx(20 / 9, abs=1e-12)

    def test_unweighted_special_case(self):
        t = hls_solve(5, 2, q=3, r=3)
        assert 1 / t["q"] + 1 / t["r"] + 1 / t["s"] == pytest.approx(1 + 2 / 5, abs=1e-12)

    def test_weight_window(self):
        with pytest.raises(ExponentError, match="gamma"):
            hls_solve(5, 0.5, gamma=-2.0, q=3, r=3)

    def test_infeasible(self):
        with pytest.raises(ExponentError, match="infeasible|outside"):
            hls_solve(5, 2, q=1.1, r=1.1)

    @given(
        st.integers(1, 10),
        st.floats(0.05, 0.95),
        st.floats(1.2, 6.0),
        st.floats(1.2, 6.0),
    )
    def test_self_inverse(self, N, afrac, q, r):
        alpha = afrac * N
        try:
            t = hls_solve(N, alpha, q=q, r=r)
        except ExponentError:
            assume(False)
        assert abs(hls_residual(N, alpha, 0, 0, t)) < 1e-12
        back = hls_solve(N, alpha, q=None, r=t["r"], s=t["s"])
        assert back["q"] == pytest.approx(q, rel=1e-12)
        back = hls_solve(N, alpha, q=t["q"], r=None, s=t["s"])
        assert back["r"] == pytest.approx(r, rel=1e-12)


class TestFn1:
    P = ModelParams(5, 2, -0.5, 3)

    def test_example(self):
        f = fn1_exponents(self.P, compute_exponents(self.P), 0.1)
        assert f.a == pytest.approx(15.7333333, abs=1e-6)
        assert f.d == pytest.approx(1.45231, abs=1e-5)
        assert f.r == pytest.approx(5.02128, abs=1e-5)
        assert abs((2 * 3 - 1 - 0.1) * f.d / (f.d - 1) - f.a) < 1e-9

    def test_small_theta_membership(self):
        f = fn1_exponents(self.P, compute_exponents(self.P), 1e-6)
        assert f.a_in_gamma

    def test_dual_pair_balance_only(self):
        # (d, r) satisfies the negative-index balance but d < 2
        f = fn1_exponents(self.P, compute_exponents(self.P), 0.1)
        assert f.d_balance and not f.d_in_window

    def test_theta_range(self):
        with pytest.raises(ExponentError, match="theta"):
            fn1_exponents(self.P, compute_exponents(self.P), 5.0)

    @given(intercritical_params(), st.floats(0.001, 0.999))
    def test_identity(self, P, frac):
        e = compute_exponents(P)
        theta = frac * (2 * P.p - 1)
        try:
            f = fn1_exponents(P, e, theta)
        except ExponentError:
            assume(False)
        assert abs(f.identity_residual) < 1e-9 * max(1.0, abs(f.a))


class TestBootstrap:
    def test_example(self):
        rep = bootstrap_check(0.1, 1.0, 2.0, 0.3, samples=[0.05, 0.15, 0.2])
        assert rep and rep.bound == pytest.approx(0.2)

    def test_vacuous(self):
        assert bootstrap_check(0.1, 1.0, 2.0, 0.3)

    def test_hypothesis_failure(self):
        rep = bootstrap_check(0.3, 1.0, 2.0, 0.3)
        assert not rep and "a < (1-1/theta)" in rep.violations[0]

    def test_sample_exceeds(self):
        rep = bootstrap_check(0.1, 1.0, 2.0, 0.3, samples=[0.25])
        assert not rep and "exceed" in rep.violations[-1]

    def test_bad_inputs(self):
        assert not bootstrap_check(0.1, 1.0, 0.5, 0.0)
