"""Special-function primitives against independent oracles: adaptive
quadrature, exact rational recursions, and classical identities."""

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nigdiff.errors import DomainError, UnsupportedParameterError
from nigdiff.gibbs import GGParams
from nigdiff.specfun import (SignedLogSum, SignedLogValue,
                             alpha_diversity_density, exp_integral_ei,
                             falling_factorial, gen_factorial_coeff,
                             gen_factorial_coeff_log,
                             gen_factorial_coeff_log_table,
                             log_upper_incomplete_gamma, pochhammer,
                             pochhammer_log, stable_half_density,
                             upper_incomplete_gamma)

from conftest import exact_gen_factorial, set_partitions


# ---------------------------------------------------------------------------
# Signed log arithmetic

@given(st.floats(min_value=-1e6, max_value=1e6,
                 allow_nan=False, allow_infinity=False))
def test_signed_log_roundtrip(x):
    # exp(log(x)) loses ~|log x| * eps relative precision
    v = SignedLogValue.from_float(x)
    assert v.to_float() == pytest.approx(x, rel=1e-12, abs=1e-300)


@given(st.floats(min_value=-1e3, max_value=1e3),
       st.floats(min_value=-1e3, max_value=1e3))
def test_signed_log_mul_neg(x, y):
    v = SignedLogValue.from_float(x) * SignedLogValue.from_float(y)
    assert v.to_float() == pytest.approx(x * y, rel=1e-11, abs=1e-290)
    assert (-SignedLogValue.from_float(x)).to_float() == pytest.approx(
        -x, rel=1e-11, abs=1e-290)


@given(st.lists(st.floats(min_value=-100.0, max_value=100.0), min_size=1,
                max_size=30))
@settings(max_examples=200)
def test_signed_log_sum_matches_fsum(values):
    acc = SignedLogSum()
    for v in values:
        acc.add(SignedLogValue.from_float(v))
    expected = math.fsum(values)
    got = acc.result().to_float()
    scale = max(abs(v) for v in values)
    assert got == pytest.approx(expected, abs=scale * 1e-12 + 1e-300)


def test_signed_log_sum_exact_cancellation():
    acc = SignedLogSum()
    acc.add_signed(1, 2.5)
    acc.add_signed(-1, 2.5)
    assert acc.result().sign == 0
    assert acc.condition_estimate == float("inf")


def test_condition_estimate_counts_lost_digits():
    acc = SignedLogSum()
    acc.add_signed(1, math.log(1.0))
    acc.add_signed(-1, math.log(1.0 - 1e-6))
    assert acc.condition_estimate == pytest.approx(6.0, abs=0.01)


# ---------------------------------------------------------------------------
# Pochhammer and falling factorials

def test_pochhammer_gamma_ratio():
    for a in (0.3, 1.0, 2.5, 7.0):
        for m in (0, 1, 3, 8):
            assert pochhammer(a, m) == pytest.approx(
                math.gamma(a + m) / math.gamma(a), rel=1e-12)


def test_pochhammer_log_signs():
    # (-2.5)_4 = (-2.5)(-1.5)(-0.5)(0.5) < 0
    v = pochhammer_log(-2.5, 4)
    assert v.sign == -1
    assert v.to_float() == pytest.approx(pochhammer(-2.5, 4), rel=1e-12)
    # hits zero exactly
    assert pochhammer_log(-3.0, 5).sign == 0


def test_falling_factorial():
    assert falling_factorial(6.0, 3) == pytest.approx(6 * 5 * 4)
    assert falling_factorial(2.5, 0) == 1.0
    with pytest.raises(DomainError):
        falling_factorial(2.0, -1)


# ---------------------------------------------------------------------------
# Upper incomplete gamma

@pytest.mark.parametrize("c", [-7.5, -3.2, -2.0, -0.5, 0.0, 0.7, 1.0,
                               2.5, 6.0])
@pytest.mark.parametrize("x", [0.3, 1.0, 5.0, 10.0])
def test_incomplete_gamma_vs_quadrature(c, x):
    oracle, err = integrate.quad(
        lambda t: t ** (c - 1.0) * math.exp(-t), x, np.inf,
        epsabs=1e-300, epsrel=1e-12, limit=300)
    assert upper_incomplete_gamma(c, x) == pytest.approx(oracle, rel=5e-8)


def test_incomplete_gamma_recurrence():
    # Gamma(c+1; x) = c Gamma(c; x) + x^c e^{-x}, checked in linear space
    # after removing the common magnitude
    for x in (0.5, 2.0, 10.0):
        for c in np.arange(-40.0, 40.0, 1.7):
            lhs = log_upper_incomplete_gamma(c + 1.0, x)
            g = log_upper_incomplete_gamma(c, x)
            rhs_terms = np.array([g + math.log(abs(c)) if c != 0 else -np.inf,
                                  c * math.log(x) - x])
            peak = max(lhs, rhs_terms.max())
            lin_lhs = math.exp(lhs - peak)
            lin_rhs = (math.copysign(math.exp(rhs_terms[0] - peak), c)
                       + math.exp(rhs_terms[1] - peak))
            assert lin_lhs == pytest.approx(lin_rhs, rel=1e-9, abs=1e-12)


def test_incomplete_gamma_full_envelope():
    # wide grid of (c, x) against a 40-digit oracle, including the
    # routing boundaries (x = 0.3, |c| = 0.5, c = -4) and near-zero c
    # where the 1/c amplification of naive routes is worst
    mpmath.mp.dps = 40
    cs = [-60.0, -33.7, -12.5, -4.0, -3.9, -0.51, -0.49, -1e-3, -1e-8,
          -1e-12, 1e-12, 1e-8, 1e-3, 0.49, 0.51, 7.3, 60.0]
    xs = [1e-3, 0.05, 0.29, 0.31, 1.0, 8.0, 50.0]
    for c in cs:
        for x in xs:
            got = log_upper_incomplete_gamma(c, x)
            ref = float(mpmath.log(mpmath.gammainc(
                mpmath.mpf(c), mpmath.mpf(x), mpmath.inf)))
            assert got == pytest.approx(ref, rel=1e-10, abs=1e-12), (c, x)


def test_incomplete_gamma_domain():
    with pytest.raises(DomainError):
        upper_incomplete_gamma(1.0, 0.0)
    with pytest.raises(DomainError):
        upper_incomplete_gamma(1.0, -2.0)


@given(st.floats(min_value=-10.0, max_value=10.0),
       st.floats(min_value=0.1, max_value=20.0),
       st.floats(min_value=0.01, max_value=5.0))
@settings(max_examples=100)
def test_incomplete_gamma_monotone_in_x(c, x, dx):
    # the integrand is positive, so Gamma(c; x) decreases in x (the
    # decrease can fall below double resolution deep in a flat region)
    assert (log_upper_incomplete_gamma(c, x)
            >= log_upper_incomplete_gamma(c, x + dx))


def test_ei_e1_relation():
    # Ei(-x) = -E1(x) = -Gamma(0; x)
    for x in (0.2, 1.0, 4.0, 15.0):
        assert exp_integral_ei(-x) == pytest.approx(
            -upper_incomplete_gamma(0.0, x), rel=1e-12)
    with pytest.raises(DomainError):
        exp_integral_ei(0.0)


def test_ei_positive_vs_quadrature():
    # Ei(z) = PV int_{-inf}^z e^t / t dt; for z > 0 use the symmetric form
    # Ei(z) = gamma + ln z + sum z^k/(k k!)
    for z in (0.5, 2.0, 8.0):
        series = np.euler_gamma + math.log(z)
        term = 1.0
        for k in range(1, 200):
            term *= z / k
            series += term / k
        assert exp_integral_ei(z) == pytest.approx(series, rel=1e-12)


# ---------------------------------------------------------------------------
# Generalized factorial coefficients

# the alternating series cancels hardest for small alpha; the observed
# worst relative errors at n <= 12 are ~3e-8 (alpha=1/4), ~1e-12 (1/2)
@pytest.mark.parametrize("alpha_frac,tol", [(Fraction(1, 4), 1e-6),
                                            (Fraction(1, 2), 1e-10),
                                            (Fraction(3, 4), 1e-12)])
def test_gen_factorial_exact_rational(alpha_frac, tol):
    alpha = float(alpha_frac)
    for n in range(0, 13):
        for k in range(0, n + 1):
            exact = exact_gen_factorial(n, k, alpha_frac)
            got = gen_factorial_coeff(n, k, alpha)
            assert got == pytest.approx(float(exact), rel=tol, abs=1e-300)


def test_gen_factorial_partition_sum():
    # sum over set partitions of [n] with k blocks of
    # prod_j (1 - alpha)_(n_j - 1) equals C(n, k, alpha) / alpha^k
    alpha = 0.5
    n = 7
    sums = {}
    for p in set_partitions(list(range(n))):
        w = 1.0
        for b in p:
            w *= pochhammer(1.0 - alpha, len(b) - 1)
        sums[len(p)] = sums.get(len(p), 0.0) + w
    for k, total in sums.items():
        assert total == pytest.approx(
            gen_factorial_coeff(n, k, alpha) / alpha ** k, rel=1e-10)


def test_gen_factorial_table_matches_series():
    # agreement is limited by the series' own cancellation (see above)
    for alpha, tol in ((0.25, 1e-6), (0.5, 1e-10), (0.75, 1e-12)):
        table = gen_factorial_coeff_log_table(20, 12, alpha)
        for n in range(21):
            for k in range(13):
                v = gen_factorial_coeff_log(n, k, alpha)
                if v.sign == 0:
                    assert table[n, k] == -np.inf
                else:
                    assert v.sign == 1
                    assert table[n, k] == pytest.approx(v.log_magnitude,
                                                        abs=tol)


def test_gen_factorial_domain():
    with pytest.raises(DomainError):
        gen_factorial_coeff(3, 1, 1.5)
    with pytest.raises(DomainError):
        gen_factorial_coeff(-1, 0, 0.5)
    assert gen_factorial_coeff(4, 0, 0.5) == 0.0
    assert gen_factorial_coeff(3, 5, 0.5) == 0.0


# ---------------------------------------------------------------------------
# Densities

def test_stable_half_density_normalizes():
    total, err = integrate.quad(stable_half_density, 0, np.inf, limit=300)
    assert total == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DomainError):
        stable_half_density(0.0)


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0, 10.0])
def test_alpha_diversity_density_normalizes(beta):
    params = GGParams.from_beta(beta)
    total, err = integrate.quad(
        lambda s: alpha_diversity_density(s, params), 0, 60.0, limit=300)
    assert total == pytest.approx(1.0, abs=1e-7)


def test_alpha_diversity_density_beta0_is_transformed_stable():
    # at beta = 0 the density is the push-forward of the positive
    # 1/2-stable law under t -> t^(-1/2)
    params = GGParams(a=0.0)
    for s in (0.3, 1.0, 2.5):
        expected = stable_half_density(s ** -2.0) * 2.0 * s ** -3.0
        assert alpha_diversity_density(s, params) == pytest.approx(
            expected, rel=1e-12)


def test_alpha_diversity_density_domain():
    with pytest.raises(DomainError):
        alpha_diversity_density(0.0, GGParams(a=1.0))
    with pytest.raises(UnsupportedParameterError):
        alpha_diversity_density(1.0, GGParams(a=1.0, alpha=0.3))
    # deep left tail underflows to an exact zero instead of raising
    assert alpha_diversity_density(1e-4, GGParams.from_beta(10.0)) == 0.0
