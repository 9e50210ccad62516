"""Predictive weights, partition probabilities and singleton-count law
for generalized-gamma (in particular normalized inverse-Gaussian) and
Poisson-Dirichlet random measures.

Three routes are provided for the generalized-gamma predictive weights
(g0, g1):

* ``weights_gg_exact`` — alternating sums of incomplete-gamma terms in
  signed log space.  Fast and very accurate for moderate n, but the
  sums cancel catastrophically as n or beta grows; the routine refuses
  to answer once the estimated cancellation exceeds a threshold.
* ``weights_gg_quadrature`` — ratios of the normalizing constants
  V(n, k), each computed by adaptive quadrature of a unimodal positive
  integrand in shifted log space.  Slower but uniformly stable.
* ``weights_gg_asymptotic`` — the second-order large-n approximation
  g0 = alpha*k/n + (beta/s_n)/n, g1 = 1/n - (beta/s_n)/n^2.

A vectorized fixed-order Gauss-Legendre evaluator (``w_factor_batch``)
backs the large-scale samplers, where millions of weight evaluations
are needed and adaptive quadrature per point would be too slow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import (DomainError, NumericalError, PrecisionLossError,
                     UnsupportedParameterError)
from .specfun import (SignedLogSum, SignedLogValue, _log_gamma_cached,
                      gen_factorial_coeff_log, gen_factorial_coeff_log_table,
                      pochhammer_log)

DEFAULT_MAX_CONDITION = 12.0


# ---------------------------------------------------------------------------
# Parameter types

@dataclass(frozen=True)
class GGParams:
    """Generalized-gamma parameter set (a, tau, alpha).

    ``a = 0`` is the normalized-stable boundary case, where the weights
    and partition probabilities have elementary closed forms.
    ``alpha = 1/2`` is the normalized inverse-Gaussian case, the only
    one for which the exact alternating-sum route and the diffusion
    limits are supported.
    """

    a: float
    tau: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.a < 0:
            raise DomainError("GGParams requires a >= 0")
        if self.tau <= 0:
            raise DomainError("GGParams requires tau > 0")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("GGParams requires alpha in (0, 1)")

    @property
    def beta(self) -> float:
        return self.a * self.tau ** self.alpha / self.alpha

    @property
    def is_nig(self) -> bool:
        return self.alpha == 0.5

    @staticmethod
    def from_beta(beta: float, tau: float = 1.0,
                  alpha: float = 0.5) -> "GGParams":
        if beta < 0:
            raise DomainError("beta must be >= 0")
        return GGParams(a=beta * alpha / tau ** alpha, tau=tau, alpha=alpha)


@dataclass(frozen=True)
class PDParams:
    """Two-parameter Poisson-Dirichlet parameter set (theta, alpha)."""

    theta: float
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError("PDParams requires alpha in [0, 1)")
        if self.theta <= -self.alpha:
            raise DomainError("PDParams requires theta > -alpha")


@dataclass(frozen=True)
class WeightPair:
    """Predictive-rule weights: g0 starts a new type, g1 multiplies the
    (size - alpha) reinforcement of each existing type."""

    g0: float
    g1: float
    condition_estimate: float = 0.0


def _check_nk(n: int, k: int) -> None:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 1 <= k <= n:
        raise DomainError(f"k must be in [1, n], got k={k}, n={n}")


# ---------------------------------------------------------------------------
# Poisson-Dirichlet weights

def weights_pd(n: int, k: int, params: PDParams) -> WeightPair:
    """g0 = (theta + alpha*k)/(theta + n), g1 = 1/(theta + n)."""
    _check_nk(n, k)
    denom = params.theta + n
    return WeightPair(g0=(params.theta + params.alpha * k) / denom,
                      g1=1.0 / denom, condition_estimate=0.0)


# ---------------------------------------------------------------------------
# Exact route: alternating incomplete-gamma sums

def _gg_core_sum(n: int, k: int, beta: float, alpha: float) -> SignedLogSum:
    """sum_{s=0}^{n-1} binom(n-1, s) (-1)^s beta^{s/alpha}
    Gamma(k - s/alpha; beta), accumulated in signed log pools.

    This is (up to the prefactor alpha^{k-1} e^beta / Gamma(n)) the
    normalizing constant V(n, k) of the partition law.
    """
    log_beta = math.log(beta)
    acc = SignedLogSum()
    for s in range(n):
        log_term = (math.lgamma(n) - math.lgamma(s + 1) - math.lgamma(n - s)
                    + (s / alpha) * log_beta
                    + _log_gamma_cached(k - s / alpha, beta))
        acc.add_signed(1 if s % 2 == 0 else -1, log_term)
    return acc


def _require_sign_positive(res: SignedLogValue, what: str,
                           condition: float) -> None:
    if res.sign <= 0:
        raise PrecisionLossError(
            f"{what} lost all significant digits (sign flipped or vanished); "
            "use the quadrature route", condition_estimate=condition)


_MP_DPS = 50
_mp_gamma_tables = {}


def _mp_gamma_int(beta: float):
    """Memoized table c -> Gamma(c; beta) for integer c, as 50-digit
    fixed-precision values, built by the exact one-step recursions from
    Gamma(0; beta) = E1(beta) and Gamma(1; beta) = e^-beta."""
    import mpmath as mp
    table = _mp_gamma_tables.get(beta)
    if table is None:
        with mp.workdps(_MP_DPS):
            b = mp.mpf(beta)
            table = {"beta": b, "exp": mp.exp(-b), 0: mp.e1(b),
                     1: mp.exp(-b)}
        _mp_gamma_tables[beta] = table
    return table


def _mp_gamma_lookup(table, c: int):
    import mpmath as mp
    if c in table:
        return table[c]
    with mp.workdps(_MP_DPS):
        b, eb = table["beta"], table["exp"]
        if c > 1:
            lo = max(i for i in table if isinstance(i, int) and i <= c)
            g = table[lo]
            for j in range(lo, c):
                g = j * g + b ** j * eb  # Gamma(j+1) = j Gamma(j) + b^j e^-b
                table[j + 1] = g
        else:
            hi = min(i for i in table if isinstance(i, int) and i >= c)
            g = table[hi]
            for j in range(hi, c, -1):
                # Gamma(j-1) = (Gamma(j) - b^(j-1) e^-b) / (j-1)
                g = (g - b ** (j - 1) * eb) / (j - 1)
                table[j - 1] = g
    return table[c]


def _gg_core_sum_mp(n: int, k: int, beta: float):
    """The alternating sum of _gg_core_sum for alpha = 1/2 (so all
    incomplete-gamma arguments are the integers k - 2s), evaluated in
    50-digit arithmetic.  Returns (value, condition_estimate)."""
    import mpmath as mp
    table = _mp_gamma_int(beta)
    with mp.workdps(_MP_DPS):
        b2 = mp.mpf(beta) ** 2
        pos = mp.mpf(0)
        neg = mp.mpf(0)
        power = mp.mpf(1)
        for s in range(n):
            term = (math.comb(n - 1, s) * power
                    * _mp_gamma_lookup(table, k - 2 * s))
            if s % 2 == 0:
                pos += term
            else:
                neg += term
            power *= b2
        total = pos - neg
        peak = max(pos, neg)
        if total <= 0 or peak <= 0:
            return total, float("inf")
        condition = max(0.0, float(mp.log10(peak / abs(total))))
    return total, condition


def weights_gg_exact(n: int, k: int, params: GGParams,
                     max_condition: float = DEFAULT_MAX_CONDITION
                     ) -> WeightPair:
    """Predictive weights from the alternating-sum representation,
    evaluated in 50-digit fixed precision (the sums cancel; the
    condition estimate reports how many decimal digits were lost).

    Requires alpha = 1/2.  Raises PrecisionLossError when the estimated
    cancellation exceeds ``max_condition`` decimal digits.
    """
    import mpmath as mp
    _check_nk(n, k)
    if params.alpha != 0.5:
        raise UnsupportedParameterError(
            "exact route supports alpha = 1/2 only; use the quadrature route")
    if params.a == 0.0:
        return _weights_stable(n, k, params.alpha)

    alpha, beta = params.alpha, params.beta
    num0, c0 = _gg_core_sum_mp(n + 1, k + 1, beta)  # drives g0
    num1, c1 = _gg_core_sum_mp(n + 1, k, beta)      # drives g1
    den, cd = _gg_core_sum_mp(n, k, beta)
    condition = max(c0, c1, cd)
    if condition > max_condition:
        raise PrecisionLossError(
            f"alternating sums cancelled {condition:.1f} decimal digits "
            f"(threshold {max_condition}); use the quadrature route",
            condition_estimate=condition)
    with mp.workdps(_MP_DPS):
        g0 = float(alpha * num0 / (n * den))
        g1 = float(num1 / (n * den))
    return WeightPair(g0=g0, g1=g1, condition_estimate=condition)


def _weights_stable(n: int, k: int, alpha: float) -> WeightPair:
    """Normalized-stable (a = 0) closed form: g0 = alpha*k/n, g1 = 1/n."""
    return WeightPair(g0=alpha * k / n, g1=1.0 / n, condition_estimate=0.0)


# ---------------------------------------------------------------------------
# Quadrature route: V(n, k) as a unimodal integral

def _log_integrand(x, n, k, a, tau, alpha):
    """Log of the V(n, k) integrand
    x^(n-1) exp{-(a/alpha)[(tau+x)^alpha - tau^alpha]} (tau+x)^(alpha*k-n),
    vectorized over x (and over n, k when they are arrays)."""
    return ((n - 1) * np.log(x)
            - (a / alpha) * ((tau + x) ** alpha - tau ** alpha)
            + (alpha * k - n) * np.log(tau + x))


def _mode_poly(x, n, k, a, tau, alpha):
    """x*(tau+x) times d/dx of the log integrand; positive left of the
    mode, negative right of it."""
    return (n - 1) * (tau + x) + (alpha * k - n) * x - a * x * (tau + x) ** alpha


def _find_mode_scalar(n: int, k: int, params: GGParams) -> float:
    a, tau, alpha = params.a, params.tau, params.alpha
    if _mode_poly(1e-12, n, k, a, tau, alpha) <= 0:
        return 0.0
    hi = 1.0
    while _mode_poly(hi, n, k, a, tau, alpha) > 0:
        hi *= 2.0
        if hi > 1e30:
            raise NumericalError(
                f"mode search diverged at n={n}, k={k}, params={params}")
    from scipy.optimize import brentq
    return float(brentq(lambda x: _mode_poly(x, n, k, a, tau, alpha),
                        hi / 2.0 if hi > 1.0 else 1e-12, hi,
                        xtol=1e-14, rtol=1e-14))


_SCALAR_LOG_DROP = 80.0  # integrate where the log integrand is within 80
#                          of its peak; the excluded tails carry < e^-60
#                          of the mass even after width factors


@lru_cache(maxsize=200_000)
def log_v(n: int, k: int, params: GGParams) -> float:
    """log V(n, k): normalizing constant of the Gibbs partition law,
    V(n, k) = (a^k / Gamma(n)) * integral of the unimodal integrand.

    Computed by adaptive quadrature of exp(log-integrand - peak), with
    the domain split at the mode and truncated where the integrand has
    dropped _SCALAR_LOG_DROP below the peak (an infinite upper limit
    makes the adaptive rule unreliable when the mode is very large).
    """
    from scipy.optimize import brentq
    _check_nk(n, k)
    a, tau, alpha = params.a, params.tau, params.alpha
    if a == 0.0:
        # the integral diverges at a = 0, but V has an elementary form
        return (k - 1) * math.log(alpha) + math.lgamma(k) - math.lgamma(n)
    mode = _find_mode_scalar(n, k, params)
    if mode > 0:
        gmax = float(_log_integrand(mode, n, k, a, tau, alpha))
    else:
        # integrand decreasing from x = 0+ (only possible at n = 1)
        gmax = float((alpha * k - n) * math.log(tau))

    log_tau_a = tau ** alpha

    def log_f(x):
        # pure-math scalar form of _log_integrand (quad calls pointwise,
        # where numpy scalar arithmetic would dominate the cost)
        return ((n - 1) * math.log(x)
                - (a / alpha) * ((tau + x) ** alpha - log_tau_a)
                + (alpha * k - n) * math.log(tau + x))

    def f(x):
        if x <= 0.0:
            return 0.0 if n > 1 else math.exp(
                (alpha * k - n) * math.log(tau) - gmax)
        return math.exp(log_f(x) - gmax)

    def g(x):
        return log_f(x) - gmax + _SCALAR_LOG_DROP

    total = 0.0
    if mode > 0:
        # left cutoff (only when the integrand vanishes at 0, i.e. n > 1)
        x_lo = 0.0
        if n > 1:
            lo = 0.5 * mode
            while lo > 1e-300 and g(lo) > 0.0:
                lo *= 0.5
            if g(lo) <= 0.0:
                # the cutoff only needs to sit near the -80 contour, so a
                # loose tolerance suffices (the excess tail is ~e^-80)
                x_lo = float(brentq(g, lo, mode, xtol=1e-300, rtol=1e-3))
        left, _ = integrate.quad(f, x_lo, mode, epsabs=1e-13,
                                 epsrel=1e-11, limit=200)
        total += left
    hi = 2.0 * max(mode, 1.0)
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError(
                f"right-cutoff search diverged for V({n}, {k})")
    x_hi = float(brentq(g, max(mode, 1e-300), hi, rtol=1e-3))
    right, _ = integrate.quad(f, mode, x_hi, epsabs=1e-13,
                              epsrel=1e-11, limit=200)
    total += right
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalError(
            f"quadrature failed for V({n}, {k}) with params={params}: "
            f"integral={total}")
    return gmax + math.log(total) + k * math.log(a) - math.lgamma(n)


def w_factor(n: int, k: int, params: GGParams) -> float:
    """w(n, k) = E[x/(tau+x)] under the V(n, k) integrand, so that
    g1 = w/n and g0 = 1 - (1 - alpha*k/n) * w."""
    _check_nk(n, k)
    if params.a == 0.0:
        return 1.0
    # w(n, k) = V(n+1, k) * n / V(n, k): adding a factor x/(tau+x) to the
    # integrand turns x^{n-1}(tau+x)^{alpha k - n} into the (n+1, k) kernel.
    return math.exp(log_v(n + 1, k, params) - log_v(n, k, params)) * n


@lru_cache(maxsize=200_000)
def weights_gg_quadrature(n: int, k: int, params: GGParams) -> WeightPair:
    """Predictive weights as ratios of quadrature-evaluated V(n, k)."""
    _check_nk(n, k)
    if params.a == 0.0:
        return _weights_stable(n, k, params.alpha)
    lv = log_v(n, k, params)
    g0 = math.exp(log_v(n + 1, k + 1, params) - lv)
    g1 = math.exp(log_v(n + 1, k, params) - lv)
    return WeightPair(g0=g0, g1=g1, condition_estimate=0.0)


def weights_gg_asymptotic(n: int, k: int, params: GGParams) -> WeightPair:
    """Second-order large-n weights (alpha = 1/2 only):
    g0 = alpha*k/n + (beta/s_n)/n, g1 = 1/n - (beta/s_n)/n^2,
    with s_n = k/n^alpha."""
    _check_nk(n, k)
    alpha = params.alpha
    if alpha != 0.5:
        raise UnsupportedParameterError(
            "second-order weight expansion is derived for alpha = 1/2 only")
    s_n = k / n ** alpha
    correction = params.beta / s_n
    return WeightPair(g0=alpha * k / n + correction / n,
                      g1=1.0 / n - correction / n ** 2,
                      condition_estimate=0.0)


# ---------------------------------------------------------------------------
# Vectorized fixed-order evaluator for the samplers

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_LOG_DROP = 40.0  # integrate where the log integrand is within 40 of its peak


def _bisect_vec(f, pos_end, neg_end, iters):
    """Vectorized bisection: f > 0 at pos_end, f <= 0 at neg_end.
    The two ends may be in either numeric order."""
    for _ in range(iters):
        mid = 0.5 * (pos_end + neg_end)
        pos = f(mid) > 0
        pos_end = np.where(pos, mid, pos_end)
        neg_end = np.where(pos, neg_end, mid)
    return 0.5 * (pos_end + neg_end)


def _gl_panel(f, a, b):
    """64-node Gauss-Legendre of f over per-row intervals [a, b];
    f maps an (m, 64) grid to integrand values."""
    half = 0.5 * (b - a)[:, None]
    x = 0.5 * (a + b)[:, None] + half * _GL_NODES[None, :]
    return (f(x) * _GL_WEIGHTS[None, :] * half).sum(axis=1), x


def w_factor_batch(n_arr: np.ndarray, k_arr: np.ndarray,
                   params: GGParams) -> np.ndarray:
    """w(n, k) for arrays of states, via fixed-order Gauss-Legendre on
    the common V(n, k) grid (the numerator and denominator share nodes,
    so the ratio is insensitive to the shared normalization error).

    Requires n >= 2 elementwise (scalar routes cover n = 1).
    """
    n = np.asarray(n_arr, dtype=float)
    k = np.asarray(k_arr, dtype=float)
    if np.any(n < 2):
        raise DomainError("w_factor_batch requires n >= 2; use w_factor")
    if params.a == 0.0:
        return np.ones_like(n)
    a, tau, alpha = params.a, params.tau, params.alpha

    def h(x):
        return _mode_poly(x, n, k, a, tau, alpha)

    # mode: h > 0 at 0+ (n >= 2), h -> -inf; bracket by doubling
    hi = np.ones_like(n)
    for _ in range(100):
        mask = h(hi) > 0
        if not mask.any():
            break
        hi = np.where(mask, 2.0 * hi, hi)
    else:
        raise NumericalError("batch mode search failed to bracket")
    mode = _bisect_vec(h, np.zeros_like(n), hi, 50)

    def g(x):
        return _log_integrand(x, n, k, a, tau, alpha)

    gmax = g(mode)
    target = gmax - _LOG_DROP

    # left cutoff: g increasing on (0, mode); halve until below target
    lo = 0.5 * mode
    for _ in range(200):
        with np.errstate(divide="ignore"):
            mask = g(lo) > target
        if not mask.any():
            break
        lo = np.where(mask, 0.5 * lo, lo)
    else:
        raise NumericalError("batch left-cutoff search failed")
    x_lo = _bisect_vec(lambda x: g(x) - target, mode, lo, 50)

    # right cutoff: double until below target
    hi = 2.0 * np.maximum(mode, 1.0)
    for _ in range(200):
        mask = g(hi) > target
        if not mask.any():
            break
        hi = np.where(mask, 2.0 * hi, hi)
    else:
        raise NumericalError("batch right-cutoff search failed")
    x_hi = _bisect_vec(lambda x: g(x) - target, mode, hi, 50)

    n_col, k_col = n[:, None], k[:, None]

    def shifted(x):
        return np.exp(_log_integrand(x, n_col, k_col, a, tau, alpha)
                      - gmax[:, None])

    # two panels per side; the right side is split near the mode because
    # for small n the tail window is wide relative to the peak
    edges = (x_lo, x_lo + 0.5 * (mode - x_lo), mode,
             mode + 0.125 * (x_hi - mode), x_hi)
    den = np.zeros_like(n)
    num = np.zeros_like(n)
    for lo_b, hi_b in zip(edges[:-1], edges[1:]):
        part, x = _gl_panel(shifted, lo_b, hi_b)
        den += part
        part_w, _ = _gl_panel(lambda xx: shifted(xx) * (xx / (tau + xx)),
                              lo_b, hi_b)
        num += part_w
    if np.any(den <= 0) or not np.all(np.isfinite(den)):
        raise NumericalError("batch quadrature produced a nonpositive "
                             "normalizer")
    return num / den


def g0_batch(n_arr: np.ndarray, k_arr: np.ndarray,
             params: GGParams) -> np.ndarray:
    """g0(n, k) for arrays of states via the w-decomposition."""
    n = np.asarray(n_arr, dtype=float)
    k = np.asarray(k_arr, dtype=float)
    w = w_factor_batch(n_arr, k_arr, params)
    return np.clip(1.0 - (1.0 - params.alpha * k / n) * w, 0.0, 1.0)


# ---------------------------------------------------------------------------
# EPPF

def eppf_log(block_sizes, params: GGParams,
             max_condition: float = DEFAULT_MAX_CONDITION) -> float:
    """Log probability of an unordered block-size configuration."""
    sizes = list(block_sizes)
    if not sizes or any((s < 1 or s != int(s)) for s in sizes):
        raise DomainError("block sizes must be a nonempty list of positive "
                          "integers")
    sizes = [int(s) for s in sizes]
    n = sum(sizes)
    k = len(sizes)
    alpha = params.alpha
    log_poch = sum(pochhammer_log(1.0 - alpha, s - 1).log_magnitude
                   for s in sizes)
    if params.a == 0.0:
        log_vnk = (k - 1) * math.log(alpha) + math.lgamma(k) - math.lgamma(n)
        return log_vnk + log_poch
    core = _gg_core_sum(n, k, params.beta, alpha)
    if core.condition_estimate > max_condition:
        raise PrecisionLossError(
            f"partition-probability sum cancelled "
            f"{core.condition_estimate:.1f} digits",
            condition_estimate=core.condition_estimate)
    res = core.result()
    _require_sign_positive(res, "partition probability",
                           core.condition_estimate)
    return ((k - 1) * math.log(alpha) + params.beta - math.lgamma(n)
            + log_poch + res.log_magnitude)


def eppf(block_sizes, params: GGParams,
         max_condition: float = DEFAULT_MAX_CONDITION) -> float:
    """Probability of the given unordered block-size configuration;
    invariant under permutation of the sizes."""
    return math.exp(eppf_log(block_sizes, params, max_condition))


# ---------------------------------------------------------------------------
# Singleton-count law

M1_EXACT_N_LIMIT = 40
# beyond this many cancelled digits the pools agree to within double-precision
# roundoff, i.e. the true sum is zero
TOTAL_CANCELLATION_DIGITS = 15.3


def m1_pmf(n: int, m: int, params: GGParams,
           max_condition: float = DEFAULT_MAX_CONDITION) -> float:
    """P(number of size-one blocks = m) in an n-sample, by the exact
    triple sum over (s, j, kk) in signed log space.

    Refused for n above M1_EXACT_N_LIMIT, where cancellation makes the
    triple sum meaningless in double precision.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0 <= m <= n:
        raise DomainError("m must be in [0, n]")
    if n > M1_EXACT_N_LIMIT:
        raise PrecisionLossError(
            f"exact singleton-count law refused for n > {M1_EXACT_N_LIMIT}; "
            "use Monte Carlo")
    if params.a == 0.0:
        raise UnsupportedParameterError(
            "singleton-count closed form requires a > 0")
    if m == n - 1 and n > 1:
        # structurally impossible: n-1 singletons force the remaining
        # block to be a singleton as well
        return 0.0
    alpha, beta = params.alpha, params.beta
    log_beta = math.log(beta)
    acc = SignedLogSum()
    for s in range(n):
        log_s_part = (math.lgamma(n) - math.lgamma(s + 1)
                      - math.lgamma(n - s) + (s / alpha) * log_beta)
        sign_s = 1 if s % 2 == 0 else -1
        for j in range(n - m + 1):
            poch = pochhammer_log(n - m - j + 1, m + j)
            if poch.sign == 0:
                continue
            sign_sj = sign_s * poch.sign * (1 if j % 2 == 0 else -1)
            log_sj = (log_s_part + j * math.log(alpha)
                      + poch.log_magnitude - math.lgamma(j + 1))
            for kk in range(n - m - j + 1):
                c = gen_factorial_coeff_log(n - m - j, kk, alpha)
                if c.sign == 0:
                    continue
                log_term = (log_sj + c.log_magnitude
                            + _log_gamma_cached(kk + m + j - s / alpha, beta))
                acc.add_signed(sign_sj * c.sign, log_term)
    cond = acc.condition_estimate
    if cond >= TOTAL_CANCELLATION_DIGITS:
        # cancellation is complete to double precision: the true value is
        # an exact structural zero (e.g. n-1 singletons is impossible)
        return 0.0
    if cond > max_condition:
        raise PrecisionLossError(
            f"singleton-count sum cancelled {cond:.1f} digits",
            condition_estimate=cond)
    res = acc.result()
    if res.sign < 0:
        raise PrecisionLossError(
            "singleton-count sum lost its sign", condition_estimate=cond)
    if res.sign == 0:
        return 0.0
    log_prefactor = ((m - 1) * math.log(alpha) + beta - math.lgamma(n)
                     - math.lgamma(m + 1))
    return math.exp(log_prefactor + res.log_magnitude)


def m1_factorial_moment(n: int, r: int, params: GGParams,
                        max_condition: float = DEFAULT_MAX_CONDITION
                        ) -> float:
    """r-th falling-factorial moment of the singleton count:
    E[M1 (M1-1) ... (M1-r+1)]."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 1 <= r <= n:
        raise DomainError("r must be in [1, n]")
    if n > M1_EXACT_N_LIMIT:
        raise PrecisionLossError(
            f"exact singleton-count law refused for n > {M1_EXACT_N_LIMIT}; "
            "use Monte Carlo")
    if params.a == 0.0:
        raise UnsupportedParameterError(
            "singleton-count closed form requires a > 0")
    alpha, beta = params.alpha, params.beta
    log_beta = math.log(beta)
    # log of (n)_[r] = n! / (n-r)!
    log_falling = math.lgamma(n + 1) - math.lgamma(n - r + 1)
    acc = SignedLogSum()
    for k in range(r, n + 1):
        c = gen_factorial_coeff_log(n - r, k - r, alpha)
        if c.sign == 0:
            continue
        for s in range(n):
            log_term = (c.log_magnitude + math.lgamma(n)
                        - math.lgamma(s + 1) - math.lgamma(n - s)
                        + (s / alpha) * log_beta
                        + _log_gamma_cached(k - s / alpha, beta))
            acc.add_signed(c.sign * (1 if s % 2 == 0 else -1), log_term)
    if acc.condition_estimate > max_condition:
        raise PrecisionLossError(
            f"factorial-moment sum cancelled {acc.condition_estimate:.1f} "
            "digits", condition_estimate=acc.condition_estimate)
    res = acc.result()
    if res.sign <= 0:
        if res.sign == 0:
            return 0.0
        raise PrecisionLossError(
            "factorial-moment sum lost its sign",
            condition_estimate=acc.condition_estimate)
    log_prefactor = ((r - 1) * math.log(alpha) + log_falling + beta
                     - math.lgamma(n))
    return math.exp(log_prefactor + res.log_magnitude)


# ---------------------------------------------------------------------------
# Exact moments of the partition law conditioned on the number of blocks

def conditional_pair_probability(n: int, k: int, alpha: float = 0.5) -> float:
    """P(two given items fall in the same block | K_n = k) under any
    Gibbs-type partition with discount alpha.

    Conditioning on the number of blocks removes the V-weights, leaving
    the law proportional to prod_j (1 - alpha)_(n_j - 1) over set
    partitions of [n] with k blocks; the normalizer is
    C(n, k, alpha) / alpha^k.  The pair probability is obtained by
    size-biasing the block of the first item.
    """
    if n < 2:
        raise DomainError("pair probability needs n >= 2")
    if not 1 <= k <= n:
        raise DomainError("k must lie in [1, n]")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if k == n:
        return 0.0
    table = gen_factorial_coeff_log_table(n, k, alpha)
    log_norm = table[n, k]
    log_poch = np.cumsum(np.log(np.arange(n - k + 1) + (1.0 - alpha)))
    m = np.arange(2, n - k + 2)
    log_weight = (math.lgamma(n)
                  - np.array([math.lgamma(v) for v in m])
                  - np.array([math.lgamma(n - v + 1) for v in m])
                  + log_poch[m - 2] + table[n - m, k - 1]
                  + math.log(alpha))
    return float(np.sum(np.exp(log_weight - log_norm) * (m - 1) / (n - 1)))


def conditional_phi2_mean(n: int, k: int, alpha: float = 0.5) -> float:
    """Exact E[sum_j (n_j / n)^2 | K_n = k] for a Gibbs-type partition
    with discount alpha (independent of the V-weights)."""
    p = conditional_pair_probability(n, k, alpha)
    return (n * (n - 1) * p + n) / (n * n)
