"""The rescaled cluster-count chain, its square-root diffusion limit
dS = (beta/S) dt + sqrt(S) dB, boundary analytics (scale function,
speed measure, stationary-density candidate), the (n+1)-dimensional
truncated Wright-Fisher-type diffusion, and generator actions on
power-sum test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, InternalConsistencyError, NumericalError
from .gibbs import GGParams, weights_gg_asymptotic
from .specfun import exp_integral_ei
from .urn import predictive_weights

SDE_FLOOR_GUARD = 1e-12


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class ChainState:
    """Cluster count k out of n items; k = 1 and k = n are barriers."""

    k: int
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("chain requires n >= 2")
        if not 1 <= self.k <= self.n:
            raise DomainError(f"k must be in [1, n], got {self.k}")


@dataclass(frozen=True)
class DiversityPath:
    """A rescaled trajectory: values[i] observed at times[i]."""

    times: tuple
    values: tuple
    rescaling: dict

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise DomainError("times and values must have equal length")


@dataclass
class FiniteDimState:
    """State (s, z_1..z_n) of the truncated finite-dimensional diffusion:
    s > 0, z_i >= eps_n, sum z_i = 1."""

    s: float
    z: np.ndarray

    def validate(self, eps_n: float) -> None:
        if self.s <= 0:
            raise InternalConsistencyError("s must be positive")
        if np.any(self.z < eps_n - 1e-15):
            raise InternalConsistencyError("z below the eps_n floor")
        if abs(float(self.z.sum()) - 1.0) > 1e-12:
            raise InternalConsistencyError("z does not sum to 1")


@dataclass(frozen=True)
class SimplexPoint:
    """Decreasingly ordered nonnegative frequencies summing to <= 1."""

    coords: tuple
    truncation_len: int

    def __post_init__(self):
        c = self.coords
        if any(c[i] < c[i + 1] for i in range(len(c) - 1)):
            raise DomainError("coords must be sorted decreasingly")
        if c and (c[-1] < -1e-15 or sum(c) > 1.0 + 1e-12):
            raise DomainError("coords must be nonnegative with sum <= 1")

    def power_sum(self, m: int) -> float:
        """phi_m = sum of m-th powers of the coordinates."""
        if m < 1:
            raise DomainError("power sum requires m >= 1")
        return float(sum(c ** m for c in self.coords))


# ---------------------------------------------------------------------------
# Cluster-count chain

def _chain_weights(n: int, k: int, params: GGParams, mode: str):
    if mode == "exact":
        return predictive_weights(n, k, params)
    if mode == "asymptotic":
        return weights_gg_asymptotic(n, k, params)
    raise DomainError(f"unknown mode {mode!r}")


def chain_transition_probs(state: ChainState, params: GGParams,
                           mode: str = "exact"):
    """(p_up, p_down, p_stay) of the cluster-count chain:
    p_up = (1 - alpha*k/n) g0(n-1, k), and
    p_down = (alpha*k/n) g1(n-1, k-1) (n-1 - alpha*(k-1)),
    with barriers at k = 1 and k = n."""
    n, k = state.n, state.k
    alpha = params.alpha
    p_up = 0.0
    if k < n:
        p_up = (1.0 - alpha * k / n) * _chain_weights(n - 1, k, params,
                                                      mode).g0
    p_down = 0.0
    if k > 1:
        g1 = _chain_weights(n - 1, k - 1, params, mode).g1
        p_down = (alpha * k / n) * g1 * (n - 1 - alpha * (k - 1))
    p_stay = 1.0 - p_up - p_down
    for p in (p_up, p_down, p_stay):
        if not 0.0 <= p <= 1.0:
            raise InternalConsistencyError(
                f"transition probability {p!r} outside [0, 1] at "
                f"n={n}, k={k}, mode={mode}")
    return p_up, p_down, p_stay


@dataclass(frozen=True)
class IncrementMoments:
    """Exact one-step moments of the rescaled increment k/n^alpha, with
    the large-n predictions (beta/s_n)/n^(1+alpha) for the mean and
    2*alpha*s_n/n^(1+alpha) for the second moment (one rescaled-clock
    tick is n^-(1+alpha), and the limit diffusion has variance rate
    2*alpha*s)."""

    mean: float
    second_moment: float
    mean_asymptotic: float
    second_moment_asymptotic: float


def chain_increment_moments(state: ChainState, params: GGParams,
                            mode: str = "exact") -> IncrementMoments:
    p_up, p_down, _ = chain_transition_probs(state, params, mode)
    alpha = params.alpha
    n, k = state.n, state.k
    step = n ** (-alpha)
    s_n = k / n ** alpha
    return IncrementMoments(
        mean=(p_up - p_down) * step,
        second_moment=(p_up + p_down) * step ** 2,
        mean_asymptotic=(params.beta / s_n) / n ** (1 + alpha),
        second_moment_asymptotic=2 * alpha * s_n / n ** (1 + alpha))


def _transition_tables(n: int, params: GGParams, mode: str):
    """(p_up[k], p_down[k]) for k = 0..n (index 0 unused)."""
    p_up = np.zeros(n + 1)
    p_down = np.zeros(n + 1)
    for k in range(1, n + 1):
        p_up[k], p_down[k], _ = chain_transition_probs(
            ChainState(k=k, n=n), params, mode)
    return p_up, p_down


def simulate_chain(n: int, steps: int, k0: int, params: GGParams,
                   rng: np.random.Generator, mode: str = "exact",
                   record_every: int = 1) -> DiversityPath:
    """Path of k/n^alpha at the rescaled clock t = step / n^(3/2)."""
    path = simulate_chain_ensemble(n, steps, k0, params, 1, rng, mode,
                                   record_every)
    alpha = params.alpha
    times = tuple(i * record_every / n ** 1.5
                  for i in range(path.shape[0]))
    values = tuple(path[:, 0] / n ** alpha)
    return DiversityPath(times=times, values=values,
                         rescaling={"space_exponent": alpha,
                                    "time_exponent": 1.5})


def simulate_chain_ensemble(n: int, steps: int, k0: int, params: GGParams,
                            replicates: int, rng: np.random.Generator,
                            mode: str = "exact",
                            record_every: int = 1) -> np.ndarray:
    """Raw k-paths of shape (recorded_steps + 1, replicates), with all
    replicates advanced jointly from precomputed transition tables."""
    if not 1 <= k0 <= n:
        raise DomainError("k0 must be in [1, n]")
    if steps < 0 or replicates < 1 or record_every < 1:
        raise DomainError("steps >= 0, replicates >= 1, record_every >= 1")
    p_up, p_down = _transition_tables(n, params, mode)
    k = np.full(replicates, k0, dtype=np.int32)
    out = np.empty((steps // record_every + 1, replicates), dtype=np.int32)
    out[0] = k
    row = 1
    for step in range(1, steps + 1):
        u = rng.random(replicates)
        k += (u < p_up[k]).astype(np.int32)
        k -= (u > 1.0 - p_down[k]).astype(np.int32)
        if step % record_every == 0:
            out[row] = k
            row += 1
    return out[:row]


# ---------------------------------------------------------------------------
# The square-root diffusion

def sde_step(s: float, dt: float, beta: float, rng: np.random.Generator,
             floor_guard: float = SDE_FLOOR_GUARD) -> float:
    """One full-truncation Euler-Maruyama step of
    dS = (beta/S) dt + sqrt(S) dB; 0 is absorbing when beta = 0."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    if beta < 0:
        raise DomainError("beta must be >= 0")
    if beta == 0.0 and s <= 0.0:
        return 0.0
    drift = beta / max(s, floor_guard)
    diffusion = math.sqrt(max(s, 0.0) * dt) * rng.standard_normal()
    return max(s + drift * dt + diffusion, 0.0)


def simulate_sde(s0: float, beta: float, dt: float, steps: int,
                 rng: np.random.Generator) -> DiversityPath:
    """Euler-Maruyama path of the square-root diffusion."""
    if s0 < 0:
        raise DomainError("s0 must be >= 0")
    values = [s0]
    s = s0
    for _ in range(steps):
        s = sde_step(s, dt, beta, rng)
        values.append(s)
    times = tuple(i * dt for i in range(steps + 1))
    return DiversityPath(times=times, values=tuple(values),
                         rescaling={"space_exponent": 1.0,
                                    "time_exponent": 1.0})


# ---------------------------------------------------------------------------
# Boundary analytics

def scale_function(x: float, beta: float, x0: float = 1.0,
                   y0: float = 1.0) -> float:
    """Scale function S(x) = int_x0^x exp{-int_y0^y 2 mu/sigma^2} dy for
    mu = beta/y, sigma^2 = y, in closed form via the exponential
    integral.  S(x0) = 0 and S is increasing."""
    if x <= 0 or x0 <= 0 or y0 <= 0:
        raise DomainError("scale_function requires positive arguments")
    if beta <= 0:
        raise DomainError("scale_function requires beta > 0")
    return math.exp(-2 * beta / y0) * (
        x * math.exp(2 * beta / x) - x0 * math.exp(2 * beta / x0)
        - 2 * beta * exp_integral_ei(2 * beta / x)
        + 2 * beta * exp_integral_ei(2 * beta / x0))


def speed_measure(c: float, d: float, beta: float, y0: float = 1.0) -> float:
    """Speed measure M[c, d] = int_c^d [sigma^2(t) s(t)]^-1 dt in closed
    form: exp(2 beta / y0) [Ei(-2 beta / c) - Ei(-2 beta / d)]."""
    if not 0 < c < d:
        raise DomainError("speed_measure requires 0 < c < d")
    if beta <= 0 or y0 <= 0:
        raise DomainError("speed_measure requires beta > 0 and y0 > 0")
    return math.exp(2 * beta / y0) * (exp_integral_ei(-2 * beta / c)
                                      - exp_integral_ei(-2 * beta / d))


def stationary_density_candidate(x: float, beta: float, c1: float,
                                 c2: float) -> float:
    """The general solution psi of the stationarity ODE:
    psi(x) = C1 - 2 beta C1 x^-1 e^(-2 beta/x) Ei(2 beta/x)
             + C2 x^-1 e^(-2 beta/x).
    No choice of (C1, C2) is integrable on (0, inf), so no stationary
    density exists; see stationary_tail_partial_integral."""
    if x <= 0:
        raise DomainError("x must be positive")
    if beta <= 0:
        raise DomainError("beta must be positive")
    core = math.exp(-2 * beta / x) / x
    return c1 - 2 * beta * c1 * core * exp_integral_ei(2 * beta / x) \
        + c2 * core


def stationary_tail_partial_integral(t_upper: float, beta: float,
                                     lower: float = 1.0) -> float:
    """int_lower^T x^-1 e^(-2 beta/x) dx by quadrature: grows like ln T,
    certifying that the C2 term of the candidate is not integrable."""
    if not 0 < lower < t_upper:
        raise DomainError("need 0 < lower < T")
    val, err = integrate.quad(
        lambda x: math.exp(-2 * beta / x) / x, lower, t_upper,
        epsabs=1e-12, epsrel=1e-10, limit=300)
    if not np.isfinite(val):
        raise NumericalError("partial-integral quadrature failed")
    return val


# ---------------------------------------------------------------------------
# Finite-dimensional diffusion

def default_eps(n: int) -> float:
    """Default frequency floor eps_n = n^-2 (satisfies 0 < eps_n < 1/n
    with n*eps_n decreasing)."""
    return float(n) ** -2


def finite_dim_covariance(z: np.ndarray, eps_n: float) -> np.ndarray:
    """Truncated Wright-Fisher covariance
    a_ij = (z_i - eps)(delta_ij (1 - n*eps) - (z_j - eps))."""
    n = z.shape[0]
    y = z - eps_n
    a = -np.outer(y, y)
    a[np.diag_indices(n)] += y * (1.0 - n * eps_n)
    return a


def finite_dim_drift(z: np.ndarray, s: float, eps_n: float,
                     params: GGParams) -> np.ndarray:
    """Drift b_i = beta(1-z_i)/(s(n-1)) - beta z_i/s
    - alpha(1 - exp{-(z_i - eps) e^(1/eps)}).

    The exp(1/eps) factor overflows for small eps; the mutation term is
    then an indicator: alpha away from the floor, 0 on it."""
    n = z.shape[0]
    beta = params.beta
    s_safe = max(s, SDE_FLOOR_GUARD)
    b = beta * (1.0 - z) / (s_safe * (n - 1)) - beta * z / s_safe
    scale = math.exp(min(1.0 / eps_n, 700.0))
    arg = np.clip((z - eps_n) * scale, 0.0, 745.0)
    return b - params.alpha * (1.0 - np.exp(-arg))


def finite_dim_step(state: FiniteDimState, n: int, eps_n: float,
                    params: GGParams, dt: float,
                    rng: np.random.Generator) -> FiniteDimState:
    """One Euler-Maruyama step of the (n+1)-dimensional diffusion: the
    s-component follows the square-root diffusion; the z-components get
    drift b_i and noise with covariance a_ij (square-root factor by
    eigendecomposition with negative eigenvalues clipped at 0).  After
    the step z is clipped to the eps_n floor and renormalized."""
    if state.z.shape[0] != n:
        raise DomainError("state dimension does not match n")
    if not 0.0 < eps_n < 1.0 / n:
        raise DomainError("need 0 < eps_n < 1/n")
    z = state.z
    a = finite_dim_covariance(z, eps_n)
    try:
        eigvals, eigvecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"covariance factorization failed at state s={state.s}, "
            f"z={z!r}") from exc
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    noise = root @ rng.standard_normal(n)
    b = finite_dim_drift(z, state.s, eps_n, params)
    z_new = z + b * dt + math.sqrt(dt) * noise
    # restore the invariants: floor at eps_n, then renormalize the excess
    z_new = np.maximum(z_new, eps_n)
    excess = z_new - eps_n
    total = float(excess.sum())
    if total <= 0.0:
        z_new = np.full(n, 1.0 / n)
    else:
        z_new = eps_n + excess * (1.0 - n * eps_n) / total
    s_new = max(sde_step(state.s, dt, params.beta, rng), SDE_FLOOR_GUARD)
    return FiniteDimState(s=s_new, z=z_new)


def project_ordered(state: FiniteDimState):
    """(s, decreasingly sorted frequencies)."""
    coords = tuple(sorted((float(v) for v in state.z), reverse=True))
    return state.s, SimplexPoint(coords=coords, truncation_len=len(coords))


# ---------------------------------------------------------------------------
# Generator action on power sums

def generator_action_power_sum(m: int, s: float, point: SimplexPoint,
                               params: GGParams) -> float:
    """Action of the frequency part of the limiting generator on the
    power sum phi_m = sum z_i^m, in closed form:

        A1 phi_m = (m/2) [(m - 1 - alpha) phi_{m-1}
                          - (m - 1 + beta/s) phi_m],

    with phi_1 = 1 on the simplex.  The action stays in the span of
    {phi_{m-1}, phi_m} (triangularity of the generator)."""
    if m < 2:
        raise DomainError("power-sum action requires m >= 2")
    if s <= 0:
        raise DomainError("s must be positive")
    total = sum(point.coords)
    if abs(total - 1.0) > 1e-9:
        raise DomainError("point must lie on the simplex (sum = 1)")
    phi_m = point.power_sum(m)
    phi_prev = 1.0 if m == 2 else point.power_sum(m - 1)
    theta = params.beta / s
    return 0.5 * m * ((m - 1 - params.alpha) * phi_prev
                      - (m - 1 + theta) * phi_m)
