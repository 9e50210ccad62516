"""Moran-type particle system driven by the generalized Polya-urn
predictive rule, its rescaled observables, and the conditioned
(fixed cluster count) variant.

One event replaces a uniformly chosen particle: the incoming particle
is a fresh type with probability g0(n-1, k_r) (k_r = distinct types
after removal) and a copy of an existing type of size n_j with
probability g1(n-1, k_r) * (n_j - alpha).  Copy moves are realized by
rejection: pick a uniform surviving particle of type t, accept with
probability (n_t - alpha)/n_t, which makes every event O(1) regardless
of the number of types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InternalConsistencyError
from .gibbs import GGParams
from .urn import PartitionState, predictive_weights, sample_partition


class ParticleSystem:
    """n particles with integer type ids; fresh ids strictly increase so
    new types never collide (the base measure is nonatomic).

    ``sum_sq`` tracks sum of squared block sizes incrementally, so the
    pair-probability observable phi_2 = sum (n_j/n)^2 is O(1) per event.
    """

    __slots__ = ("assignments", "counts", "next_fresh_id", "sum_sq")

    def __init__(self, assignments):
        self.assignments = list(assignments)
        if not self.assignments:
            raise DomainError("a particle system needs at least one particle")
        self.counts = {}
        for t in self.assignments:
            self.counts[t] = self.counts.get(t, 0) + 1
        self.next_fresh_id = max(self.counts) + 1
        self.sum_sq = sum(c * c for c in self.counts.values())

    @property
    def n(self) -> int:
        return len(self.assignments)

    @property
    def K(self) -> int:
        return len(self.counts)

    @staticmethod
    def from_partition(state: PartitionState) -> "ParticleSystem":
        assignments = []
        for bid, size in zip(state.block_ids, state.block_sizes):
            assignments.extend([bid] * size)
        return ParticleSystem(assignments)

    @staticmethod
    def initialize(n: int, params, rng: np.random.Generator
                   ) -> "ParticleSystem":
        """Start from the n-sample exchangeable law of the urn."""
        return ParticleSystem.from_partition(sample_partition(n, params, rng))

    def to_partition_state(self) -> PartitionState:
        """From-scratch recount of the assignments."""
        counts = {}
        for t in self.assignments:
            counts[t] = counts.get(t, 0) + 1
        ids = sorted(counts)
        return PartitionState(block_sizes=[counts[i] for i in ids],
                              block_ids=ids,
                              next_block_id=self.next_fresh_id)

    def phi(self, m: int) -> float:
        """Power sum of relative frequencies, sum (n_j/n)^m."""
        if m < 1:
            raise DomainError("phi requires m >= 1")
        n = self.n
        if m == 2:
            return self.sum_sq / (n * n)
        return sum((c / n) ** m for c in self.counts.values())

    def ordered_frequencies(self, top: int = None) -> tuple:
        freqs = sorted((c / self.n for c in self.counts.values()),
                       reverse=True)
        if top is not None:
            freqs = freqs[:top]
        return tuple(freqs)

    def validate(self) -> None:
        recount = {}
        for t in self.assignments:
            recount[t] = recount.get(t, 0) + 1
        if recount != self.counts:
            raise InternalConsistencyError("counts out of sync")
        if self.counts and max(self.counts) >= self.next_fresh_id:
            raise InternalConsistencyError("fresh-id counter behind")
        if self.sum_sq != sum(c * c for c in recount.values()):
            raise InternalConsistencyError("sum of squares out of sync")

    # -- internal mutators keeping counts/sum_sq coherent ------------------

    def _remove_at(self, i: int) -> int:
        t = self.assignments[i]
        c = self.counts[t]
        self.sum_sq += 1 - 2 * c
        if c == 1:
            del self.counts[t]
        else:
            self.counts[t] = c - 1
        return t

    def _assign(self, i: int, t: int) -> None:
        self.assignments[i] = t
        c = self.counts.get(t, 0)
        self.counts[t] = c + 1
        self.sum_sq += 2 * c + 1

    def _fresh(self, i: int) -> None:
        self._assign(i, self.next_fresh_id)
        self.next_fresh_id += 1

    def _copy_existing(self, i: int, alpha: float,
                       rng: np.random.Generator) -> None:
        """Copy a surviving type with probability proportional to
        (n_t - alpha), by uniform-particle rejection (particle i has
        already been removed from the counts)."""
        n = self.n
        assignments = self.assignments
        counts = self.counts
        while True:
            j = int(rng.integers(n))
            if j == i:
                continue
            t = assignments[j]
            c = counts[t]
            if rng.random() * c < c - alpha:
                self._assign(i, t)
                return


def moran_step(sys: ParticleSystem, params, rng: np.random.Generator
               ) -> ParticleSystem:
    """One event: replace a uniform particle by a predictive draw from
    the remaining n-1.  Mutates and returns ``sys``."""
    n = sys.n
    if n < 2:
        raise DomainError("moran_step requires n >= 2")
    i = int(rng.integers(n))
    sys._remove_at(i)
    k_r = sys.K
    w = predictive_weights(n - 1, k_r, params)
    total = w.g0 + w.g1 * (n - 1 - params.alpha * k_r)
    if abs(total - 1.0) > 1e-9:
        raise InternalConsistencyError(
            f"replacement probabilities sum to {total!r} at n={n}, k={k_r}")
    if rng.random() < w.g0:
        sys._fresh(i)
    else:
        sys._copy_existing(i, params.alpha, rng)
    return sys


def run_moran(sys: ParticleSystem, steps: int, params,
              rng: np.random.Generator) -> ParticleSystem:
    for _ in range(steps):
        moran_step(sys, params, rng)
    return sys


def conditioned_step(sys: ParticleSystem, params, rng: np.random.Generator
                     ) -> ParticleSystem:
    """The fixed-K transition: if the removed particle was a singleton
    the replacement is a fresh type with probability one; otherwise it
    is a copy of a surviving type with probability proportional to
    (n_j - alpha).  The cluster count K never changes."""
    n = sys.n
    if n < 2:
        raise DomainError("conditioned_step requires n >= 2")
    k_before = sys.K
    i = int(rng.integers(n))
    t = sys.assignments[i]
    was_singleton = sys.counts[t] == 1
    sys._remove_at(i)
    if was_singleton:
        sys._fresh(i)
    else:
        sys._copy_existing(i, params.alpha, rng)
    if sys.K != k_before:
        raise InternalConsistencyError("conditioned step changed K")
    return sys


def run_conditioned_phi2(sys: ParticleSystem, steps: int, params,
                         rng: np.random.Generator, burn_in: int = 0
                         ) -> float:
    """Time average of phi_2 = sum (n_j/n)^2 along the conditioned
    dynamics, after ``burn_in`` discarded events."""
    if burn_in >= steps:
        raise DomainError("burn_in must be below steps")
    for _ in range(burn_in):
        conditioned_step(sys, params, rng)
    n_sq = sys.n * sys.n
    acc = 0
    kept = steps - burn_in
    for _ in range(kept):
        conditioned_step(sys, params, rng)
        acc += sys.sum_sq
    return acc / (kept * n_sq)


def moran_phi2_drift(block_sizes, params) -> float:
    """Exact instantaneous drift of phi_2 at the given configuration
    under the event clock n^2/2, i.e. (n^2/2) E[Delta phi_2 | state] for
    one replacement event, by direct expectation over the kernel.

    This is the finite-n quantity whose n -> infinity limit is the
    closed-form generator action on phi_2; it serves as an independent
    oracle for both the simulator and the generator formula.
    """
    from collections import Counter
    sizes = [int(c) for c in block_sizes]
    if any(c < 1 for c in sizes):
        raise DomainError("block sizes must be positive")
    n = sum(sizes)
    if n < 2:
        raise DomainError("need at least two particles")
    k = len(sizes)
    alpha = params.alpha
    counts = Counter(sizes)
    total = 0.0
    for c_j, mult in counts.items():
        k_r = k - 1 if c_j == 1 else k
        w = predictive_weights(n - 1, k_r, params)
        # removal takes sum_sq down by 2*c_j - 1; a fresh type adds 1
        delta = -(2 * c_j - 1) + w.g0
        # a copy of a surviving block of size c adds 2*c + 1
        copy = 0.0
        for c_t, m_t in counts.items():
            m_surviving = m_t - (1 if c_t == c_j else 0)
            copy += m_surviving * (c_t - alpha) * (2 * c_t + 1)
        if c_j >= 2:
            copy += (c_j - 1 - alpha) * (2 * (c_j - 1) + 1)
        delta += w.g1 * copy
        total += mult * (c_j / n) * delta
    # Delta phi_2 = Delta sum_sq / n^2, times the n^2/2 event rate
    return total / 2.0


def conditioned_phi2_average(block_sizes, steps: int, alpha: float,
                             rng: np.random.Generator, burn_in: int = 0
                             ) -> float:
    """Fast time average of phi_2 along the conditioned (fixed-K)
    dynamics, starting from the given block sizes.

    Same law as repeated ``conditioned_step``, specialized to the size
    vector: removing a singleton and inserting a fresh singleton leaves
    the sizes unchanged, so those events are no-ops for phi_2.  Uniforms
    are pre-drawn in chunks and the loop works on flat lists, which is
    several times faster than the ParticleSystem route.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if burn_in < 0 or burn_in >= steps:
        raise DomainError("need 0 <= burn_in < steps")
    sizes = [int(s) for s in block_sizes]
    if any(s < 1 for s in sizes) or len(sizes) < 1:
        raise DomainError("block sizes must be positive")
    n = sum(sizes)
    if n < 2:
        raise DomainError("need at least two particles")
    assign = []
    for b, s in enumerate(sizes):
        assign.extend([b] * s)
    cnt = sizes[:]
    ssq = sum(c * c for c in cnt)
    total = 0
    chunk = 1 << 15
    refill = chunk - 2
    buf = rng.random(chunk).tolist()
    ptr = 0
    for step in range(steps):
        if ptr >= refill:
            buf = rng.random(chunk).tolist()
            ptr = 0
        i = int(buf[ptr] * n)
        ptr += 1
        b = assign[i]
        cb = cnt[b]
        if cb > 1:
            cnt[b] = cb - 1
            ssq += 1 - 2 * cb
            while True:
                if ptr >= refill:
                    buf = rng.random(chunk).tolist()
                    ptr = 0
                j = int(buf[ptr] * n)
                u = buf[ptr + 1]
                ptr += 2
                if j == i:
                    continue
                t = assign[j]
                ct = cnt[t]
                if u * ct < ct - alpha:
                    assign[i] = t
                    cnt[t] = ct + 1
                    ssq += 2 * ct + 1
                    break
        if step >= burn_in:
            total += ssq
    return total / ((steps - burn_in) * n * n)


@dataclass(frozen=True)
class RescaledPath:
    """Joint observables of one event stream under the two clocks of the
    scaling limit: the cluster count read after ~n^(3/2) t events and
    the ordered frequencies read after ~n^2 t / 2 events."""

    grid: tuple
    k_rescaled: tuple        # K / sqrt(n) at the fast clock
    frequencies: tuple       # top frequencies at the slow clock
    phi2: tuple              # pair probability at the slow clock


def simulate_rescaled(sys0: ParticleSystem, t_grid, params: GGParams,
                      rng: np.random.Generator, top: int = 50,
                      embedding: str = "discrete") -> RescaledPath:
    """Run one event stream and record both rescaled observables on the
    requested time grid.

    ``embedding`` selects how the event index is attached to continuous
    time: "discrete" reads the floor of the rescaled time (one event per
    unit), "exponential" uses unit-rate exponential holding times, i.e.
    a Poisson number of events per unit of rescaled time.
    """
    grid = tuple(sorted(float(t) for t in t_grid))
    if not grid or grid[0] < 0:
        raise DomainError("t_grid must be nonempty and nonnegative")
    n = sys0.n
    # fast clock: floor(n^(3/2) t); slow clock: floor(n^2 t / 2)
    k_targets = [t * n ** 1.5 for t in grid]
    f_targets = [t * n * n / 2.0 for t in grid]
    if embedding == "discrete":
        k_idx = [int(math.floor(u)) for u in k_targets]
        f_idx = [int(math.floor(u)) for u in f_targets]
    elif embedding == "exponential":
        k_idx = _poisson_indices(k_targets, rng)
        f_idx = _poisson_indices(f_targets, rng)
    else:
        raise DomainError(f"unknown embedding {embedding!r}")

    k_set, f_set = set(k_idx), set(f_idx)
    events = sorted(k_set | f_set)
    k_snap = {}
    f_snap = {}
    phi_snap = {}
    current = 0
    sqrt_n = math.sqrt(n)

    def snapshot(idx):
        if idx in k_set:
            k_snap[idx] = sys0.K / sqrt_n
        if idx in f_set:
            f_snap[idx] = sys0.ordered_frequencies(top)
            phi_snap[idx] = sys0.phi(2)

    for idx in events:
        while current < idx:
            moran_step(sys0, params, rng)
            current += 1
        snapshot(idx)
    return RescaledPath(
        grid=grid,
        k_rescaled=tuple(k_snap[i] for i in k_idx),
        frequencies=tuple(f_snap[i] for i in f_idx),
        phi2=tuple(phi_snap[i] for i in f_idx))


def _poisson_indices(targets, rng: np.random.Generator):
    """Monotone event counts N(u) of a unit-rate Poisson process sampled
    at the (sorted) points u in ``targets``."""
    idx = []
    prev_u = 0.0
    count = 0
    for u in targets:
        if u < prev_u:
            raise DomainError("targets must be sorted")
        count += int(rng.poisson(u - prev_u))
        prev_u = u
        idx.append(count)
    return idx
