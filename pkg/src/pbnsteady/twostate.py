"""Two-state Markov chain steady-state estimator.

The observed chain is projected onto a binary process (meta state 1 vs. its
complement), optionally subsampled with lag ``k``, and treated as a
first-order two-state chain with switching probabilities ``alpha`` (0 -> 1)
and ``beta`` (1 -> 0).  Burn-in and sample size follow from closed forms in
``alpha`` and ``beta``; since both are unknown they are re-estimated as the
trajectory grows.

All trajectory bookkeeping inside :func:`estimate` is done on the subsampled
("two-state") scale.  ``M`` and ``N`` are reported on the original chain's
scale, ``M = 1 + (t - 1) k`` and ``N = 1 + (ceil(n) - 1) k``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
from scipy.stats import norm

HEURISTICS = ("none", "pitfall_avoidance", "controlled", "simple")
MAX_DOUBLINGS = 30
MAX_CONTROLLED_ROUNDS = 200


class EstimatorError(RuntimeError):
    """The estimator could not produce an estimate."""


class PeriodicAbstractionError(EstimatorError):
    """alpha + beta == 2: the two-state abstraction alternates deterministically."""


class UndefinedEstimateError(EstimatorError):
    """A meta state was never left, so alpha or beta has no denominator."""


class UnreachableMetaStateError(EstimatorError):
    """The doubling cap was exceeded without observing the required transitions."""


def _quantile(s: float) -> float:
    return float(norm.ppf(0.5 * (1.0 + s)))


# -- closed forms --------------------------------------------------------------


@dataclass(frozen=True)
class TransitionCounts:
    c01: int = 0
    c00: int = 0
    c10: int = 0
    c11: int = 0

    @classmethod
    def from_sequence(cls, z) -> "TransitionCounts":
        z = np.asarray(z, dtype=np.int8)
        if z.size < 2:
            return cls()
        code = 2 * z[:-1] + z[1:]
        c00, c01, c10, c11 = np.bincount(code, minlength=4)
        return cls(c01=int(c01), c00=int(c00), c10=int(c10), c11=int(c11))

    @property
    def total(self) -> int:
        return self.c00 + self.c01 + self.c10 + self.c11

    @property
    def from_zero(self) -> int:
        return self.c00 + self.c01

    @property
    def from_one(self) -> int:
        return self.c10 + self.c11


def estimate_alpha_beta(counts: TransitionCounts) -> tuple[float | None, float | None]:
    """Return ``(alpha_hat, beta_hat)``; ``None`` marks a zero denominator."""
    a = counts.c01 / counts.from_zero if counts.from_zero else None
    b = counts.c10 / counts.from_one if counts.from_one else None
    return a, b


def burn_in_m(alpha: float, beta: float, epsilon: float) -> float:
    """Real-valued burn-in ``m(alpha, beta)`` on the two-state scale.

    Returns 0 when ``alpha + beta == 1`` (the chain is stationary after one
    step).  Raises :class:`PeriodicAbstractionError` when ``alpha + beta == 2``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if alpha < 0 or beta < 0 or alpha > 1 or beta > 1 or alpha + beta <= 0:
        raise ValueError(f"invalid transition probabilities alpha={alpha}, beta={beta}")
    lam = abs(1.0 - alpha - beta)
    if lam == 0.0:
        return 0.0
    if lam == 1.0:
        raise PeriodicAbstractionError(
            "periodic abstraction (alpha + beta = 2); burn-in undefined, increase the lag k"
        )
    return math.log(epsilon * (alpha + beta) / max(alpha, beta)) / math.log(lam)


def asymptotic_variance(alpha: float, beta: float) -> float:
    """CLT variance constant of the sample mean of a stationary two-state chain."""
    s = alpha + beta
    return alpha * beta * (2.0 - s) / s**3


def sample_size_n(alpha: float, beta: float, r: float, s: float) -> float:
    """Real-valued sample size ``n(alpha, beta)`` on the two-state scale."""
    if r <= 0 or not 0 < s < 1:
        raise ValueError("need r > 0 and s in (0, 1)")
    if alpha < 0 or beta < 0 or alpha + beta <= 0:
        raise ValueError(f"invalid transition probabilities alpha={alpha}, beta={beta}")
    if alpha + beta == 2.0:
        warnings.warn("alpha + beta = 2: periodic abstraction, sample size degenerates to 0")
    return asymptotic_variance(alpha, beta) * _quantile(s) ** 2 / r**2


def c_rs(r: float, s: float) -> float:
    return r**2 / _quantile(s) ** 2


def safe_n0_range(r: float, s: float) -> tuple[int, int] | None:
    """Integers ``n0 >= 2`` whose worst-case pilot estimates still ask for ``>= 2 n0``.

    The worst cases are ``n(1/n0, 1/n0) = (n0 - 1) / (4c)`` and
    ``n(1/n0, 1) = (n0 - 1) n0 / (c (1 + n0)^3)`` with ``c = r^2 / z^2``.
    Both conditions define convex-complement sets in ``n0``, so the safe set
    is a single interval.  Returns ``(lower, upper)`` or ``None`` if empty.
    """
    c = c_rs(r, s)

    def safe(n0: int) -> bool:
        # (n0 - 1)/(4c) >= 2 n0   and   (n0 - 1) n0 / (c (1+n0)^3) >= 2 n0
        return (n0 - 1) >= 8.0 * c * n0 and (n0 - 1) >= 2.0 * c * (1.0 + n0) ** 3

    # g(x) = 2c(x+1)^3 - (x-1) is convex on x > -1; its minimiser bounds the search.
    x_star = max(2, int(math.floor(math.sqrt(1.0 / (6.0 * c)) - 1.0)))
    candidates = [x for x in (2, x_star, x_star + 1) if safe(x)]
    if not candidates:
        return None
    inside = candidates[0]

    lo_bad, lo_good = 1, inside  # safe(1) is always False
    while lo_good - lo_bad > 1:
        mid = (lo_bad + lo_good) // 2
        if safe(mid):
            lo_good = mid
        else:
            lo_bad = mid
    hi_good, hi_bad = inside, inside * 2 + 2
    while safe(hi_bad):
        hi_good, hi_bad = hi_bad, hi_bad * 2
    while hi_bad - hi_good > 1:
        mid = (hi_good + hi_bad) // 2
        if safe(mid):
            hi_good = mid
        else:
            hi_bad = mid
    return lo_good, hi_good


def format_range(rng: tuple[int, int] | None) -> str:
    return "∅" if rng is None else f"[{rng[0]},{rng[1]}]"


# -- binary sources ------------------------------------------------------------


class BinarySource(Protocol):
    """Produces the (subsampled) meta-state process one chunk at a time."""

    lag: int
    steps: int  # original-chain steps consumed so far

    def draw(self, count: int) -> np.ndarray: ...


class TwoStateChain:
    """Exact first-order two-state chain, simulated through geometric sojourns.

    Used as a synthetic target for calibration; ``lag`` is fixed to 1.
    ``start=None`` draws the initial state from the stationary distribution.
    """

    lag = 1

    def __init__(self, alpha: float, beta: float, seed: int, start: int | None = 0):
        if not (0 < alpha <= 1 and 0 < beta <= 1):
            raise ValueError("alpha and beta must lie in (0, 1]")
        self.alpha = alpha
        self.beta = beta
        self.rng = np.random.Generator(np.random.PCG64(seed))
        if start is None:
            start = int(self.rng.random() < self.stationary)
        self._next_state = int(start)  # state of the next sojourn to generate
        self._pending = np.zeros(0, dtype=np.int8)
        self.steps = 0

    @property
    def stationary(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def _sojourns(self, points: int) -> np.ndarray:
        mean_len = 0.5 * (1.0 / self.alpha + 1.0 / self.beta)
        pairs = int(points / (2.0 * mean_len)) + 8
        first, second = (self.alpha, self.beta) if self._next_state == 0 else (self.beta, self.alpha)
        lengths = np.empty(2 * pairs, dtype=np.int64)
        lengths[0::2] = self.rng.geometric(first, pairs)
        lengths[1::2] = self.rng.geometric(second, pairs)
        states = np.empty(2 * pairs, dtype=np.int8)
        states[0::2] = self._next_state
        states[1::2] = 1 - self._next_state
        return np.repeat(states, lengths)

    def draw(self, count: int) -> np.ndarray:
        chunks = [self._pending]
        have = self._pending.size
        while have < count:
            block = self._sojourns(count - have)
            chunks.append(block)
            have += block.size
        seq = np.concatenate(chunks)
        self._pending = seq[count:]
        self.steps += count
        return seq[:count]


# -- estimator -----------------------------------------------------------------


@dataclass(frozen=True)
class TwoStateParams:
    r: float
    s: float = 0.95
    epsilon: float = 1e-10
    k: int = 1
    m0: int = 5
    n0: int | None = None
    heuristic: str = "simple"

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be positive")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.k < 1 or self.m0 < 1 or (self.n0 is not None and self.n0 < 2):
            raise ValueError("k, m0 must be >= 1 and n0 >= 2")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"unknown heuristic {self.heuristic!r}; choose from {HEURISTICS}")

    def resolved_n0(self) -> int:
        """Pilot size actually used, after the default and pitfall rules."""
        safe = safe_n0_range(self.r, self.s)
        if self.heuristic == "pitfall_avoidance":
            if safe is None:
                raise EstimatorError(
                    f"no safe initial sample size exists for r={self.r}, s={self.s}"
                )
            if self.n0 is None:
                return safe[1]
            return min(max(self.n0, safe[0]), safe[1])
        if self.n0 is not None:
            return self.n0
        return safe[1] if safe is not None else 1000


@dataclass
class TwoStateRun:
    params: TwoStateParams
    alpha_hat: float
    beta_hat: float
    M: int
    N: int
    total_steps: int
    iterations: int
    q_hat: float
    n0: int
    wall_time: float = 0.0
    trace: list[dict] = field(default_factory=list, repr=False)

    @property
    def burn_in_points(self) -> int:
        return 1 + (self.M - 1) // self.params.k


class _Trajectory:
    """Growing subsampled binary sequence backed by a source."""

    def __init__(self, source: BinarySource, initial: int):
        self.source = source
        self.z = source.draw(initial)

    def __len__(self) -> int:
        return self.z.size

    def extend_to(self, length: int) -> None:
        if length > self.z.size:
            self.z = np.concatenate([self.z, self.source.draw(length - self.z.size)])

    def counts(self, burn: int) -> TransitionCounts:
        return TransitionCounts.from_sequence(self.z[burn:])


def _double_until(traj: _Trajectory, burn: int, post: int, accept) -> int:
    doublings = 0
    while not accept(traj.counts(burn)):
        if doublings == MAX_DOUBLINGS:
            raise UnreachableMetaStateError(
                f"required transitions not observed after {MAX_DOUBLINGS} doublings "
                f"({len(traj)} points); the meta state may be unreachable"
            )
        post *= 2
        traj.extend_to(burn + post)
        doublings += 1
    return post


def _simple_accept(c: TransitionCounts) -> bool:
    return c.c01 >= 3 and c.c10 >= 3


def _nonzero_accept(c: TransitionCounts) -> bool:
    # also need >= 2 source transitions so the unbiased variance is defined
    return c.c01 > 0 and c.c10 > 0 and c.from_zero > 1 and c.from_one > 1


def _controlled_rounds(traj: _Trajectory, burn: int, params: TwoStateParams, trace) -> None:
    z = _quantile(params.s)
    for _ in range(MAX_CONTROLLED_ROUNDS):
        c = traj.counts(burn)
        a, b = estimate_alpha_beta(c)
        # work on the smaller of the two rates; roles swap if the order flips
        if a <= b:
            x, n_src, other = a, c.from_zero, b
        else:
            x, n_src, other = b, c.from_one, a
        var = x * (1.0 - x) * n_src / (n_src - 1)
        n_x_s = var * (z / (x / 2.0)) ** 2
        n_x = (a + b) / other * n_x_s
        used = c.total
        trace.append({"phase": "controlled", "alpha": a, "beta": b, "n_target": n_x, "used": used})
        if n_x <= used:
            return
        traj.extend_to(burn + math.ceil(n_x) + 1)
    raise EstimatorError("controlled initial estimation did not settle")


def estimate(source: BinarySource, params: TwoStateParams) -> TwoStateRun:
    """Run the iterative two-state algorithm on an arbitrary binary source."""
    started = time.perf_counter()
    k = params.k
    n0 = params.resolved_n0()
    burn = params.m0
    traj = _Trajectory(source, params.m0 + n0)
    trace: list[dict] = []

    if params.heuristic == "simple":
        _double_until(traj, burn, n0, _simple_accept)
    elif params.heuristic == "controlled":
        _double_until(traj, burn, n0, _nonzero_accept)
        _controlled_rounds(traj, burn, params, trace)

    iterations = 0
    while True:
        iterations += 1
        counts = traj.counts(burn)
        a, b = estimate_alpha_beta(counts)
        if a is None or b is None:
            which = "alpha" if a is None else "beta"
            raise UndefinedEstimateError(
                f"{which} is undefined after {len(traj)} points: a meta state was never left"
            )
        if a + b == 0:
            raise UndefinedEstimateError("no transitions between meta states observed")
        t = max(1, math.ceil(burn_in_m(a, b, params.epsilon)))
        nn = max(1, math.ceil(sample_size_n(a, b, params.r, params.s)))
        trace.append({"phase": "main", "alpha": a, "beta": b, "t": t, "n": nn, "length": len(traj)})
        burn = t
        if len(traj) >= t + nn:
            break
        traj.extend_to(t + nn)

    post = traj.z[burn:]
    q_hat = float(post.mean()) if post.size else 0.0
    return TwoStateRun(
        params=params,
        alpha_hat=a,
        beta_hat=b,
        M=1 + (t - 1) * k,
        N=1 + (nn - 1) * k,
        total_steps=source.steps,
        iterations=iterations,
        q_hat=q_hat,
        n0=n0,
        wall_time=time.perf_counter() - started,
        trace=trace,
    )


def run(cursor, pred, params: TwoStateParams) -> TwoStateRun:
    """Estimate the steady-state probability that ``pred`` holds on a PBN."""
    p = cursor.model.perturbation_p
    if not 0.0 < p < 1.0:
        raise EstimatorError(
            "the two-state estimator needs perturbation_p in (0, 1); ergodicity is not guaranteed"
        )
    return estimate(cursor.binary_source(pred, params.k), params)


def with_heuristic(params: TwoStateParams, heuristic: str) -> TwoStateParams:
    return replace(params, heuristic=heuristic)
