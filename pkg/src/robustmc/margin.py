"""Sequential comparison of a proportion with ``1 - epsilon`` and the
doubling/bisection search for the probabilistic robustness margin.

A *problem* here is anything with a ``trials(r, rng)`` method returning an
iterator of booleans, one per i.i.d. trial at radius ``r``. Both problem
classes in :mod:`robustmc.systems` qualify; tests plug in synthetic ones.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

from .binom import ConfidenceBounds, Method, explicit_theta, required_sample_size
from .rng import RngStream

logger = logging.getLogger(__name__)

__all__ = [
    "Verdict",
    "ComparisonOutcome",
    "ComparisonRecord",
    "IntervalEstimate",
    "MarginParams",
    "InconclusiveComparison",
    "TrialSourceExhausted",
    "probabilistic_comparison",
    "initial_interval",
    "probabilistic_bisection",
    "estimate_margin",
]


class Verdict(enum.IntEnum):
    ABOVE = 1
    BELOW = -1
    INCONCLUSIVE = 0


class TrialSourceExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class ComparisonOutcome:
    verdict: Verdict
    trials: int
    successes: int
    final_bounds: ConfidenceBounds


@dataclass(frozen=True)
class ComparisonRecord:
    stage: str
    radius: float
    outcome: ComparisonOutcome


@dataclass
class IntervalEstimate:
    """Bracket ``[a, b]`` for the margin; ``b`` is a soft upper bound."""

    a: float
    b: float
    history: list = field(default_factory=list)
    records: list = field(default_factory=list)
    inconclusive_at: list = field(default_factory=list)

    @property
    def soft_upper(self) -> float:
        return self.b

    @property
    def total_trials(self) -> int:
        return sum(rec.outcome.trials for rec in self.records)


class InconclusiveComparison(RuntimeError):
    """A comparison hit its trial cap; ``partial`` holds the search state so far."""

    def __init__(self, radius, partial: IntervalEstimate):
        super().__init__(f"comparison at r={radius:g} hit the trial cap without a verdict")
        self.radius = radius
        self.partial = partial


@dataclass(frozen=True)
class MarginParams:
    """Settings for :func:`initial_interval` and :func:`probabilistic_bisection`.

    ``cap=None`` means 4 * required_sample_size(epsilon, delta, alpha=0.5).
    """

    epsilon: float
    delta: float
    gamma: float = 0.05
    cap: int | None = None
    max_doublings: int = 30
    start_radius: float = 1.0
    batch: int = 1

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.cap is not None and self.cap < 1:
            raise ValueError(f"cap must be >= 1, got {self.cap}")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be >= 1")
        if not self.start_radius > 0:
            raise ValueError("start_radius must be positive")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    @property
    def effective_cap(self) -> int:
        if self.cap is not None:
            return self.cap
        return 4 * required_sample_size(epsilon=self.epsilon, delta=self.delta, alpha=0.5)


def probabilistic_comparison(trial_source: Iterable[bool], epsilon: float, delta: float,
                             cap: int | None = None, batch: int = 1) -> ComparisonOutcome:
    """Decide whether a success probability lies above or below ``1 - epsilon``.

    Trials are consumed one at a time. After each one the explicit confidence
    limits for ``(N, K)`` are recomputed; the run stops with ``ABOVE`` as soon
    as the lower limit exceeds ``1 - epsilon`` and with ``BELOW`` as soon as
    the upper limit falls under it. With a ``cap`` the run gives up with
    ``INCONCLUSIVE`` after ``cap`` trials.

    With ``batch > 1`` the limits are only checked every ``batch`` trials
    (and at the cap), so the stopping count can exceed the one-at-a-time
    value by less than ``batch``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie strictly inside (0, 1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie strictly inside (0, 1), got {delta}")
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    theta = explicit_theta(delta)
    level = 1.0 - epsilon
    n = k = 0
    lo = 0.0
    hi = 1.0
    verdict = Verdict.INCONCLUSIVE
    it = iter(trial_source)
    while cap is None or n < cap:
        try:
            x = next(it)
        except StopIteration:
            raise TrialSourceExhausted(f"trial source ran dry after {n} trials") from None
        n += 1
        k += bool(x)
        if n % batch and n != cap:
            continue
        phat = k / n
        root = math.sqrt(1.0 + 4.0 * theta * k * (1.0 - phat))
        denom = 1.0 + theta * n
        lo = phat + 0.75 * (1.0 - 2.0 * phat - root) / denom
        hi = phat + 0.75 * (1.0 - 2.0 * phat + root) / denom
        if lo > level:
            verdict = Verdict.ABOVE
            break
        if hi < level:
            verdict = Verdict.BELOW
            break
    bounds = ConfidenceBounds(min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0), delta, Method.EXPLICIT)
    return ComparisonOutcome(verdict, n, k, bounds)


def _compare(problem, r, params: MarginParams, rng: RngStream, stage: str, est: IntervalEstimate):
    out = probabilistic_comparison(problem.trials(r, rng), params.epsilon, params.delta,
                                   params.effective_cap, params.batch)
    rec = ComparisonRecord(stage, r, out)
    est.records.append(rec)
    logger.info("%s r=%.12g N=%d K=%d verdict=%s", stage, r, out.trials, out.successes,
                out.verdict.name)
    return out.verdict


def initial_interval(problem, params: MarginParams, rng: RngStream) -> IntervalEstimate:
    """Bracket the margin by doubling or halving ``r`` from ``start_radius``.

    Always returns ``b == 2 a``. Assumes the proportion stays below
    ``1 - epsilon`` above the margin at the radii visited (a weakened form of
    separability); nothing here checks that.

    Raises
    ------
    InconclusiveComparison
        If a comparison reaches the trial cap.
    OverflowError
        After ``max_doublings`` doubling/halving steps without a sign change.
    """
    est = IntervalEstimate(math.nan, math.nan)
    r = params.start_radius
    step = 0
    d1 = _compare(problem, r, params, rng.child(0, step), "initial", est)
    if d1 == Verdict.INCONCLUSIVE:
        raise InconclusiveComparison(r, est)
    d = d1
    while d == d1:
        est.history.append((r, 2 * r) if d1 == Verdict.ABOVE else (r / 2, r))
        step += 1
        if step > params.max_doublings:
            raise OverflowError(f"no sign change after {params.max_doublings} steps (r={r:g})")
        r = 2 * r if d1 == Verdict.ABOVE else r / 2
        d = _compare(problem, r, params, rng.child(0, step), "initial", est)
        if d == Verdict.INCONCLUSIVE:
            raise InconclusiveComparison(r, est)
    if d1 == Verdict.ABOVE:
        est.a, est.b = r / 2, r
    else:
        est.a, est.b = r, 2 * r
    return est


def probabilistic_bisection(problem, interval: IntervalEstimate, params: MarginParams,
                            rng: RngStream) -> IntervalEstimate:
    """Shrink ``[a, b]`` until ``b - a <= gamma * a``.

    At each midpoint a ``BELOW`` verdict moves ``b`` down and ``ABOVE`` moves
    ``a`` up. An inconclusive comparison (trial cap reached) is treated as
    ``BELOW`` and its radius is listed in ``inconclusive_at``; that keeps
    ``b`` a soft upper bound.
    """
    a, b = interval.a, interval.b
    if not 0 < a < b:
        raise ValueError(f"need 0 < a < b, got [{a}, {b}]")
    est = IntervalEstimate(a, b, history=[(a, b)], records=list(interval.records),
                           inconclusive_at=list(interval.inconclusive_at))
    step = 0
    while b - a > params.gamma * a:
        r = 0.5 * (a + b)
        d = _compare(problem, r, params, rng.child(1, step), "bisection", est)
        step += 1
        if d == Verdict.ABOVE:
            a = r
        else:
            if d == Verdict.INCONCLUSIVE:
                logger.warning("inconclusive comparison at r=%.12g; shrinking b conservatively", r)
                est.inconclusive_at.append(r)
            b = r
        est.history.append((a, b))
    est.a, est.b = a, b
    return est


def estimate_margin(problem, params: MarginParams, rng: RngStream) -> tuple[IntervalEstimate, IntervalEstimate]:
    """Initial bracket followed by bisection; returns both stages."""
    init = initial_interval(problem, params, rng)
    return init, probabilistic_bisection(problem, init, params, rng)
