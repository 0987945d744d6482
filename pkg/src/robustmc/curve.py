"""Robustness degradation curves by backward iteration with sample reuse.

Radii are visited from the largest to the smallest. A fresh sample drawn
uniformly at radius ``r_i`` has size ``l(q) <= r_i`` and is counted at
every grid radius ``r_s >= l(q)``. Conditioned on ``l(q) <= r_s`` such a
point is uniform on ``B(r_s)``, so rows further down the grid start with a
stock of valid trials and only need to top up to ``N``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .binom import ConfidenceBounds, explicit_limits, required_sample_size
from .rng import RngStream

logger = logging.getLogger(__name__)

__all__ = [
    "RadiusGrid",
    "CurvePoint",
    "DegradationCurve",
    "GlobalStrategyResult",
    "sample_reuse_curve",
    "global_strategy",
    "choose_sample_size",
    "separability_diagnostic",
]

_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class RadiusGrid:
    """``l`` equally spaced radii from ``b`` down to ``a``."""

    a: float
    b: float
    l: int

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError(f"need 0 < a < b, got [{self.a}, {self.b}]")
        if self.l < 2:
            raise ValueError(f"need at least 2 radii, got l={self.l}")

    @property
    def radii(self) -> np.ndarray:
        i = np.arange(self.l)
        r = self.b - (self.b - self.a) * i / (self.l - 1)
        r[-1] = self.a
        return r


@dataclass(frozen=True)
class CurvePoint:
    r: float
    m1: int
    m2: int
    bounds: ConfidenceBounds

    @property
    def estimate(self) -> float:
        return self.m2 / self.m1


@dataclass
class DegradationCurve:
    points: list
    generated_samples: int
    N: int
    delta: float
    grid: RadiusGrid
    seed: str = ""
    fresh_per_row: list = field(default_factory=list)

    @property
    def radii(self):
        return np.array([p.r for p in self.points])

    @property
    def estimates(self):
        return np.array([p.estimate for p in self.points])


def _holds_chunked(problem, pts):
    chunk = getattr(problem, "eval_chunk", _EVAL_CHUNK)
    out = np.empty(pts.shape[0], dtype=bool)
    for s in range(0, pts.shape[0], chunk):
        out[s:s + chunk] = problem.holds(pts[s:s + chunk])
    return out


def _propagate(counts, radii, sizes, outcomes):
    """Add each sample to every row whose radius is >= its size.

    ``radii`` is strictly decreasing, so the qualifying rows for a sample are
    a prefix ``0..j``; a histogram of ``j`` summed from the bottom gives the
    per-row increments.
    """
    l = radii.size
    # number of radii >= size, i.e. last qualifying row + 1
    asc = radii[::-1]
    nrows = l - np.searchsorted(asc, sizes, side="left")
    hist_all = np.bincount(nrows, minlength=l + 1)
    hist_ok = np.bincount(nrows[outcomes], minlength=l + 1)
    counts[:, 0] += np.cumsum(hist_all[::-1])[::-1][1:]
    counts[:, 1] += np.cumsum(hist_ok[::-1])[::-1][1:]


def sample_reuse_curve(problem, N: int, delta: float, grid: RadiusGrid,
                       rng: RngStream) -> DegradationCurve:
    """Estimate the proportion at every grid radius with at least ``N`` trials each.

    Row ``i`` is reported as soon as it reaches ``N`` trials, using the
    counts accumulated up to that moment (``m1 >= N``). The estimate is
    ``m2 / m1`` with explicit confidence limits at level ``1 - delta``.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    uset = problem.uncertainty
    radii = grid.radii
    counts = np.zeros((grid.l, 2), dtype=np.int64)
    points = []
    fresh = []
    generated = 0
    for i, r in enumerate(radii):
        need = int(N - counts[i, 0])
        if need > 0:
            try:
                pts = uset.sample(float(r), rng.child(i).generator(), need)
                sizes = np.minimum(uset.size_of(pts), r)
                outcomes = _holds_chunked(problem, pts)
            except Exception as exc:
                raise RuntimeError(f"sampling failed at radius index {i} (r={r:.12g}): {exc}") from exc
            _propagate(counts, radii, sizes, outcomes)
            generated += need
        fresh.append(max(need, 0))
        m1, m2 = int(counts[i, 0]), int(counts[i, 1])
        points.append(CurvePoint(float(r), m1, m2, explicit_limits((m1, m2), delta)))
    logger.info("curve [%.12g, %.12g] l=%d N=%d: %d fresh samples (%.2f%% of N*l)",
                grid.a, grid.b, grid.l, N, generated, 100.0 * generated / (N * grid.l))
    return DegradationCurve(points, generated, N, delta, grid, str(rng), fresh)


@dataclass
class GlobalStrategyResult:
    curves: list
    terminated: bool
    epsilon: float

    @property
    def generated_samples(self) -> int:
        return sum(c.generated_samples for c in self.curves)


def global_strategy(problem, N: int, epsilon: float, delta: float, R_hat: float, l: int,
                    rng: RngStream, max_halvings: int = 20) -> GlobalStrategyResult:
    """Run sample-reuse curves on ``[R/2, R], [R/4, R/2], ...``.

    Stops at the first interval whose lower endpoint saw only successes
    (``m2 == m1``). Gives up with a warning after ``max_halvings`` intervals
    and returns what it has, with ``terminated=False``.
    """
    if not R_hat > 0:
        raise ValueError(f"R_hat must be positive, got {R_hat}")
    b = float(R_hat)
    curves = []
    for h in range(max_halvings):
        a = b / 2
        curve = sample_reuse_curve(problem, N, delta, RadiusGrid(a, b, l), rng.child(h))
        curves.append(curve)
        last = curve.points[-1]
        if last.m2 == last.m1:
            return GlobalStrategyResult(curves, True, epsilon)
        b = a
    warnings.warn(f"global strategy did not terminate within {max_halvings} halvings", RuntimeWarning)
    return GlobalStrategyResult(curves, False, epsilon)


def choose_sample_size(epsilon: float, delta: float, alpha: float) -> int:
    return required_sample_size(epsilon=epsilon, delta=delta, alpha=alpha)


def separability_diagnostic(points, epsilon: float) -> list[tuple[float, float]]:
    """Pairs ``(r_small, r_large)`` that confidently contradict separability.

    A pair is flagged when the upper limit at the smaller radius is below
    ``1 - epsilon`` while the lower limit at the larger radius is above it.
    An empty list is not a proof of separability.
    """
    level = 1.0 - epsilon
    pts = sorted(points, key=lambda p: p.r)
    flagged = []
    for i, lo_pt in enumerate(pts):
        if lo_pt.bounds.upper < level:
            for hi_pt in pts[i + 1:]:
                if hi_pt.r > lo_pt.r and hi_pt.bounds.lower > level:
                    flagged.append((lo_pt.r, hi_pt.r))
    return flagged
