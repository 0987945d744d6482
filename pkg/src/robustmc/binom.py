"""Binomial confidence limits, Massart tail bounds and sample sizes.

Three interval constructions are provided:

* :func:`clopper_pearson_limits` -- the exact interval, obtained by
  bisection on the binomial CDF.
* :func:`explicit_limits` -- a closed form with guaranteed coverage that
  always contains the Clopper-Pearson interval. This is the one used by the
  sequential algorithms because it costs O(1) per update.
* :func:`normal_approx_limits` -- the textbook Wald interval, kept for
  comparison only. It carries ``rigorous=False``.

The binomial pmf is evaluated with Loader's saddle-point expansion so that
the CDF stays accurate to ~1e-13 absolute even for ``n`` around 10**6.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

__all__ = [
    "Method",
    "TrialCounts",
    "ConfidenceBounds",
    "SampleSizeParams",
    "binomial_pmf",
    "binomial_cdf",
    "clopper_pearson_limits",
    "clopper_pearson_table",
    "explicit_limits",
    "explicit_table",
    "normal_approx_limits",
    "massart_tail_bound",
    "required_sample_size",
    "explicit_theta",
]

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_BISECT_TOL = 1e-12
_BISECT_MAX_STEPS = 200


class Method(enum.Enum):
    CLOPPER_PEARSON = "clopper-pearson"
    EXPLICIT = "explicit"
    NORMAL_APPROX = "normal-approx"


@dataclass(frozen=True)
class TrialCounts:
    """``n`` Bernoulli trials of which ``k`` succeeded."""

    n: int
    k: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.k) != self.k:
            raise ValueError(f"trial counts must be integers, got n={self.n!r}, k={self.k!r}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.k <= self.n:
            raise ValueError(f"k must lie in [0, n={self.n}], got {self.k}")

    @property
    def phat(self) -> float:
        return self.k / self.n


@dataclass(frozen=True)
class ConfidenceBounds:
    lower: float
    upper: float
    delta: float
    method: Method
    rigorous: bool = True

    def contains(self, p: float) -> bool:
        return self.lower <= p <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class SampleSizeParams:
    """Risk ``epsilon``, confidence ``delta`` and accuracy fraction ``alpha``."""

    epsilon: float
    delta: float
    alpha: float

    def __post_init__(self):
        for name in ("epsilon", "delta", "alpha"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie strictly inside (0, 1), got {delta}")


def _as_counts(counts) -> TrialCounts:
    if isinstance(counts, TrialCounts):
        return counts
    n, k = counts
    return TrialCounts(int(n), int(k))


# --------------------------------------------------------------------------
# pmf / cdf
# --------------------------------------------------------------------------

_STIRLERR_SMALL = np.array(
    [0.0] + [math.lgamma(i + 1.0) - (i + 0.5) * math.log(i) + i - _LN_SQRT_2PI for i in range(1, 16)]
)


def _stirlerr(x):
    """log(x!) - log(sqrt(2 pi x) (x/e)**x) for integer-valued x >= 1 (array)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 15
    if np.any(small):
        out[small] = _STIRLERR_SMALL[x[small].astype(np.int64)]
    big = ~small
    if np.any(big):
        xb = x[big]
        nn = xb * xb
        s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
        out[big] = np.where(
            xb > 500, (s0 - s1 / nn) / xb,
            np.where(
                xb > 80, (s0 - (s1 - s2 / nn) / nn) / xb,
                np.where(
                    xb > 35, (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / xb,
                    (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / xb,
                ),
            ),
        )
    return out


def _bd0(x, m):
    """Deviance term x log(x/m) + m - x, stable when x is close to m."""
    x, m = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(m, dtype=float))
    out = np.empty(x.shape)
    close = np.abs(x - m) < 0.1 * (x + m)
    far = ~close
    if np.any(far):
        xf, mf = x[far], m[far]
        with np.errstate(over="ignore", divide="ignore"):
            out[far] = xf * np.log(xf / mf) + mf - xf
    if np.any(close):
        xc, mc = x[close], m[close]
        v = (xc - mc) / (xc + mc)
        s = (xc - mc) * v
        ej = 2.0 * xc * v
        v = v * v
        j = 1
        while True:
            ej = ej * v
            s_new = s + ej / (2 * j + 1)
            if np.array_equal(s_new, s) or j > 1000:
                break
            s = s_new
            j += 1
        out[close] = s_new
    return out


def binomial_pmf(n: int, j, p):
    """Probability of exactly ``j`` successes in ``n`` trials (broadcasts over j, p)."""
    j_arr, p_arr = np.broadcast_arrays(np.asarray(j, dtype=float), np.asarray(p, dtype=float))
    out = np.zeros(j_arr.shape)
    q_arr = 1.0 - p_arr
    valid = (j_arr >= 0) & (j_arr <= n)

    p0 = valid & (p_arr == 0.0)
    out[p0] = (j_arr[p0] == 0).astype(float)
    p1 = valid & (p_arr == 1.0)
    out[p1] = (j_arr[p1] == n).astype(float)
    inner = valid & (p_arr > 0.0) & (p_arr < 1.0)

    lo = inner & (j_arr == 0)
    if np.any(lo):
        pl, ql = p_arr[lo], q_arr[lo]
        out[lo] = np.exp(np.where(pl < 0.1, -_bd0(n, n * ql) - n * pl, n * np.log(ql)))
    hi = inner & (j_arr == n)
    if np.any(hi):
        ph, qh = p_arr[hi], q_arr[hi]
        out[hi] = np.exp(np.where(qh < 0.1, -_bd0(n, n * ph) - n * qh, n * np.log(ph)))
    mid = inner & (j_arr > 0) & (j_arr < n)
    if np.any(mid):
        x, pm, qm = j_arr[mid], p_arr[mid], q_arr[mid]
        lc = (_stirlerr(np.full(x.shape, float(n))) - _stirlerr(x) - _stirlerr(n - x)
              - _bd0(x, n * pm) - _bd0(n - x, n * qm))
        lf = math.log(2.0 * math.pi) + np.log(x) + np.log1p(-x / n)
        out[mid] = np.exp(lc - 0.5 * lf)
    if out.ndim == 0:
        return float(out)
    return out


def binomial_cdf(n: int, k, p):
    """P{K <= k} for K ~ Binomial(n, p).

    ``k`` and ``p`` broadcast against each other; scalar inputs give a float.

    Raises
    ------
    ValueError
        If ``k`` lies outside ``[0, n]`` or ``p`` outside ``[0, 1]``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    k_arr = np.asarray(k)
    p_arr = np.asarray(p, dtype=float)
    if np.any(k_arr != np.floor(k_arr)) or np.any((k_arr < 0) | (k_arr > n)):
        raise ValueError(f"k must be an integer in [0, {n}], got {k!r}")
    if np.any(~((p_arr >= 0.0) & (p_arr <= 1.0))):
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    k_arr = k_arr.astype(np.int64)
    k_b, p_b = np.broadcast_arrays(k_arr, p_arr)
    kmax = int(k_b.max()) if k_b.size else 0

    if k_b.ndim == 0:
        kk, pp = int(k_b), float(p_b)
        if kk == n:
            return 1.0
        # fsum over the lighter tail keeps the absolute error near 1e-15
        if kk < n * pp:
            return min(1.0, math.fsum(binomial_pmf(n, np.arange(kk + 1.0), pp)))
        return max(0.0, 1.0 - math.fsum(binomial_pmf(n, np.arange(kk + 1.0, n + 1.0), pp)))

    j = np.arange(kmax + 1, dtype=float)
    terms = binomial_pmf(n, j[:, None], p_b.ravel()[None, :])
    csum = np.cumsum(terms, axis=0)
    res = csum[k_b.ravel(), np.arange(k_b.size)].reshape(k_b.shape)
    res = np.clip(res, 0.0, 1.0)
    res = np.where(k_b == n, 1.0, res)
    if res.ndim == 0:
        return float(res)
    return res


# --------------------------------------------------------------------------
# Clopper-Pearson
# --------------------------------------------------------------------------

class _PmfColumns:
    """Binomial pmf matrices for a fixed ``n``, one column per ``p``.

    The ``p``-free part of Loader's expansion is computed once; each call
    then costs two ``log1p`` and one ``exp`` per entry. The deviance term is
    written as ``m ((1 + u) log1p(u) - u)`` with ``u = x/m - 1``, whose
    absolute error is about ``eps |x - m|``.
    """

    def __init__(self, n: int, jmax: int):
        self.n = n
        j = np.arange(1.0, min(jmax, n - 1) + 1.0)
        self.j = j
        self.const = (_stirlerr(np.array([float(n)]))[0] - _stirlerr(j) - _stirlerr(n - j)
                      - 0.5 * np.log(2.0 * math.pi * j * (n - j) / n))
        self.jmax = jmax

    @staticmethod
    def _dev(x, m):
        u = (x - m) / m
        return m * ((1.0 + u) * np.log1p(u) - u)

    def __call__(self, p):
        n, j = self.n, self.j[:, None]
        p = np.asarray(p, dtype=float)[None, :]
        q = 1.0 - p
        out = np.empty((self.jmax + 1, p.shape[1]))
        out[0] = np.exp(n * np.log1p(-p[0]))
        if self.j.size:
            out[1:self.j.size + 1] = np.exp(self.const[:, None] - self._dev(j, n * p)
                                            - self._dev(n - j, n * q))
        if self.jmax == n:
            out[n] = np.exp(n * np.log(p[0]))
        return out


def _bisect_decreasing(n, ks, target, lo=None, hi=None):
    """Roots p of binomial_cdf(n, ks, p) = target, elementwise.

    The CDF is strictly decreasing in p for k < n, so bisection keeps the
    root bracketed. ``lo``/``hi`` may narrow the initial bracket; roots that
    end up on a supplied endpoint are solved again on [0, 1], so a wrong
    hint costs time but not correctness.
    """
    ks = np.asarray(ks, dtype=np.int64)
    if lo is None and hi is None:
        return _bisect(n, ks, target, np.zeros(ks.shape), np.ones(ks.shape))
    lo0 = np.zeros(ks.shape) if lo is None else np.array(lo, dtype=float)
    hi0 = np.ones(ks.shape) if hi is None else np.array(hi, dtype=float)
    root = _bisect(n, ks, target, lo0, hi0)
    edge = ((root - lo0 <= _BISECT_TOL) & (lo0 > 0)) | ((hi0 - root <= _BISECT_TOL) & (hi0 < 1))
    if np.any(edge):
        root[edge] = _bisect(n, ks[edge], target, np.zeros(int(edge.sum())), np.ones(int(edge.sum())))
    return root


def _bisect(n, ks, target, lo, hi):
    if ks.size == 0:
        return lo
    kmax = int(ks.max())
    cols = np.arange(ks.size)
    pmf = _PmfColumns(n, kmax) if ks.size > 1 else None
    for _ in range(_BISECT_MAX_STEPS):
        if np.all(hi - lo <= _BISECT_TOL):
            break
        mid = 0.5 * (lo + hi)
        if pmf is None:
            f = np.array([binomial_cdf(n, int(ks[0]), float(mid[0]))])
        else:
            f = np.cumsum(pmf(mid), axis=0)[ks, cols]
        above = f > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    else:
        raise RuntimeError(
            f"Clopper-Pearson bisection did not converge in {_BISECT_MAX_STEPS} steps (n={n})"
        )
    return 0.5 * (lo + hi)


def clopper_pearson_table(n: int, delta: float):
    """Clopper-Pearson lower and upper limits for every k = 0..n.

    Returns
    -------
    lower, upper : ndarray of shape (n + 1,)
    """
    _check_delta(delta)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    ks = np.arange(n + 1)
    lower = np.zeros(n + 1)
    upper = np.ones(n + 1)
    # the explicit limits enclose the exact ones and make a tighter bracket
    elo, ehi = explicit_table(n, delta)
    pad = 1e-9
    lower[1:] = _bisect_decreasing(n, ks[1:] - 1, 1.0 - delta / 2.0,
                                   np.maximum(elo[1:] - pad, 0.0), ehi[1:])
    upper[:-1] = _bisect_decreasing(n, ks[:-1], delta / 2.0,
                                    elo[:-1], np.minimum(ehi[:-1] + pad, 1.0))
    return lower, upper


def clopper_pearson_limits(counts, delta: float) -> ConfidenceBounds:
    """Exact (Clopper-Pearson) two-sided limits at confidence ``1 - delta``."""
    c = _as_counts(counts)
    _check_delta(delta)
    lower = 0.0
    upper = 1.0
    if c.k > 0:
        lower = float(_bisect_decreasing(c.n, np.array([c.k - 1]), 1.0 - delta / 2.0)[0])
    if c.k < c.n:
        upper = float(_bisect_decreasing(c.n, np.array([c.k]), delta / 2.0)[0])
    return ConfidenceBounds(lower, upper, delta, Method.CLOPPER_PEARSON)


# --------------------------------------------------------------------------
# Explicit formula
# --------------------------------------------------------------------------

def explicit_theta(delta: float) -> float:
    return 9.0 / (8.0 * math.log(2.0 / delta))


def _explicit(n, k, theta):
    phat = k / n
    root = math.sqrt(1.0 + 4.0 * theta * k * (1.0 - phat))
    denom = 1.0 + theta * n
    lo = phat + 0.75 * (1.0 - 2.0 * phat - root) / denom
    hi = phat + 0.75 * (1.0 - 2.0 * phat + root) / denom
    return min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)


def explicit_limits(counts, delta: float) -> ConfidenceBounds:
    """Closed-form confidence limits with guaranteed coverage.

    With ``theta = 9 / (8 ln(2/delta))`` and ``phat = k/n`` the limits are::

        phat + 3/4 * (1 - 2 phat -+ sqrt(1 + 4 theta k (1 - phat))) / (1 + theta n)

    clamped to [0, 1]. They bracket the Clopper-Pearson limits for every
    ``(n, k, delta)``.
    """
    c = _as_counts(counts)
    _check_delta(delta)
    lo, hi = _explicit(c.n, c.k, explicit_theta(delta))
    return ConfidenceBounds(lo, hi, delta, Method.EXPLICIT)


def explicit_table(n: int, delta: float):
    """Vectorised :func:`explicit_limits` for every k = 0..n."""
    _check_delta(delta)
    theta = explicit_theta(delta)
    k = np.arange(n + 1, dtype=float)
    phat = k / n
    root = np.sqrt(1.0 + 4.0 * theta * k * (1.0 - phat))
    denom = 1.0 + theta * n
    lo = phat + 0.75 * (1.0 - 2.0 * phat - root) / denom
    hi = phat + 0.75 * (1.0 - 2.0 * phat + root) / denom
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


# --------------------------------------------------------------------------
# Normal approximation
# --------------------------------------------------------------------------

def normal_approx_limits(counts, delta: float) -> ConfidenceBounds:
    """Wald interval ``phat -+ z * sqrt(phat (1 - phat) / n)``.

    Asymptotic only; the result is flagged ``rigorous=False``. The quantile
    comes from :class:`statistics.NormalDist` (Wichura's AS241, ~1e-16).
    """
    c = _as_counts(counts)
    _check_delta(delta)
    z = NormalDist().inv_cdf(1.0 - delta / 2.0)
    phat = c.phat
    half = z * math.sqrt(phat * (1.0 - phat) / c.n)
    lo = min(max(phat - half, 0.0), 1.0)
    hi = min(max(phat + half, 0.0), 1.0)
    return ConfidenceBounds(lo, hi, delta, Method.NORMAL_APPROX, rigorous=False)


# --------------------------------------------------------------------------
# Massart bound and sample size
# --------------------------------------------------------------------------

def massart_tail_bound(n: int, p: float, eps: float, direction: str = "upper") -> float:
    """Massart's bound on a binomial tail.

    ``direction="upper"`` bounds ``P{K/n >= p + eps}``; ``"lower"`` bounds
    ``P{K/n <= p - eps}``. When a denominator factor is not strictly
    positive the trivial bound 1 is returned.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    direction = direction.lower()
    if direction == "upper":
        a, b = p + eps / 3.0, 1.0 - p - eps / 3.0
    elif direction == "lower":
        a, b = p - eps / 3.0, 1.0 - p + eps / 3.0
    else:
        raise ValueError(f"direction must be 'upper' or 'lower', got {direction!r}")
    if a <= 0.0 or b <= 0.0:
        return 1.0
    return math.exp(-n * eps * eps / (2.0 * a * b))


def required_sample_size(params: SampleSizeParams | None = None, *, epsilon=None,
                         delta=None, alpha=None) -> int:
    """Smallest N with ``|K/N - P| < alpha*epsilon`` at confidence ``1 - delta``.

    N is the least integer strictly greater than
    ``2 (1 - eps + alpha eps / 3) (1 - alpha / 3) ln(2/delta) / (alpha**2 eps)``.
    """
    if params is None:
        params = SampleSizeParams(epsilon, delta, alpha)
    e, d, a = params.epsilon, params.delta, params.alpha
    bound = 2.0 * (1.0 - e + a * e / 3.0) * (1.0 - a / 3.0) * math.log(2.0 / d) / (a * a * e)
    return math.floor(bound) + 1
