"""Uncertain SISO loops and the robustness requirements checked on them.

Polynomials are plain 1-D coefficient arrays, highest degree first, as in
:func:`numpy.polyval`. Most routines also have a batched form that works on
a ``(m, deg + 1)`` array with one polynomial per row; the Monte Carlo code
always goes through the batched path.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .uncertainty import Box, StarSimplex

logger = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "AffineExpr",
    "UncertainPlant",
    "Compensator",
    "PoleRegion",
    "TimeSpec",
    "SimParams",
    "Stability",
    "DStability",
    "TimeDomain",
    "RobustnessProblem",
    "PredicateProblem",
    "closed_loop_char_poly",
    "poly_roots",
    "poly_roots_batch",
    "check_pole_region",
    "step_response_specs",
    "evaluate_predicate",
    "example_plant",
    "example_compensator",
    "example_tetrahedron",
    "example_dstability_problem",
    "example_timespec_problem",
]


class NumericalError(ArithmeticError):
    """A root or simulation result failed its accuracy check."""


# --------------------------------------------------------------------------
# Uncertain plant description
# --------------------------------------------------------------------------

_TERM = re.compile(r"([+-]?)(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\*?(?:d(\d+))?")


@dataclass(frozen=True)
class AffineExpr:
    """``const + sum(slopes[i] * delta[i])`` with zero-based indices."""

    const: float = 0.0
    slopes: tuple[tuple[int, float], ...] = ()

    @classmethod
    def parse(cls, text: str) -> "AffineExpr":
        """Parse e.g. ``"4 + 0.2*d2"`` (``dK`` is the K-th coordinate, 1-based)."""
        s = text.replace(" ", "")
        if not s:
            raise ValueError("empty affine expression")
        const = 0.0
        slopes: dict[int, float] = {}
        for tok in re.split(r"(?<![eE])(?=[+-])", s):
            if not tok:
                continue
            m = _TERM.fullmatch(tok)
            if m is None or (m.group(2) is None and m.group(3) is None):
                raise ValueError(f"cannot parse term {tok!r} in {text!r}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            coef = sign * (float(m.group(2)) if m.group(2) is not None else 1.0)
            if m.group(3) is None:
                const += coef
            else:
                idx = int(m.group(3)) - 1
                if idx < 0:
                    raise ValueError(f"uncertainty indices start at d1, got {tok!r}")
                slopes[idx] = slopes.get(idx, 0.0) + coef
        return cls(const, tuple(sorted(slopes.items())))

    @property
    def n_params(self) -> int:
        return max((i + 1 for i, _ in self.slopes), default=0)

    def __call__(self, deltas: np.ndarray) -> np.ndarray:
        out = np.full(deltas.shape[0], self.const)
        for i, s in self.slopes:
            out = out + s * deltas[:, i]
        return out


def _affine(x) -> AffineExpr:
    if isinstance(x, AffineExpr):
        return x
    if isinstance(x, str):
        return AffineExpr.parse(x)
    return AffineExpr(float(x))


def _polymul_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, da = a.shape
    db = b.shape[1]
    out = np.zeros((m, da + db - 1))
    for j in range(db):
        out[:, j:j + da] += a * b[:, j:j + 1]
    return out


def _polyadd_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(a.shape[1], b.shape[1])
    out = np.zeros((a.shape[0], n))
    out[:, n - a.shape[1]:] += a
    out[:, n - b.shape[1]:] += b
    return out


@dataclass(frozen=True)
class UncertainPlant:
    """Plant ``gain(delta) * prod(s + n_i(delta)) / prod(s + d_j(delta))``.

    Alternatively give ``num_coeffs`` / ``den_coeffs``: one affine expression
    per coefficient, highest degree first. The two forms are exclusive.
    """

    gain: AffineExpr = AffineExpr(1.0)
    num_factors: tuple[AffineExpr, ...] = ()
    den_factors: tuple[AffineExpr, ...] = ()
    num_coeffs: tuple[AffineExpr, ...] = ()
    den_coeffs: tuple[AffineExpr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gain", _affine(self.gain))
        for name in ("num_factors", "den_factors", "num_coeffs", "den_coeffs"):
            object.__setattr__(self, name, tuple(_affine(x) for x in getattr(self, name)))
        factored = bool(self.den_factors)
        tabled = bool(self.den_coeffs)
        if factored == tabled:
            raise ValueError("give exactly one of den_factors or den_coeffs")
        if tabled and not self.num_coeffs:
            raise ValueError("coefficient-table plant needs num_coeffs")
        if factored and self.num_coeffs:
            raise ValueError("num_coeffs cannot be combined with den_factors")

    @property
    def n_params(self) -> int:
        exprs = (self.gain, *self.num_factors, *self.den_factors, *self.num_coeffs, *self.den_coeffs)
        return max(e.n_params for e in exprs)

    @staticmethod
    def _product(factors, deltas):
        out = np.ones((deltas.shape[0], 1))
        for f in factors:
            out = _polymul_rows(out, np.column_stack([np.ones(deltas.shape[0]), f(deltas)]))
        return out

    def num(self, deltas: np.ndarray) -> np.ndarray:
        if self.num_coeffs:
            return np.column_stack([c(deltas) for c in self.num_coeffs])
        return self.gain(deltas)[:, None] * self._product(self.num_factors, deltas)

    def den(self, deltas: np.ndarray) -> np.ndarray:
        if self.den_coeffs:
            return np.column_stack([c(deltas) for c in self.den_coeffs])
        return self._product(self.den_factors, deltas)


@dataclass(frozen=True)
class Compensator:
    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("compensator denominator is zero")
        if num.size > den.size:
            raise ValueError("compensator must be proper")
        object.__setattr__(self, "num", num if num.size else np.zeros(1))
        object.__setattr__(self, "den", den)


# --------------------------------------------------------------------------
# Requirements
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PoleRegion:
    """Union of the open half plane ``Re s < half_plane`` and closed discs."""

    half_plane: float | None = None
    disks: tuple[tuple[complex, float], ...] = ()

    def __post_init__(self):
        disks = tuple((complex(c), float(r)) for c, r in self.disks)
        if self.half_plane is None and not disks:
            raise ValueError("PoleRegion needs a half plane or at least one disk")
        if any(r <= 0 for _, r in disks):
            raise ValueError("disk radii must be positive")
        object.__setattr__(self, "disks", disks)

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ok = np.zeros(z.shape, dtype=bool)
        if self.half_plane is not None:
            ok |= z.real < self.half_plane
        for c, rad in self.disks:
            ok |= np.abs(z - c) <= rad
        return ok


RISE_DEFS = {"10-90": (0.1, 0.9), "0-100": (0.0, 1.0)}


@dataclass(frozen=True)
class SimParams:
    """Fixed-step RK4 settings.

    ``hold``: stop once every response has stayed inside the settling band
    for this long; ``None`` always runs to ``horizon``.
    """

    dt: float = 1e-3
    horizon: float = 10.0
    hold: float | None = 1.0

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > self.dt:
            raise ValueError(f"need 0 < dt < horizon, got dt={self.dt}, horizon={self.horizon}")


@dataclass(frozen=True)
class TimeSpec:
    rise_time_max: float
    settling_time_max: float
    peak_max: float
    rise_def: str = "10-90"
    settle_band: float = 0.02

    def __post_init__(self):
        for name in ("rise_time_max", "settling_time_max", "peak_max", "settle_band"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rise_def not in RISE_DEFS:
            raise ValueError(f"rise_def must be one of {sorted(RISE_DEFS)}, got {self.rise_def!r}")


@dataclass(frozen=True)
class Stability:
    pass


@dataclass(frozen=True)
class DStability:
    region: PoleRegion


@dataclass(frozen=True)
class TimeDomain:
    spec: TimeSpec
    sim: SimParams = SimParams()


# --------------------------------------------------------------------------
# Roots
# --------------------------------------------------------------------------

def _companions(monic_tail: np.ndarray) -> np.ndarray:
    m, d = monic_tail.shape
    comp = np.zeros((m, d, d))
    comp[:, 0, :] = -monic_tail
    if d > 1:
        idx = np.arange(d - 1)
        comp[:, idx + 1, idx] = 1.0
    return comp


def _residual_ok(coeffs: np.ndarray, roots: np.ndarray, tol=1e-8) -> np.ndarray:
    deg = coeffs.shape[1] - 1
    val = np.zeros(roots.shape, dtype=complex)
    for c in coeffs.T:
        val = val * roots + c[:, None]
    scale = np.abs(coeffs).max(axis=1)[:, None] * np.maximum(1.0, np.abs(roots)) ** deg
    return np.all(np.abs(val) <= tol * scale, axis=1)


def poly_roots_batch(coeffs: np.ndarray):
    """Roots of every row of ``coeffs`` (common degree, nonzero leading term).

    Eigenvalues of the companion matrices are computed by LAPACK ``geev``,
    which balances before the QR iteration.

    Returns
    -------
    roots : complex ndarray (m, deg)
    ok : bool ndarray (m,)
        False where the residual check failed.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    lead = coeffs[:, 0]
    if coeffs.shape[1] < 2:
        raise ValueError("polynomial degree must be >= 1")
    bad = (lead == 0) | ~np.all(np.isfinite(coeffs), axis=1)
    safe_lead = np.where(bad, 1.0, lead)
    with np.errstate(all="ignore"):
        tail = coeffs[:, 1:] / safe_lead[:, None]
    bad |= ~np.all(np.isfinite(tail), axis=1)
    tail[bad] = 0.0
    roots = np.linalg.eigvals(_companions(tail))
    roots[bad] = np.nan
    with np.errstate(all="ignore"):
        ok = _residual_ok(coeffs, roots) & ~bad & np.all(np.isfinite(roots), axis=1)
    return roots, ok


def poly_roots(p) -> np.ndarray:
    """All complex roots of ``p`` (highest degree first) with multiplicity.

    Raises
    ------
    ValueError
        If the degree is below 1.
    NumericalError
        If a root fails ``|p(z)| <= 1e-8 max|p_i| max(1, |z|)**deg``.
    """
    p = np.trim_zeros(np.atleast_1d(np.asarray(p, dtype=float)), "f")
    if p.size < 2:
        raise ValueError("polynomial degree must be >= 1")
    roots, ok = poly_roots_batch(p[None, :])
    if not ok[0]:
        raise NumericalError(f"root residual check failed for {p.tolist()}")
    return roots[0]


def check_pole_region(roots, region: PoleRegion) -> bool:
    return bool(np.all(region.contains(np.asarray(roots))))


# --------------------------------------------------------------------------
# Step response
# --------------------------------------------------------------------------

def _rk4_step_matrices(num: np.ndarray, den: np.ndarray, dt: float):
    """Discrete maps of one RK4 step for the controllable canonical form.

    With constant input the classical RK4 update of ``x' = A x + B u`` is
    exactly ``x+ = T(hA) x + h S(hA) B u`` where T and S are the degree-4
    and degree-3 Taylor polynomials of ``exp`` and ``(exp(z) - 1)/z``.
    """
    m, n1 = den.shape
    n = n1 - 1
    a = den / den[:, :1]
    b = np.zeros((m, n1))
    b[:, n1 - num.shape[1]:] = num / den[:, :1]
    d_ff = b[:, 0].copy()
    b = b - d_ff[:, None] * a
    A = np.zeros((m, n, n))
    if n > 1:
        A[:, np.arange(n - 1), np.arange(1, n)] = 1.0
    A[:, n - 1, :] = -a[:, :0:-1]
    C = b[:, :0:-1]
    hA = dt * A
    eye = np.broadcast_to(np.eye(n), hA.shape)
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    T = eye + hA + hA2 / 2 + hA3 / 6 + (hA3 @ hA) / 24
    S = eye + hA / 2 + hA2 / 6 + hA3 / 24
    g = dt * S[:, :, n - 1]
    return T, g, C, d_ff


def _simulate_steps(num, den, sim: SimParams, band: float):
    m = den.shape[0]
    T, g, C, d_ff = _rk4_step_matrices(num, den, sim.dt)
    yss = num[:, -1] / den[:, -1]
    tol = band * np.abs(yss)
    steps = int(round(sim.horizon / sim.dt))
    y = np.empty((steps + 1, m))
    x = np.zeros((m, T.shape[1]))
    y[0] = d_ff
    last_out = np.zeros(m, dtype=np.int64)
    last_out[np.abs(d_ff - yss) <= tol] = -1
    hold_steps = None if sim.hold is None else int(math.ceil(sim.hold / sim.dt))
    check = 100
    k_end = steps
    start = 1
    for k in range(1, steps + 1):
        x = np.einsum("mij,mj->mi", T, x) + g
        y[k] = np.einsum("mi,mi->m", C, x) + d_ff
        if hold_steps is not None and (k % check == 0 or k == steps):
            seg = np.abs(y[start:k + 1] - yss) > tol
            any_out = seg.any(axis=0)
            idx = seg.shape[0] - 1 - np.argmax(seg[::-1], axis=0) + start
            last_out = np.where(any_out, idx, last_out)
            start = k + 1
            if np.all(k - last_out >= hold_steps):
                k_end = k
                break
    return y[:k_end + 1], yss


def _first_crossing(y, t, level):
    """Linear-interpolated first time ``y >= level`` (column-wise), nan if never."""
    hit = y >= level
    found = hit.any(axis=0)
    k = np.argmax(hit, axis=0)
    out = np.full(y.shape[1], np.nan)
    cols = np.arange(y.shape[1])
    at0 = found & (k == 0)
    out[at0] = t[0]
    inner = found & (k > 0)
    kk, cc = k[inner], cols[inner]
    y0, y1 = y[kk - 1, cc], y[kk, cc]
    frac = (level[cc] - y0) / (y1 - y0)
    out[inner] = t[kk - 1] + frac * (t[kk] - t[kk - 1])
    return out


def _specs_from_response(y, yss, sim, band, rise_def):
    steps = y.shape[0]
    t = np.arange(steps) * sim.dt
    m = y.shape[1]
    cols = np.arange(m)
    peak = y.max(axis=0)
    lo_frac, hi_frac = RISE_DEFS[rise_def]
    t_lo = _first_crossing(y, t, lo_frac * yss) if lo_frac > 0 else np.zeros(m)
    t_hi = _first_crossing(y, t, hi_frac * yss)
    rise = t_hi - t_lo

    tol = band * np.abs(yss)
    outside = np.abs(y - yss) > tol
    any_out = outside.any(axis=0)
    last = steps - 1 - np.argmax(outside[::-1], axis=0)
    settling = np.zeros(m)
    inner = any_out & (last < steps - 1)
    k, c = last[inner], cols[inner]
    y0, y1 = y[k, c], y[k + 1, c]
    bound = yss[c] + np.sign(y0 - yss[c]) * tol[c]
    frac = np.clip((bound - y0) / (y1 - y0), 0.0, 1.0)
    settling[inner] = t[k] + frac * sim.dt
    stuck = any_out & (last == steps - 1)
    settling[stuck] = t[-1]
    hold = 0.0 if sim.hold is None else sim.hold
    settled = ~stuck & (t[-1] - settling >= hold - 1e-9)
    return {"peak": peak, "rise_time": rise, "settling_time": settling, "settled": settled}


def _step_specs_batch(num, den, sim: SimParams, band: float, rise_def: str):
    y, yss = _simulate_steps(num, den, sim, band)
    return _specs_from_response(y, yss, sim, band, rise_def)


def step_response_specs(num, den, sim: SimParams | None = None, settle_band: float = 0.02,
                        rise_def: str = "10-90") -> dict:
    """Peak, rise time and settling time of the unit step response of num/den.

    Rise time is measured between the ``rise_def`` fractions of the DC gain
    (``"10-90"`` or ``"0-100"``); settling time is the last exit from the
    ``+-settle_band`` relative band around the DC gain. Crossing instants are
    linearly interpolated between RK4 steps.

    Raises
    ------
    NumericalError
        If ``den`` has a root with non-negative real part.
    """
    sim = sim or SimParams()
    if rise_def not in RISE_DEFS:
        raise ValueError(f"rise_def must be one of {sorted(RISE_DEFS)}")
    num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
    den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
    if num.size > den.size:
        raise ValueError("transfer function must be proper")
    if den.size < 2:
        raise ValueError("denominator degree must be >= 1")
    if np.any(poly_roots(den).real >= 0):
        raise NumericalError("step response requested for a system that is not asymptotically stable")
    out = _step_specs_batch(num[None, :], den[None, :], sim, settle_band, rise_def)
    return {k: (bool(v[0]) if k == "settled" else float(v[0])) for k, v in out.items()}


# --------------------------------------------------------------------------
# Problems
# --------------------------------------------------------------------------

class _Sampled:
    """Mixin: Bernoulli trial stream at radius ``r``."""

    chunk = 256

    def trials(self, r, rng, chunk=None):
        gen = rng.generator()
        chunk = chunk or self.chunk
        while True:
            pts = self.uncertainty.sample(r, gen, chunk)
            yield from self.holds(pts).tolist()


@dataclass(frozen=True)
class RobustnessProblem(_Sampled):
    """Closed loop ``C(s) P(s, delta)`` with unity feedback, plus a requirement."""

    plant: UncertainPlant
    compensator: Compensator
    requirement: Stability | DStability | TimeDomain
    uncertainty: object

    def __post_init__(self):
        if self.plant.n_params > self.uncertainty.dim:
            raise ValueError(
                f"plant uses {self.plant.n_params} uncertain parameters but the set has dim {self.uncertainty.dim}"
            )

    @property
    def eval_chunk(self) -> int:
        # step-response buffers are (steps x chunk) floats
        return 256 if isinstance(self.requirement, TimeDomain) else 8192

    def _deltas(self, deltas):
        d = np.atleast_2d(np.asarray(deltas, dtype=float))
        if d.shape[1] != self.uncertainty.dim:
            raise ValueError(f"delta dimension {d.shape[1]} != {self.uncertainty.dim}")
        return d

    def loop_polys(self, deltas):
        """Batched closed-loop numerator and characteristic polynomial."""
        d = self._deltas(deltas)
        m = d.shape[0]
        nc = np.broadcast_to(self.compensator.num, (m, self.compensator.num.size))
        dc = np.broadcast_to(self.compensator.den, (m, self.compensator.den.size))
        ol_num = _polymul_rows(nc, self.plant.num(d))
        ol_den = _polymul_rows(dc, self.plant.den(d))
        return ol_num, _polyadd_rows(ol_den, ol_num)

    def holds(self, deltas) -> np.ndarray:
        num, char = self.loop_polys(deltas)
        roots, ok = poly_roots_batch(char)
        if not ok.all():
            logger.warning("%d root computations failed the residual check; counted as violations",
                           int((~ok).sum()))
        req = self.requirement
        if isinstance(req, DStability):
            return ok & np.all(req.region.contains(roots), axis=1)
        stable = ok & np.all(roots.real < 0, axis=1)
        if isinstance(req, Stability):
            return stable
        spec, sim = req.spec, req.sim
        result = np.zeros(stable.shape, dtype=bool)
        idx = np.flatnonzero(stable)
        if idx.size:
            with np.errstate(all="ignore"):
                s = _step_specs_batch(num[idx], char[idx], sim, spec.settle_band, spec.rise_def)
            good = (s["settled"] & (s["rise_time"] < spec.rise_time_max)
                    & (s["settling_time"] < spec.settling_time_max) & (s["peak"] < spec.peak_max))
            finite = np.isfinite(s["rise_time"]) & np.isfinite(s["peak"])
            if not finite.all():
                logger.warning("%d step responses gave non-finite specs; counted as violations",
                               int((~finite).sum()))
            result[idx] = good & finite
        return result


@dataclass(frozen=True)
class PredicateProblem(_Sampled):
    """Any set paired with a vectorised predicate ``(m, dim) -> bool (m,)``."""

    uncertainty: object
    predicate: Callable[[np.ndarray], np.ndarray]

    def holds(self, deltas) -> np.ndarray:
        return np.asarray(self.predicate(np.atleast_2d(deltas)), dtype=bool)


def closed_loop_char_poly(problem: RobustnessProblem, delta) -> np.ndarray:
    """``den_C den_P(delta) + num_C num_P(delta)`` for a single point."""
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1:
        raise ValueError("closed_loop_char_poly takes a single uncertainty vector")
    return problem.loop_polys(delta[None, :])[1][0]


def evaluate_predicate(problem, delta) -> bool:
    return bool(problem.holds(np.asarray(delta, dtype=float)[None, :])[0])


# --------------------------------------------------------------------------
# The lead-compensated third-order loop used by the demos
# --------------------------------------------------------------------------

def example_plant() -> UncertainPlant:
    """``800 (1 + 0.1 d1) / (s (s + 4 + 0.2 d2) (s + 6 + 0.3 d3))``."""
    return UncertainPlant(
        gain=AffineExpr(800.0, ((0, 80.0),)),
        den_factors=(AffineExpr(0.0), AffineExpr(4.0, ((1, 0.2),)), AffineExpr(6.0, ((2, 0.3),))),
    )


def example_compensator() -> Compensator:
    return Compensator(np.array([1.0, 2.0]), np.array([1.0, 10.0]))


def example_tetrahedron() -> np.ndarray:
    v = [[0.5 * math.sin((2 * i - 1) * math.pi / 3), 0.5 * math.cos((2 * i - 1) * math.pi / 3),
          -math.sqrt(3) / 2] for i in (1, 2, 3)]
    v.append([0.0, 0.0, 1.0])
    return np.array(v)


def nominal_roots() -> np.ndarray:
    plant, comp = example_plant(), example_compensator()
    char = np.polyadd(np.polymul(comp.den, plant.den(np.zeros((1, 3)))[0]),
                      np.polymul(comp.num, plant.num(np.zeros((1, 3)))[0]))
    return poly_roots(char)


def example_dstability_problem(disk_radius: float = 0.3, half_plane: float = -1.5) -> RobustnessProblem:
    """D-stability over the tetrahedral star-shaped set.

    Poles must satisfy ``Re < -1.5`` or lie within 0.3 of one of the two
    nominal complex poles.
    """
    z = nominal_roots()
    centers = [c for c in z if abs(c.imag) > 1e-9]
    region = PoleRegion(half_plane, tuple((c, disk_radius) for c in centers))
    return RobustnessProblem(example_plant(), example_compensator(), DStability(region),
                             StarSimplex(example_tetrahedron()))


def example_timespec_problem(rise_max=0.25, settling_max=3.5, peak_max=1.7,
                             sim: SimParams | None = None) -> RobustnessProblem:
    """Stability plus step-response limits over the unit box in R^3."""
    spec = TimeSpec(rise_max, settling_max, peak_max)
    return RobustnessProblem(example_plant(), example_compensator(),
                             TimeDomain(spec, sim or SimParams()), Box(3))
