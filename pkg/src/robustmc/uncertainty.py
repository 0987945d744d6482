"""Uncertainty bounding sets, uniform samplers and the size function.

Every set is a family ``B(r)`` indexed by a radius ``r > 0``. Each class
exposes

* ``dim`` -- number of real coordinates of a sample,
* ``sample(r, gen, size)`` -- ``size`` points drawn uniformly from ``B(r)``,
* ``size_of(x)`` -- the smallest ``r`` with ``x`` in ``B(r)``.

All families here are homogeneous: ``vol(B(s r)) = s**dim vol(B(r))`` and a
uniform point of ``B(r)`` conditioned on ``size_of <= r'`` is uniform on
``B(r')``. Sample reuse in :mod:`robustmc.curve` relies on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

__all__ = [
    "LpBall",
    "Box",
    "ScalarBlock",
    "ScalarBlockSpectral",
    "StarSimplex",
    "sample_uniform",
    "size_of",
    "make_set",
]


def _check_radius(r):
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _rows(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[-1] != dim:
        raise ValueError(f"point dimension {x2.shape[-1]} does not match set dimension {dim}")
    return x2, single


@dataclass(frozen=True)
class LpBall:
    """``{x in R^dim : ||x||_p <= r}`` for ``1 <= p <= inf``."""

    dim: int
    p: float = 2.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.p >= 1:
            raise ValueError(f"norm order p must be >= 1, got {self.p}")

    @property
    def center(self):
        return np.zeros(self.dim)

    def sample(self, r, gen, size=1):
        _check_radius(r)
        if math.isinf(self.p):
            return gen.uniform(-r, r, size=(size, self.dim))
        # generalised Gaussian direction, radial part U**(1/dim)
        p = self.p
        g = gen.gamma(1.0 / p, 1.0, size=(size, self.dim)) ** (1.0 / p)
        g *= gen.choice([-1.0, 1.0], size=(size, self.dim))
        norms = np.linalg.norm(g, ord=p, axis=1)
        radial = gen.random(size) ** (1.0 / self.dim)
        return g * (r * radial / norms)[:, None]

    def size_of(self, x):
        x2, single = _rows(x, self.dim)
        out = np.linalg.norm(x2, ord=self.p, axis=1)
        return float(out[0]) if single else out


def Box(dim: int) -> LpBall:
    """The l-infinity ball."""
    return LpBall(dim, math.inf)


@dataclass(frozen=True)
class ScalarBlock:
    field: str = "real"
    multiplicity: int = 1

    def __post_init__(self):
        if self.field not in ("real", "complex"):
            raise ValueError(f"block field must be 'real' or 'complex', got {self.field!r}")
        if self.multiplicity < 1:
            raise ValueError(f"block multiplicity must be >= 1, got {self.multiplicity}")

    @property
    def width(self):
        return 1 if self.field == "real" else 2


@dataclass(frozen=True)
class ScalarBlockSpectral:
    """Spectral-norm ball over ``blockdiag(q_1 I, ..., q_s I)``.

    A complex scalar occupies two consecutive coordinates ``(re, im)``. For
    scalar blocks the largest singular value equals ``max |q_i|``, so the
    ball is a product of intervals and discs.
    """

    blocks: tuple[ScalarBlock, ...]

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ScalarBlock) else ScalarBlock(*b) for b in self.blocks)
        if not blocks:
            raise ValueError("ScalarBlockSpectral needs at least one block")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self):
        return sum(b.width for b in self.blocks)

    @property
    def center(self):
        return np.zeros(self.dim)

    def sample(self, r, gen, size=1):
        _check_radius(r)
        cols = []
        for b in self.blocks:
            if b.field == "real":
                cols.append(gen.uniform(-r, r, size=(size, 1)))
            else:
                rad = r * np.sqrt(gen.random(size))
                ang = gen.uniform(0.0, 2.0 * math.pi, size=size)
                cols.append(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
        return np.hstack(cols)

    def _moduli(self, x2):
        mods = []
        i = 0
        for b in self.blocks:
            if b.field == "real":
                mods.append(np.abs(x2[:, i]))
            else:
                mods.append(np.hypot(x2[:, i], x2[:, i + 1]))
            i += b.width
        return np.column_stack(mods)

    def size_of(self, x):
        x2, single = _rows(x, self.dim)
        out = self._moduli(x2).max(axis=1)
        return float(out[0]) if single else out

    def block_matrix(self, x) -> np.ndarray:
        """The structured perturbation ``blockdiag(q_1 I_{m_1}, ...)`` for one point."""
        x = np.asarray(x, dtype=float)
        diag = []
        i = 0
        for b in self.blocks:
            q = x[i] if b.field == "real" else complex(x[i], x[i + 1])
            diag.extend([q] * b.multiplicity)
            i += b.width
        return np.diag(np.array(diag, dtype=complex))


@dataclass(frozen=True)
class StarSimplex:
    """Homogeneous star-shaped set built on a simplex.

    ``B(r) = {r (D - c) + c : D in conv(vertices)}`` where ``c`` is the
    vertex centroid. With barycentric coordinates ``lam`` of ``x`` the size
    function has the closed form ``max(0, 1 - (dim + 1) * min(lam))``:
    the contracted point ``(x - c)/r + c`` has barycentric weights
    ``1/(dim+1) + (lam - 1/(dim+1))/r``, which are all non-negative exactly
    when ``r >= 1 - (dim+1) lam_i`` for every ``i``.
    """

    vertices: np.ndarray
    _bary: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] + 1:
            raise ValueError(f"need dim+1 vertices of dimension dim, got shape {v.shape}")
        m = np.vstack([v.T, np.ones(v.shape[0])])
        if np.linalg.matrix_rank(m) < m.shape[0]:
            raise ValueError("simplex vertices are affinely dependent")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_bary", np.linalg.inv(m))

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def center(self):
        return self.vertices.mean(axis=0)

    def barycentric(self, x):
        x2, _ = _rows(x, self.dim)
        aug = np.hstack([x2, np.ones((x2.shape[0], 1))])
        return aug @ self._bary.T

    def sample(self, r, gen, size=1):
        _check_radius(r)
        w = gen.dirichlet(np.ones(self.dim + 1), size=size)
        c = self.center
        return r * (w @ self.vertices - c) + c

    def size_of(self, x):
        x2, single = _rows(x, self.dim)
        lam = self.barycentric(x2)
        out = np.maximum(0.0, 1.0 - (self.dim + 1) * lam.min(axis=1))
        return float(out[0]) if single else out


def sample_uniform(uset, r: float, rng, size: int | None = None):
    """Uniform draw(s) from ``uset`` at radius ``r``.

    ``rng`` is an :class:`RngStream` or a numpy ``Generator``. Passing a
    stream rebuilds its generator, so equal streams give equal draws.
    Returns a vector when ``size`` is None, otherwise a ``(size, dim)`` array.
    """
    gen = _as_generator(rng)
    pts = uset.sample(r, gen, 1 if size is None else size)
    return pts[0] if size is None else pts


def size_of(uset, x):
    """Smallest radius whose set contains ``x`` (vectorised over rows)."""
    return uset.size_of(x)


def make_set(kind: str, **kw):
    """Build a set from a short name, as used by config files."""
    kind = kind.lower()
    if kind == "box":
        return Box(int(kw["dim"]))
    if kind == "lp":
        return LpBall(int(kw["dim"]), float(kw.get("p", 2.0)))
    if kind == "spectral":
        return ScalarBlockSpectral(tuple(kw["blocks"]))
    if kind == "simplex":
        return StarSimplex(np.asarray(kw["vertices"], dtype=float))
    raise ValueError(f"unknown uncertainty set kind {kind!r}")
