"""Reproducible, splittable random streams.

A stream is named by a 64-bit seed plus a path of integers. The pair is fed
to :class:`numpy.random.SeedSequence` as ``(entropy, spawn_key)`` and drives
a Philox counter-based bit generator, so any substream can be rebuilt on
demand without replaying its siblings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def child(self, *index: int) -> "RngStream":
        """Substream at ``path + index``."""
        return RngStream(self.seed, self.path + tuple(index))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def __str__(self):
        return f"{self.seed}:{'/'.join(map(str, self.path)) or '-'}"
