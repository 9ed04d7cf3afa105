"""Reproducible, splittable random streams.

A stream is named by ``(seed, run, replica, branch)``.  The name is hashed
through :class:`numpy.random.SeedSequence` into a Philox key, so two streams
with the same name yield the same draws and streams with different names are
independent for all practical purposes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    run: int = 0
    replica: int = 0
    branch: int = 0

    def __post_init__(self):
        for name in ("seed", "run", "replica", "branch"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.seed, self.run, self.replica, self.branch)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.run, self.replica, self.branch)
        )
        return np.random.Generator(np.random.Philox(ss))

    def with_branch(self, branch: int) -> "RngStream":
        return replace(self, branch=branch)

    def with_replica(self, replica: int) -> "RngStream":
        return replace(self, replica=replica)

    def with_run(self, run: int) -> "RngStream":
        return replace(self, run=run)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
