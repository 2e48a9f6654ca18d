"""
This module provides splittable, counter-based random streams.

Every stream is identified by a base seed and a spawn path. The generator
behind it is a Philox counter-based bit generator keyed by
``SeedSequence(entropy=seed, spawn_key=path)``, so a stream derived by index
is reproducible and independent of every other path.
"""

from typing import Optional, Tuple

import numpy as np

SEED_MASK = (1 << 64) - 1

# Top-level namespaces of the spawn path.
REPLICATES = 0
SERIES = 1
DSMC = 2
CHECKS = 3
COMPARE = 4
MAXWELL = 5
WILD = 6


class RngStream:
    """
    A lazily materialized random stream addressed by (seed, path).
    """

    __slots__ = ("seed", "path", "_generator")

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        self.seed = int(seed) & SEED_MASK
        self.path = tuple(int(p) for p in path)
        self._generator: Optional[np.random.Generator] = None

    @classmethod
    def root(cls, seed: int) -> "RngStream":
        return cls(seed, ())

    @classmethod
    def replicate(cls, seed: int, index: int) -> "RngStream":
        """
        Stream driving replicate ``index`` of a batch started from ``seed``.
        """
        return cls(seed, (REPLICATES, index))

    @classmethod
    def series(cls, seed: int) -> "RngStream":
        return cls(seed, (SERIES,))

    @classmethod
    def dsmc(cls, seed: int) -> "RngStream":
        return cls(seed, (DSMC,))

    @classmethod
    def checks(cls, seed: int) -> "RngStream":
        return cls(seed, (CHECKS,))

    @classmethod
    def compare(cls, seed: int) -> "RngStream":
        return cls(seed, (COMPARE,))

    def derived_seed(self) -> int:
        """A 63-bit seed for a batch whose replicates hang off this stream."""
        return int(self.generator.integers(2**63))

    def spawn(self, index: int) -> "RngStream":
        """
        Derives the child stream number ``index``.

        Args:
            index (int): A nonnegative child index.

        Returns:
            RngStream: The child stream; it never shares draws with its parent.
        """
        if index < 0:
            raise ValueError(f"spawn index must be nonnegative, got {index}")
        return RngStream(self.seed, self.path + (index,))

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._generator = np.random.Generator(np.random.Philox(sequence))
        return self._generator

    @property
    def stream_id(self) -> str:
        return f"{self.seed}:" + "/".join(str(p) for p in self.path)

    def __getstate__(self):
        return {"seed": self.seed, "path": self.path}

    def __setstate__(self, state):
        self.seed = state["seed"]
        self.path = state["path"]
        self._generator = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RngStream):
            return NotImplemented
        return self.seed == other.seed and self.path == other.path

    def __hash__(self) -> int:
        return hash((self.seed, self.path))

    def __repr__(self) -> str:
        return f"RngStream({self.stream_id})"
