from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct stream ids are spawned children of the same seed sequence, so
    replicas can run in any order or on any worker and still draw the same
    numbers.
    """

    seed: int
    stream_id: int = 0

    def seed_sequence(self, *path: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *path))

    def generator(self, *path: int) -> np.random.Generator:
        """Fresh generator; ``path`` selects an independent sub-stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*path)))

    def child(self, index: int) -> "RngStream":
        # Mixes the parent id into a new id so children of different parents differ.
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, 0x5EED, index))
        return RngStream(self.seed, int(ss.generate_state(1, np.uint64)[0] >> 1))


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)
