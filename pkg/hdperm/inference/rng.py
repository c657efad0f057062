"""hdperm.inference.rng

Seed handling. One master seed derives independent streams so that
changing one quantity (e.g. the number of flips) never perturbs the others
(e.g. the splits).
"""

from __future__ import annotations

import attr
import numpy as np

Seed = int | np.random.SeedSequence | None

# spawn-key slots of the master seed
SPLITS_STREAM = 0
SELECTION_STREAM = 1
FLIPS_STREAM = 2
DATA_STREAM = 3


def seed_sequence(seed: Seed, *key: int) -> np.random.SeedSequence:
    """SeedSequence for `seed`, extended by a spawn key path."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )

    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def generator(seed: Seed, *key: int) -> np.random.Generator:
    """numpy Generator for `seed` and spawn key path."""
    return np.random.default_rng(seed_sequence(seed, *key))


@attr.s(frozen=True, auto_attribs=True)
class Streams:
    """Independent seed sequences derived from one master seed."""

    splits: np.random.SeedSequence
    selection: np.random.SeedSequence
    flips: np.random.SeedSequence
    data: np.random.SeedSequence

    @classmethod
    def from_seed(cls, seed: Seed, *key: int) -> "Streams":
        """Derive the streams of `seed` (optionally below a spawn key path)."""
        return cls(
            splits=seed_sequence(seed, *key, SPLITS_STREAM),
            selection=seed_sequence(seed, *key, SELECTION_STREAM),
            flips=seed_sequence(seed, *key, FLIPS_STREAM),
            data=seed_sequence(seed, *key, DATA_STREAM),
        )
