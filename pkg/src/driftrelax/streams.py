"""Counter-based random substreams.

Every random draw in a filter run comes from a generator seeded by
``SeedSequence(master_seed, spawn_key=(filter_tag, purpose, k, n))``:

* ``filter_tag`` tells apart filters sharing a master seed (0 generic, 1 MCMC),
* ``purpose`` is one of the constants below,
* ``k`` is the observation index (1-based) and ``n`` the particle index.

Streams depend only on these integers, never on call order, so serial and
parallel executions produce identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PREDICT = 0
RESAMPLE = 1
REJUVENATE = 2
TRUTH = 3
SAMPLE_PATH = 4

GENERIC_FILTER = 0
MCMC_FILTER = 1

# one generator for a whole batch, or one per batch row
RandomSource = np.random.Generator | Sequence[np.random.Generator]


def standard_normals(rng: RandomSource, shape) -> np.ndarray:
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(shape)
    if len(shape) != 2 or len(rng) != shape[0]:
        raise ValueError("per-row generators need one generator per batch row")
    return np.stack([g.standard_normal(shape[1]) for g in rng])


def uniforms(rng: RandomSource, shape) -> np.ndarray:
    if isinstance(rng, np.random.Generator):
        return rng.random(shape)
    return np.array([g.random() for g in rng])


@dataclass(frozen=True)
class SeedStreams:
    seed: int
    tag: int = 0

    def stream(self, purpose: int, k: int = 0, n: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.tag, purpose, k, n)))

    def per_particle(self, purpose: int, k: int, n_particles: int) -> list[np.random.Generator]:
        return [self.stream(purpose, k, n) for n in range(n_particles)]

    def with_tag(self, tag: int) -> "SeedStreams":
        return SeedStreams(self.seed, tag)
