"""
Named random streams derived from a master seed.

Every stochastic sub-stage draws from its own stream keyed by purpose and
indices (library member, restart, trial start, anneal) so that each one can
be reproduced on its own and parallel execution stays schedule-independent.
"""

from __future__ import annotations

import zlib

import numpy as np


def _seed_sequence(master_seed: int, purpose: str, *indices: int) -> np.random.SeedSequence:
    key = (zlib.crc32(purpose.encode("utf-8")), *(int(i) for i in indices))
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)


def derive_seed(master_seed: int, purpose: str, *indices: int) -> int:
    return int(_seed_sequence(master_seed, purpose, *indices).generate_state(1, dtype=np.uint64)[0])


def derive_rng(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(_seed_sequence(master_seed, purpose, *indices))
