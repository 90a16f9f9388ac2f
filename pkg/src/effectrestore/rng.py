"""Deterministic, splittable random streams for simulation and resampling.

All randomness in this package flows through Philox (a counter-based,
splittable generator) keyed by a SeedSequence over ``(seed, *stream)``.
Substreams are derived by *index*, never by drawing from a parent stream:
``make_rng(seed, k)`` is the k-th independent stream of the run seeded
with ``seed``, so replicate loops can run in any order (or in parallel)
and still reproduce.  The derivation rule, not the bitstream, is the
portable contract: reimplementations matching the rule reproduce the
same distributions, and all tests on random output are distributional.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for the given seed and substream indices."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((int(seed), *(int(s) for s in stream))))
    )
