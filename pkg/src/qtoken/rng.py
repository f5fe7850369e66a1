"""Seeded, splittable random streams.

Every stochastic routine in the package takes an explicit
:class:`numpy.random.Generator`. Streams are Philox (counter based) and are
derived from a 64-bit master seed plus an integer key path, so a trial's
stream depends only on ``(master_seed, trial_index, ...)`` and never on
execution order.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox generator for a single 64-bit seed."""
    return derive_rng(seed)


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Return the generator addressed by ``master_seed`` and ``keys``.

    Args:
        master_seed: 64-bit master seed.
        *keys: non-negative integers naming the sub-stream, e.g. a trial index.
    """
    seq = np.random.SeedSequence(int(master_seed) & MASK64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 64-bit seed from ``rng`` (for handing to sub-simulations)."""
    return int(rng.integers(0, MASK64, dtype=np.uint64, endpoint=True))
