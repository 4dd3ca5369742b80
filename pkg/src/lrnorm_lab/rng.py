"""Deterministic stream derivation on top of numpy's counter-based Philox.

Every stochastic routine in the package receives either an integer seed or a
``numpy.random.SeedSequence``.  Streams for replications and splits are
derived through ``spawn_key`` so that (seedBase, n-index, rep, split) always
maps to the same bit stream regardless of batching or worker scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["seed_sequence", "generator", "child"]


def seed_sequence(seed, *key) -> np.random.SeedSequence:
    """Return a SeedSequence for ``seed`` refined by an integer key path."""
    if isinstance(seed, np.random.SeedSequence):
        if key:
            return np.random.SeedSequence(
                entropy=seed.entropy,
                spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in key),
            )
        return seed
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def child(seed, *key) -> np.random.SeedSequence:
    """Derive a sub-stream without consuming state from ``seed``."""
    return seed_sequence(seed, *key)


def generator(seed, *key) -> np.random.Generator:
    """Philox generator on the stream addressed by ``seed`` and ``key``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))
