"""Seeded random streams.

Every stochastic routine in the package draws from a Philox counter-based
generator created here. Philox gives identical streams across platforms and
numpy versions for a fixed seed, which the reproducibility guarantees
(byte-identical CLI outputs, replayable batches) depend on.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Philox generator for ``seed``.

    ``stream`` selects an independent substream for the same seed; the
    trainer uses stream 0 for degree capping and stream 1 for the
    sampling-then-noise draws of the optimization loop.
    """
    if stream:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    else:
        ss = np.random.SeedSequence(entropy=seed)
    return np.random.Generator(np.random.Philox(ss))
