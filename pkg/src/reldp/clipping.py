"""Per-tuple gradient clipping rules.

Frequency-aware clipping shrinks a tuple's gradient by how often its most
shared node occurs in the batch: tuple ``i`` is rescaled to norm at most
``c / (2 * max_freq_i)``, where ``max_freq_i`` is the largest per-node tuple
count among the nodes of tuple ``i``. Summed over the at most ``max_freq``
tuples touching any one node, the contributions of that node stay bounded by
``c / 2``, which is what makes one-node batch differences small. Standard
clipping is the flat per-tuple ``norm <= c`` rule for comparison.
"""

from __future__ import annotations

import numpy as np

from .sampling import MiniBatch


def _check_grads(batch: MiniBatch, grads: list[np.ndarray]) -> list[np.ndarray]:
    if len(grads) != len(batch.tuples):
        raise ValueError(f"{len(grads)} gradients for {len(batch.tuples)} tuples")
    out = []
    for i, g in enumerate(grads):
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"gradient {i} contains NaN or Inf")
        out.append(g)
    return out


def freq_clip(batch: MiniBatch, grads: list[np.ndarray], clip_norm: float) -> np.ndarray:
    """Sum the tuple gradients after frequency-aware clipping.

    Each gradient is scaled by ``1 / max(1, 2 * max_freq_i * ||g_i|| / c}``,
    so its norm never exceeds ``c / (2 * max_freq_i)``. Gradients are summed
    in batch order. ``clip_norm=inf`` disables clipping.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    grads = _check_grads(batch, grads)
    if not grads:
        raise ValueError("empty batch has no gradient dimension; sum it upstream")
    total = np.zeros_like(grads[0])
    for t, g in zip(batch.tuples, grads):
        max_freq = max(batch.occurrence[v] for v in t.nodes())
        scale = max(1.0, 2.0 * max_freq * float(np.linalg.norm(g)) / clip_norm)
        total += g / scale
    return total


def standard_clip(grads: list[np.ndarray], clip_norm: float) -> np.ndarray:
    """Sum the tuple gradients after flat per-tuple norm clipping at ``c``."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    if not grads:
        raise ValueError("empty batch has no gradient dimension; sum it upstream")
    total = None
    for i, g in enumerate(grads):
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"gradient {i} contains NaN or Inf")
        scale = max(1.0, float(np.linalg.norm(g)) / clip_norm)
        total = g / scale if total is None else total + g / scale
    return total
