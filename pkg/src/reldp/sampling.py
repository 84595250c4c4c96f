"""Mini-batch construction: Poisson positives and coupled negatives.

Positives are drawn edge-by-edge with independent Bernoulli(gamma) flips.
Negatives are drawn *without replacement across the whole batch*: a single
partial Fisher-Yates pass picks ``b * k_neg`` distinct nodes, and each is
paired with a uniformly chosen endpoint of its tuple's positive edge. The
without-replacement draw guarantees that any fixed node occurs in at most
one negative slot per batch, which is what keeps batch sensitivity small;
it also couples the negative distribution to the realized batch size ``b``.

Draw order (part of the reproducibility contract, stream from
:func:`reldp.rng.make_rng`):

1. ``poisson_positive``: one uniform per edge, in stored edge-list order.
2. ``neg_sample_wor``: one integer draw per shuffle slot ``i`` in
   ``[i, pool_size)`` for ``i = 0 .. b*k_neg - 1``, then one block of
   ``b * k_neg`` endpoint bits in tuple-major order.

Sampled nodes are *not* filtered against true edges, so a "negative" can
coincide with an actual neighbor; the accounting makes no assumption either
way and the chance is negligible on sparse graphs.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from .errors import CapacityError, EnumerationOverflowError


@dataclasses.dataclass(frozen=True)
class EdgeTuple:
    """One positive edge with its attached negative edges.

    Every negative ``(w, x)`` reuses an endpoint ``w`` of the positive edge;
    ``x`` is the sampled node.
    """

    positive: tuple[int, int]
    negatives: tuple[tuple[int, int], ...]

    def __post_init__(self):
        u, v = self.positive
        for w, _ in self.negatives:
            if w != u and w != v:
                raise ValueError(
                    f"negative endpoint {w} not in positive edge {self.positive}")

    def nodes(self) -> frozenset[int]:
        """All node ids appearing anywhere in the tuple."""
        ids = set(self.positive)
        for w, x in self.negatives:
            ids.add(w)
            ids.add(x)
        return frozenset(ids)


@dataclasses.dataclass
class MiniBatch:
    tuples: list[EdgeTuple]
    occurrence: dict[int, int]
    sampled_negative_nodes: list[int]


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    gamma: float
    k_neg: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.k_neg < 1:
            raise ValueError("k_neg must be >= 1")


def build_batch(tuples: list[EdgeTuple],
                sampled_negative_nodes: list[int] | None = None) -> MiniBatch:
    """Assemble a MiniBatch, recomputing the per-node occurrence counts.

    ``occurrence[v]`` counts tuples in which ``v`` appears at all; a node
    showing up several times inside one tuple is still counted once.
    """
    occurrence: dict[int, int] = {}
    for t in tuples:
        for v in t.nodes():
            occurrence[v] = occurrence.get(v, 0) + 1
    if sampled_negative_nodes is None:
        sampled_negative_nodes = [x for t in tuples for _, x in t.negatives]
    return MiniBatch(tuples=list(tuples), occurrence=occurrence,
                     sampled_negative_nodes=list(sampled_negative_nodes))


def poisson_positive(edges: np.ndarray, gamma: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Independently keep each edge with probability ``gamma``.

    Returns the kept edges in their input order. ``gamma=1`` keeps all
    edges with certainty, ``gamma=0`` none.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    mask = rng.random(edges.shape[0]) < gamma
    return edges[mask]


def neg_sample_wor(positives: np.ndarray, k_neg: int, active_nodes: np.ndarray,
                   rng: np.random.Generator) -> MiniBatch:
    """Attach ``k_neg`` negatives per positive, without replacement batch-wide.

    A partial Fisher-Yates shuffle over the active node ids yields
    ``b * k_neg`` distinct nodes; slot ``(i, j)`` of the batch receives the
    ``(i * k_neg + j)``-th of them, paired with a uniformly chosen endpoint
    of positive ``i``. Raises :class:`CapacityError` when the batch needs
    more distinct nodes than there are active ones.
    """
    if k_neg < 1:
        raise ValueError("k_neg must be >= 1")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    b = positives.shape[0]
    count = b * k_neg
    pool = np.asarray(active_nodes, dtype=np.int64).copy()
    pool.sort()  # draw order is defined relative to ascending ids
    if count > pool.size:
        raise CapacityError(
            f"batch wants {count} distinct negatives but only "
            f"{pool.size} active nodes exist")

    for i in range(count):
        j = int(rng.integers(i, pool.size))
        pool[i], pool[j] = pool[j], pool[i]
    sampled = pool[:count]
    bits = rng.integers(0, 2, size=count) if count else np.empty(0, dtype=np.int64)

    tuples = []
    for i in range(b):
        u, v = int(positives[i, 0]), int(positives[i, 1])
        negs = []
        for j in range(k_neg):
            slot = i * k_neg + j
            w = v if bits[slot] else u
            negs.append((w, int(sampled[slot])))
        tuples.append(EdgeTuple(positive=(u, v), negatives=tuple(negs)))
    return build_batch(tuples, sampled_negative_nodes=[int(x) for x in sampled])


def partition_by_node(batch: MiniBatch, node: int
                      ) -> tuple[list[EdgeTuple], list[EdgeTuple], list[EdgeTuple]]:
    """Split tuples by how ``node`` participates.

    Returns ``(in_positive, negative_only, untouched)``: tuples whose
    positive edge contains the node; tuples where it appears only among
    negatives; and tuples that never mention it.
    """
    in_pos, neg_only, untouched = [], [], []
    for t in batch.tuples:
        if node in t.positive:
            in_pos.append(t)
        elif node in t.nodes():
            neg_only.append(t)
        else:
            untouched.append(t)
    return in_pos, neg_only, untouched


def _replace_site(t: EdgeTuple, neg_index: int, replacement: int) -> EdgeTuple:
    negs = list(t.negatives)
    w, _ = negs[neg_index]
    negs[neg_index] = (w, replacement)
    return EdgeTuple(positive=t.positive, negatives=tuple(negs))


def neighboring_batches(batch: MiniBatch, removed_node: int,
                        active_nodes: np.ndarray,
                        cap: int = 10**6) -> list[MiniBatch]:
    """Enumerate every batch reachable by deleting ``removed_node``.

    Tuples whose positive edge contains the node are dropped outright.
    In tuples where it appears only as a sampled negative, each such slot is
    rewritten to every admissible replacement: an active node that is neither
    the removed node nor one of the batch's sampled negatives (so the result
    is still a valid without-replacement draw). The Cartesian product over
    slots, minus assignments that repeat a node, is returned in deterministic
    order. Intended for oracle use on small instances; raises
    :class:`EnumerationOverflowError` past ``cap`` combinations.
    """
    kept: list[tuple[EdgeTuple, list[int]]] = []
    for t in batch.tuples:
        if removed_node in t.positive:
            continue
        sites = [j for j, (_, x) in enumerate(t.negatives) if x == removed_node]
        kept.append((t, sites))

    taken = set(batch.sampled_negative_nodes) | {removed_node}
    candidates = [int(v) for v in np.sort(np.asarray(active_nodes))
                  if int(v) not in taken]

    site_index = [(ti, j) for ti, (t, sites) in enumerate(kept) for j in sites]
    if not site_index:
        return [build_batch([t for t, _ in kept])]

    total = len(candidates) ** len(site_index)
    if total > cap:
        raise EnumerationOverflowError(
            f"{total} neighboring batches exceed cap {cap}")

    out = []
    for assignment in itertools.product(candidates, repeat=len(site_index)):
        if len(set(assignment)) != len(assignment):
            continue  # keep the replacement draw without replacement too
        tuples = [t for t, _ in kept]
        for (ti, j), repl in zip(site_index, assignment):
            tuples[ti] = _replace_site(tuples[ti], j, repl)
        out.append(build_batch(tuples))
    return out


def format_batch(batch: MiniBatch) -> str:
    """Render a batch in the one-line-per-tuple debug form.

    ``+u,v | -w,x -w,x ...`` with tuples in batch order.
    """
    lines = []
    for t in batch.tuples:
        negs = " ".join(f"-{w},{x}" for w, x in t.negatives)
        lines.append(f"+{t.positive[0]},{t.positive[1]} | {negs}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")
