"""Synthetic stochastic block model graphs with community-coded features.

Each node gets a feature vector equal to its community's center plus
isotropic Gaussian noise, so a dot-product encoder can recover the block
structure from features alone. Edge flips and feature draws share one
seeded stream, making the whole instance a pure function of its arguments.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph
from .rng import make_rng


def sbm_graph(num_nodes: int, num_communities: int, p_in: float, p_out: float,
              feature_dim: int, feature_noise: float, seed: int
              ) -> tuple[Graph, np.ndarray]:
    """Sample an SBM graph; returns it with the community label per node.

    Nodes are split into ``num_communities`` contiguous, near-equal blocks.
    Within-block pairs are wired with probability ``p_in``, cross-block
    pairs with ``p_out``. Community centers are random unit vectors scaled
    to norm 2, pairwise near-orthogonal in high dimension.
    """
    if num_nodes < 2:
        raise ValueError("need at least 2 nodes")
    if not 1 <= num_communities <= num_nodes:
        raise ValueError("num_communities must lie in [1, num_nodes]")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    if feature_noise < 0:
        raise ValueError("feature_noise must be >= 0")

    rng = make_rng(seed, 6)
    labels = (np.arange(num_nodes) * num_communities) // num_nodes

    iu, iv = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[iv]
    probs = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < probs
    edges = np.stack([iu[keep], iv[keep]], axis=1).astype(np.int64)

    centers = rng.normal(size=(num_communities, feature_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= 2.0
    features = centers[labels] + feature_noise * rng.normal(
        size=(num_nodes, feature_dim))

    graph = Graph(num_nodes=num_nodes, edges=edges, features=features)
    return graph, labels


def write_sbm(graph: Graph, labels: np.ndarray, edge_path, feature_path,
              label_path=None) -> None:
    """Write the instance as an edge list, a feature CSV, and labels."""
    with open(edge_path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(feature_path, "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    if label_path is not None:
        with open(label_path, "w", encoding="utf-8") as fh:
            for lab in labels:
                fh.write(f"{int(lab)}\n")
