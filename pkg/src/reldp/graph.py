"""Undirected graphs with node features, plus ingestion and degree control.

Edges are stored as a canonical ``(m, 2)`` int64 array with ``u < v`` per row,
lexicographically sorted and duplicate-free. Node ids are dense ``[0, n)``.
Removed nodes are tombstoned through an ``active`` mask rather than renumbered,
so ids stay stable across removals.
"""

from __future__ import annotations

import dataclasses
import io
import os

import numpy as np

from .errors import EdgeListParseError
from .rng import make_rng


def _canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Sort endpoints within rows, then lexsort and deduplicate rows."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return edges.reshape(0, 2)
    edges = np.sort(edges, axis=1)
    return np.unique(edges, axis=0)


@dataclasses.dataclass
class Graph:
    """An undirected graph on dense node ids ``[0, num_nodes)``.

    Parameters
    ----------
    num_nodes : int
        Size of the id space, including inactive (removed) nodes.
    edges : ndarray of shape (m, 2)
        Canonical edge list: ``0 <= u < v < num_nodes`` per row, sorted,
        no duplicates. Edges never touch inactive nodes.
    features : ndarray of shape (num_nodes, d), optional
        Per-node feature rows. Rows of inactive nodes are retained but inert.
    active : ndarray of bool, shape (num_nodes,)
        Tombstone mask; ``False`` marks removed nodes.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray | None = None
    active: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.edges = _canonical_edges(self.edges)
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be nonnegative")
        if self.active is None:
            self.active = np.ones(self.num_nodes, dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != (self.num_nodes,):
                raise ValueError("active mask must have shape (num_nodes,)")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.num_nodes:
                raise ValueError("edge endpoint outside [0, num_nodes)")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if not self.active[self.edges].all():
                raise ValueError("edge incident to an inactive node")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
                raise ValueError(
                    "features must be 2-d with one row per node "
                    f"(got {self.features.shape} for {self.num_nodes} nodes)"
                )

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def active_nodes(self) -> np.ndarray:
        """Ids of nodes that have not been removed, ascending."""
        return np.flatnonzero(self.active)

    def degrees(self) -> np.ndarray:
        """Degree per node id; removed nodes report 0."""
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        if self.edges.size:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg


@dataclasses.dataclass
class DegreeCapReport:
    """Outcome of one degree-capping pass."""

    dropped_count: int
    max_degree_before: int
    max_degree_after: int
    seed: int

    def to_text(self) -> str:
        lines = [f"{k} = {getattr(self, k)}" for k in
                 ("dropped_count", "max_degree_before", "max_degree_after", "seed")]
        return "\n".join(lines) + "\n"


def _parse_edge_line(line: str, lineno: int) -> tuple[int, int]:
    parts = line.split(",") if "," in line else line.split()
    if len(parts) != 2:
        raise EdgeListParseError(f"expected two fields, got {len(parts)}", lineno)
    try:
        u, v = int(parts[0]), int(parts[1])
    except ValueError:
        raise EdgeListParseError(f"non-integer node id in {parts!r}", lineno) from None
    if u < 0 or v < 0:
        raise EdgeListParseError("negative node id", lineno)
    if u == v:
        raise EdgeListParseError(f"self-loop at node {u}", lineno)
    return u, v


def load_edge_list(path: str | os.PathLike, n_hint: int | None = None,
                   remap_ids: bool = False) -> Graph:
    """Read a tab- or comma-separated edge list into a :class:`Graph`.

    Blank lines and lines starting with ``#`` are skipped. Each remaining
    line holds two nonnegative integer ids; self-loops are rejected with
    their line number. The node count is ``max id + 1``, or ``n_hint`` if
    that is larger.

    With ``remap_ids=True`` sparse ids are compacted to dense ``[0, count)``
    in ascending id order and a sidecar ``<path>.idmap`` is written mapping
    ``new_id -> original_id`` one pair per line.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            pairs.append(_parse_edge_line(line, lineno))

    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if remap_ids and edges.size:
        original = np.unique(edges)
        lookup = {int(o): i for i, o in enumerate(original)}
        edges = np.vectorize(lookup.__getitem__)(edges)
        with open(f"{os.fspath(path)}.idmap", "w", encoding="utf-8") as fh:
            for new_id, orig in enumerate(original):
                fh.write(f"{new_id}\t{int(orig)}\n")

    max_id = int(edges.max()) if edges.size else -1
    n = max_id + 1
    if n_hint is not None:
        n = max(n, int(n_hint))
    return Graph(num_nodes=n, edges=edges)


def load_features(path: str | os.PathLike, graph: Graph) -> Graph:
    """Attach a CSV feature matrix (optional header row) to ``graph``.

    The file must have exactly ``graph.num_nodes`` data rows; row ``i``
    becomes the feature vector of node ``i``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EdgeListParseError("empty feature file", 1)
    start = 0
    try:
        [float(tok) for tok in lines[0].split(",")]
    except ValueError:
        start = 1  # header row
    try:
        feats = np.loadtxt(io.StringIO("\n".join(lines[start:])),
                           delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise EdgeListParseError(f"malformed feature row: {exc}") from None
    if feats.shape[0] != graph.num_nodes:
        raise EdgeListParseError(
            f"feature rows ({feats.shape[0]}) != num_nodes ({graph.num_nodes})")
    return Graph(num_nodes=graph.num_nodes, edges=graph.edges,
                 features=feats, active=graph.active)


def cap_degrees(graph: Graph, max_degree: int, seed: int) -> tuple[Graph, DegreeCapReport]:
    """Greedily enforce ``degree <= max_degree`` on a random edge order.

    Edges are visited in a seed-determined permutation; an edge is kept iff
    both endpoints still have residual degree budget. The result therefore
    depends on the seed, but is idempotent: re-capping an already compliant
    graph keeps every edge regardless of the new seed.
    """
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    deg_before = graph.degrees()
    order = make_rng(seed).permutation(graph.num_edges)
    budget = np.zeros(graph.num_nodes, dtype=np.int64)
    keep = np.zeros(graph.num_edges, dtype=bool)
    edges = graph.edges
    for idx in order:
        u, v = edges[idx]
        if budget[u] < max_degree and budget[v] < max_degree:
            keep[idx] = True
            budget[u] += 1
            budget[v] += 1
    capped = Graph(num_nodes=graph.num_nodes, edges=edges[keep],
                   features=graph.features, active=graph.active)
    report = DegreeCapReport(
        dropped_count=int(graph.num_edges - capped.num_edges),
        max_degree_before=int(deg_before.max()) if deg_before.size else 0,
        max_degree_after=int(capped.degrees().max()) if capped.num_nodes else 0,
        seed=int(seed),
    )
    return capped, report


def remove_node(graph: Graph, node: int) -> Graph:
    """Drop ``node`` and its incident edges, keeping all ids in place."""
    if not 0 <= node < graph.num_nodes:
        raise ValueError(f"node {node} outside [0, {graph.num_nodes})")
    active = graph.active.copy()
    active[node] = False
    if graph.edges.size:
        mask = (graph.edges[:, 0] != node) & (graph.edges[:, 1] != node)
        edges = graph.edges[mask]
    else:
        edges = graph.edges
    return Graph(num_nodes=graph.num_nodes, edges=edges,
                 features=graph.features, active=active)
