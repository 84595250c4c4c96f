"""Graph container, edge-list IO, and degree capping."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reldp.errors import EdgeListParseError
from reldp.graph import (Graph, cap_degrees, load_edge_list, load_features,
                         remove_node)


class TestGraph:
    def test_edges_canonicalized(self):
        g = Graph(num_nodes=4, edges=np.array([[2, 0], [0, 2], [3, 1]]))
        assert g.edges.tolist() == [[0, 2], [1, 3]]

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            Graph(num_nodes=3, edges=np.array([[1, 1]]))

    def test_out_of_range_id_rejected(self):
        with pytest.raises(ValueError):
            Graph(num_nodes=3, edges=np.array([[0, 3]]))

    def test_degrees(self):
        g = Graph(num_nodes=4, edges=np.array([[0, 1], [0, 2], [0, 3]]))
        assert g.degrees().tolist() == [3, 1, 1, 1]

    def test_feature_shape_checked(self):
        with pytest.raises(ValueError, match="feature"):
            Graph(num_nodes=3, edges=np.array([[0, 1]]),
                  features=np.zeros((2, 4)))

    def test_remove_node_tombstones(self):
        g = Graph(num_nodes=4, edges=np.array([[0, 1], [1, 2], [2, 3]]))
        g2 = remove_node(g, 1)
        assert g2.active_nodes().tolist() == [0, 2, 3]
        # original is untouched
        assert g.active_nodes().tolist() == [0, 1, 2, 3]


class TestLoadEdgeList:
    def test_mixed_separators_and_comments(self, tmp_path):
        p = tmp_path / "edges.txt"
        p.write_text("# header\n0 1\n\n2,3\n  1\t3\n")
        g = load_edge_list(p)
        assert g.num_nodes == 4
        assert g.edges.tolist() == [[0, 1], [1, 3], [2, 3]]

    def test_parse_error_carries_line_number(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 1\n1 2 3\n")
        with pytest.raises(EdgeListParseError, match="line 2"):
            load_edge_list(p)

    def test_self_loop_line_number(self, tmp_path):
        p = tmp_path / "loop.txt"
        p.write_text("# c\n4 4\n")
        with pytest.raises(EdgeListParseError, match="line 2"):
            load_edge_list(p)

    def test_n_hint_extends(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1\n")
        assert load_edge_list(p, n_hint=10).num_nodes == 10

    def test_remap_writes_sidecar(self, tmp_path):
        p = tmp_path / "sparse.txt"
        p.write_text("100 7\n7 42\n")
        g = load_edge_list(p, remap_ids=True)
        assert g.num_nodes == 3
        assert g.edges.tolist() == [[0, 1], [0, 2]]
        sidecar = (tmp_path / "sparse.txt.idmap").read_text().splitlines()
        assert sidecar == ["0\t7", "1\t42", "2\t100"]


class TestLoadFeatures:
    def test_header_sniffed(self, tmp_path):
        e = tmp_path / "e.txt"
        e.write_text("0 1\n")
        f = tmp_path / "f.csv"
        f.write_text("a,b\n1.0,2.0\n3.0,4.0\n")
        g = load_features(f, load_edge_list(e))
        assert_allclose(g.features, [[1.0, 2.0], [3.0, 4.0]])

    def test_row_count_mismatch(self, tmp_path):
        e = tmp_path / "e.txt"
        e.write_text("0 1\n")
        f = tmp_path / "f.csv"
        f.write_text("1.0,2.0\n")
        with pytest.raises(EdgeListParseError, match="rows"):
            load_features(f, load_edge_list(e))


class TestCapDegrees:
    def star(self, leaves=8):
        edges = np.array([[0, i] for i in range(1, leaves + 1)])
        return Graph(num_nodes=leaves + 1, edges=edges)

    def test_cap_enforced(self):
        capped, rep = cap_degrees(self.star(), 3, seed=0)
        assert capped.degrees().max() == 3
        assert rep.max_degree_before == 8
        assert rep.max_degree_after == 3
        assert rep.dropped_count == 5

    def test_kept_edges_are_a_subset(self):
        g = self.star()
        capped, _ = cap_degrees(g, 3, seed=1)
        orig = {tuple(e) for e in g.edges.tolist()}
        assert all(tuple(e) in orig for e in capped.edges.tolist())

    def test_same_seed_same_result(self):
        a, _ = cap_degrees(self.star(), 2, seed=7)
        b, _ = cap_degrees(self.star(), 2, seed=7)
        assert a.edges.tolist() == b.edges.tolist()

    def test_seed_changes_selection(self):
        kept = {tuple(map(tuple, cap_degrees(self.star(), 2, s)[0].edges.tolist()))
                for s in range(12)}
        assert len(kept) > 1

    def test_under_cap_graph_unchanged(self):
        g = Graph(num_nodes=4, edges=np.array([[0, 1], [2, 3]]))
        capped, rep = cap_degrees(g, 5, seed=0)
        assert capped.edges.tolist() == g.edges.tolist()
        assert rep.dropped_count == 0

    def test_both_endpoints_respect_cap(self):
        # 4-clique capped at 1 keeps a matching at most
        edges = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
        g = Graph(num_nodes=4, edges=edges)
        capped, _ = cap_degrees(g, 1, seed=3)
        assert capped.degrees().max() <= 1
