"""Graph data structures, assumption validation and text serialization."""

import numpy as np
import pytest

from gnnlab import graph_core as gc
from gnnlab.synth_data import GenConfig, generate_graph, generate_patterns


def toy_graph(extra_edges=()):
    """4 nodes: 0 relevant-positive, 1 its dependent, 2 dependent of 3,
    3 relevant-negative; edges (0,1), (2,3)."""
    feats = np.eye(4)
    labels = np.array([1, 1, -1, -1])
    tags = [gc.TAG_VPLUS, gc.TAG_VNPLUS, gc.TAG_VNMINUS, gc.TAG_VMINUS]
    edges = [(0, 1), (2, 3)] + list(extra_edges)
    adj = [np.sort(np.array([b if a == v else a for a, b in edges
                             if v in (a, b)], dtype=np.int64)) for v in range(4)]
    return gc.StructuredGraph(features=feats, labels=labels, tags=tags, adj=adj)


def test_validate_clean_toy_graph():
    report = gc.validate_assumptions(toy_graph())
    assert report.ok
    assert report.violations == []


def test_validate_forbidden_cross_class_edge():
    report = gc.validate_assumptions(toy_graph(extra_edges=[(0, 2)]))
    assert len(report.violations) == 1
    assert "forbidden" in report.violations[0]


def test_validate_relevant_pair_edge_is_warning_only():
    report = gc.validate_assumptions(toy_graph(extra_edges=[(0, 3)]))
    assert report.ok
    assert len(report.warnings) == 1


def test_validate_balanced_subset_imbalance_zero():
    g = toy_graph()
    sub = gc.LabeledSubset(np.array([0, 1, 2, 3]))
    report = gc.validate_assumptions(g, subset=sub)
    assert report.imbalance == 0


def test_validate_label_tag_mismatch():
    g = toy_graph()
    g.labels[1] = -1
    report = gc.validate_assumptions(g)
    assert any("inconsistent" in v for v in report.violations)


def test_neighborhood_order_self_first_then_ascending():
    g = toy_graph()
    assert list(gc.neighborhood(g, 1)) == [1, 0]
    assert list(gc.neighborhood(g, 0)) == [0, 1]


def test_neighborhood_isolated_node():
    g = gc.StructuredGraph(features=np.zeros((1, 2)), labels=np.array([1]),
                           tags=[gc.TAG_UNKNOWN], adj=[np.empty(0, dtype=np.int64)])
    assert list(gc.neighborhood(g, 0)) == [0]


def test_neighborhood_unknown_id():
    with pytest.raises(IndexError):
        gc.neighborhood(toy_graph(), 7)


def test_neighborhood_symmetry():
    cfg = GenConfig(n=200, degree=4, train_size=10, seed=2)
    g, _, _ = generate_graph(generate_patterns(cfg), cfg)
    for v in range(g.n):
        for u in g.adj[v]:
            assert v in g.adj[int(u)]


def test_subset_rejects_duplicates():
    with pytest.raises(ValueError):
        gc.LabeledSubset(np.array([1, 1, 2]))


def test_roundtrip_single_node_no_edges():
    text = "1 2 0\n0.5 -1\n1 Unknown\nedges 0\n"
    g = gc.load_graph(text)
    assert g.n == 1 and g.d == 2
    assert list(gc.neighborhood(g, 0)) == [0]


def test_roundtrip_generated_graph_identity():
    cfg = GenConfig(n=100, degree=4, train_size=10, seed=7)
    g, _, _ = generate_graph(generate_patterns(cfg), cfg)
    g2 = gc.load_graph(gc.save_graph(g))
    assert np.array_equal(g2.features, g.features)
    assert np.array_equal(g2.labels, g.labels)
    assert g2.tags == g.tags
    assert g2.sigma == g.sigma
    assert all(np.array_equal(a, b) for a, b in zip(g2.adj, g.adj))
    # serialization is exact, so a second pass is byte-identical
    assert gc.save_graph(g2) == gc.save_graph(g)


def test_load_dangling_endpoint():
    text = "2 1 0\n1\n0\n1 Unknown\n-1 Unknown\nedges 1\n0 5\n"
    with pytest.raises(gc.GraphFormatError, match="dangling"):
        gc.load_graph(text)


def test_load_malformed_header():
    with pytest.raises(gc.GraphFormatError, match="header"):
        gc.load_graph("2 1\n")


def test_load_truncated():
    with pytest.raises(gc.GraphFormatError):
        gc.load_graph("3 1 0\n1\n0\n")


def test_load_self_loop_rejected():
    text = "1 1 0\n1\n1 Unknown\nedges 1\n0 0\n"
    with pytest.raises(gc.GraphFormatError, match="self-loop"):
        gc.load_graph(text)


def test_pattern_set_validation():
    P = gc.PatternSet(patterns=np.eye(3), mode="orthogonal")
    P.validate()
    bad = gc.PatternSet(patterns=2 * np.eye(3))
    with pytest.raises(ValueError, match="unit norm"):
        bad.validate()
