"""
Tests for snapshot diffing and diff summaries.
"""

import json

import pytest

from meshsdg.evolution import NO_CHANGES, SdgDiff, diff_graphs, diff_to_dict, diff_to_json, summarize_diff
from meshsdg.sdg import EdgeKey, ServiceDependencyGraph

from tests.graphs import graph_from, random_graph, scaled, sid


def key(src, dst, endpoint="/api/v1/endpoint", method="GET"):
    return EdgeKey(sid(src), sid(dst), endpoint, method)


# =============================================================================
# Diffing
# =============================================================================


class TestDiffGraphs:

    @pytest.mark.parametrize("seed", range(50))
    def test_self_diff_is_empty(self, seed):
        g = random_graph(seed)
        d = diff_graphs(g, g)
        assert d.is_empty
        assert summarize_diff(d) == [NO_CHANGES]

    def test_empty_graphs(self):
        assert diff_graphs(ServiceDependencyGraph(), ServiceDependencyGraph()) == SdgDiff()

    def test_added_edge_and_node(self, prototype):
        new = graph_from([
            ("a-service", "b-service", 10, "/api/v1/endpoint"),
            ("a-service", "c-service", 2, "/api/v1/endpoint"),
            ("b-service", "c-service", 2, "/api/v2/endpoint"),
            ("c-service", "d-service", 1),
        ])
        d = diff_graphs(prototype, new)
        assert d.added_nodes == {sid("d-service")}
        assert d.added_edges == {key("c-service", "d-service")}
        assert not d.removed_nodes and not d.removed_edges and not d.weight_changes
        assert sid("d-service") not in d.metric_deltas
        assert d.metric_deltas[sid("c-service")].as_tuple() == (0, 1, 2)

    def test_removed_node_removes_its_edges(self):
        old = graph_from([("a", "b", 1), ("b", "c", 3), ("c", "b", 1)])
        new = graph_from([("a", "b", 1)])
        d = diff_graphs(old, new)
        assert d.removed_nodes == {sid("c")}
        assert d.removed_edges == {key("b", "c"), key("c", "b")}

    def test_weight_change_only(self):
        d = diff_graphs(graph_from([("a", "b", 10)]), graph_from([("a", "b", 15)]))
        assert d.weight_changes == {key("a", "b"): (10, 15)}
        assert not d.metric_deltas

    @pytest.mark.parametrize("seed", range(100))
    def test_antisymmetric(self, seed):
        g1, g2 = random_graph(seed), random_graph(seed + 5000)
        forward, backward = diff_graphs(g1, g2), diff_graphs(g2, g1)
        assert forward.added_nodes == backward.removed_nodes
        assert forward.removed_nodes == backward.added_nodes
        assert forward.added_edges == backward.removed_edges
        assert forward.removed_edges == backward.added_edges
        assert forward.weight_changes == {k: (b, a) for k, (a, b) in backward.weight_changes.items()}
        assert forward.metric_deltas.keys() == backward.metric_deltas.keys()
        for service, delta in forward.metric_deltas.items():
            assert delta.as_tuple() == tuple(-x for x in backward.metric_deltas[service].as_tuple())

    @pytest.mark.parametrize("seed", range(50))
    def test_scaling_changes_only_weights(self, seed):
        g = random_graph(seed)
        d = diff_graphs(g, scaled(g, 2))
        assert not (d.added_nodes or d.removed_nodes or d.added_edges or d.removed_edges)
        assert not d.metric_deltas
        assert len(d.weight_changes) == len(g.weights)


# =============================================================================
# Summary and serialization
# =============================================================================


class TestSummarizeDiff:

    @pytest.fixture
    def diff(self):
        old = graph_from([("a", "b", 10), ("a", "c", 4), ("b", "gone", 1)])
        new = graph_from([("a", "b", 15), ("a", "c", 2), ("b", "c", 1, "/api/v2/x", "POST")])
        return diff_graphs(old, new)

    def test_lines(self, diff):
        assert summarize_diff(diff) == [
            "- node gone.default",
            "+ edge b.default -> c.default POST /api/v2/x",
            "- edge b.default -> gone.default GET /api/v1/endpoint",
            "~ weight a.default -> b.default GET /api/v1/endpoint: 10→15",
            "~ weight a.default -> c.default GET /api/v1/endpoint: 4→2",
        ]

    def test_metric_lines_only_when_acs_moves(self, diff):
        metric_lines = [l for l in summarize_diff(diff) if l.startswith("metrics")]
        assert metric_lines == []
        assert diff.metric_deltas[sid("c")].changed_fields() == ["ais 1→2"]

    def test_relative(self, diff):
        lines = summarize_diff(diff, relative=True)
        assert "~ weight a.default -> b.default GET /api/v1/endpoint: 10→15 (+50.0%)" in lines
        assert "~ weight a.default -> c.default GET /api/v1/endpoint: 4→2 (-50.0%)" in lines

    def test_top_k_largest_swings(self, diff):
        swings = [l for l in summarize_diff(diff, top_k=1) if l.startswith("~")]
        assert swings == ["~ weight a.default -> b.default GET /api/v1/endpoint: 10→15"]

    def test_acs_change_line(self):
        old = graph_from([("a", "b", 1)])
        new = graph_from([("a", "b", 1), ("b", "c", 1)])
        assert summarize_diff(diff_graphs(old, new))[-1] == "metrics b.default ads 0→1, acs 0→1"


class TestDiffJson:

    def test_sorted_document(self):
        old = graph_from([("a", "b", 1), ("a", "z", 1)])
        new = graph_from([("z", "b", 1), ("a", "b", 3), ("c", "b", 2)])
        doc = diff_to_dict(diff_graphs(old, new))
        assert doc["added_nodes"] == ["c.default"]
        assert [e["source"] for e in doc["added_edges"]] == ["c.default", "z.default"]
        assert doc["weight_changes"] == [{**key("a", "b").to_dict(), "old": 1, "new": 3}]
        assert doc["metric_deltas"][0]["service"] == "a.default"

    def test_stable_text(self):
        old, new = random_graph(3), random_graph(4)
        assert diff_to_json(diff_graphs(old, new)) == diff_to_json(diff_graphs(old, new))
        assert json.loads(diff_to_json(diff_graphs(old, new))).keys() == {
            "added_nodes", "removed_nodes", "added_edges", "removed_edges", "weight_changes", "metric_deltas",
        }
