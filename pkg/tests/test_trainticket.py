"""
End-to-end checks on the two TrainTicket release topologies: generated logs
are analyzed and compared with the published per-service metric tables.
"""

import json
from pathlib import Path

import pytest

from meshsdg.antipatterns import (
    DatastoreClassifier,
    check_api_versioning,
    compute_metrics,
    detect_cycles,
    detect_shared_persistency,
    rank_bottlenecks,
    versioned_ratio,
)
from meshsdg.cli import EXIT_OK, main
from meshsdg.evolution import diff_graphs, summarize_diff
from meshsdg.report import emit_cycles_text, emit_metrics_csv
from meshsdg.scaling import build_scaling_plan

from tests.graphs import sid

DATA = Path(__file__).parent / "data"

TRAVEL = sid("ts-travel-service")
SEAT = sid("ts-seat-service")


def expected_csv(version: str) -> str:
    return (DATA / f"metrics-v{version}.csv").read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def v021_analysis(v021_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("v021_out")
    assert main(["analyze", "--logs", str(v021_corpus[1]), "--out-dir", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def v010_analysis(v010_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("v010_out")
    assert main(["analyze", "--logs", str(v010_corpus[1]), "--out-dir", str(out)]) == EXIT_OK
    return out


# =============================================================================
# Metric tables
# =============================================================================


class TestMetricTables:

    def test_v021_metrics_csv(self, v021_analysis):
        assert (v021_analysis / "metrics.csv").read_text(encoding="utf-8") == expected_csv("0.2.1")

    def test_v010_metrics_csv(self, v010_analysis):
        assert (v010_analysis / "metrics.csv").read_text(encoding="utf-8") == expected_csv("0.1.0")

    def test_in_memory_pipeline_agrees(self, v021_graph, v010_graph):
        assert emit_metrics_csv(compute_metrics(v021_graph)) == expected_csv("0.2.1")
        assert emit_metrics_csv(compute_metrics(v010_graph)) == expected_csv("0.1.0")

    def test_sizes(self, v021_graph, v010_graph, v021_corpus):
        assert (len(v021_graph), len({(k.source, k.destination) for k in v021_graph.weights})) == (47, 70)
        assert (len(v010_graph), len({(k.source, k.destination) for k in v010_graph.weights})) == (45, 68)
        assert v021_graph.total_requests == v021_corpus[2].total == 6735

    def test_graph_matches_ledger(self, v021_graph, v021_corpus):
        assert v021_graph == v021_corpus[2].expected_graph()

    def test_rerun_is_byte_identical(self, v021_corpus, v021_analysis, tmp_path):
        again = tmp_path / "again"
        assert main(["analyze", "--logs", str(v021_corpus[1]), "--out-dir", str(again)]) == EXIT_OK
        for name in ("sdg.dot", "metrics.csv", "report.json", "summary.txt"):
            assert (again / name).read_bytes() == (v021_analysis / name).read_bytes()


# =============================================================================
# Anti-patterns
# =============================================================================


class TestAntiPatterns:

    @pytest.mark.parametrize("graph_fixture", ["v021_graph", "v010_graph"])
    def test_single_travel_seat_cycle(self, request, graph_fixture):
        report = detect_cycles(request.getfixturevalue(graph_fixture))
        assert report.components == ((SEAT, TRAVEL),)
        assert report.siy == 1
        assert report.direct_pairs == 1
        assert report.self_loops == ()

    def test_cycle_in_outputs(self, v021_analysis, v021_graph):
        report = json.loads((v021_analysis / "report.json").read_text(encoding="utf-8"))
        assert report["cycles"]["components"] == [["ts-seat-service.default", "ts-travel-service.default"]]
        line = "cycle: ts-seat-service.default <-> ts-travel-service.default"
        assert emit_cycles_text(detect_cycles(v021_graph)) == [line]
        summary = (v021_analysis / "summary.txt").read_text(encoding="utf-8").splitlines()
        assert summary[:2] == ["# cycles", line]

    def test_bottleneck_ranking(self, v021_graph):
        ranked = rank_bottlenecks(compute_metrics(v021_graph))
        assert ranked[:2] == [(TRAVEL, 30), (sid("ts-food-service"), 10)]
        assert [acs for _, acs in ranked[2:5]] == [9, 9, 8]

    @pytest.mark.parametrize("graph_fixture", ["v021_graph", "v010_graph"])
    def test_no_shared_persistency(self, request, graph_fixture):
        assert detect_shared_persistency(request.getfixturevalue(graph_fixture)) == []

    @pytest.mark.parametrize("graph_fixture", ["v021_graph", "v010_graph"])
    def test_fully_versioned(self, request, graph_fixture):
        findings = check_api_versioning(request.getfixturevalue(graph_fixture))
        assert findings
        assert versioned_ratio(findings) == 1.0

    def test_only_datastore_calls_unversioned(self, v021_graph):
        findings = check_api_versioning(v021_graph, classifier=False)
        unversioned = {f.destination for f in findings if not f.versioned}
        assert (len(findings), sum(not f.versioned for f in findings)) == (70, 18)
        assert all(DatastoreClassifier().is_datastore(s) for s in unversioned)


# =============================================================================
# Scaling and evolution
# =============================================================================


class TestScalingPlan:

    def test_order_first_travel_detangled(self, v021_graph):
        plan = build_scaling_plan(v021_graph, compute_metrics(v021_graph))
        assert plan.services()[:4] == [
            sid("ts-order-service"), TRAVEL, sid("ts-station-service"), sid("ts-user-service"),
        ]
        order, travel = plan.entries[:2]
        assert (order.ais, order.inbound_weight, order.detangle_first) == (9, 965, False)
        assert (travel.ais, travel.inbound_weight, travel.detangle_first) == (5, 635, True)
        assert [e.service for e in plan if e.detangle_first] == [TRAVEL]
        assert not any(DatastoreClassifier().is_datastore(s) for s in plan.services())

    def test_scale_plan_command(self, v021_analysis, capsys):
        assert main(["scale-plan", str(v021_analysis / "report.json"), "--top-k", "2"]) == EXIT_OK
        rows = capsys.readouterr().out.splitlines()[1:]
        assert [r.split()[1] for r in rows] == ["ts-order-service.default", "ts-travel-service.default"]


class TestEvolution:

    def test_release_diff(self, v010_graph, v021_graph):
        d = diff_graphs(v010_graph, v021_graph)
        assert {s.service for s in d.added_nodes} == {
            "ts-consign-mongo", "ts-inside-payment-mongo", "ts-payment-mongo", "ts-route-mongo",
        }
        assert {s.service for s in d.removed_nodes} == {"ts-assurance-mongo", "ts-station-mongo"}
        assert d.metric_deltas[sid("ts-payment-service")].changed_fields() == ["ads 0→1", "acs 0→1"]
        assert "metrics ts-payment-service.default ads 0→1, acs 0→1" in summarize_diff(d)

    def test_diff_command(self, v010_analysis, v021_analysis, capsys):
        old, new = v010_analysis / "report.json", v021_analysis / "report.json"
        assert main(["diff", str(old), str(new)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert "+ node ts-payment-mongo.default" in lines
        assert "- node ts-station-mongo.default" in lines
        assert "metrics ts-payment-service.default ads 0→1, acs 0→1" in lines
