"""
Tests for access-log parsing, direction classification and service identity.
"""

import json
from datetime import datetime, timedelta, timezone

import pytest

from meshsdg.access_log import (
    AccessLogEntry,
    Direction,
    LogSource,
    ManifestEntry,
    ParseFailure,
    ServiceId,
    classify_direction,
    destination_service,
    discover_sources,
    filter_window,
    format_timestamp,
    normalize_path,
    parse_file,
    parse_line,
    parse_timestamp,
    read_manifest,
)
from meshsdg.errors import InputError, InvalidServiceId, InvalidWindow
from meshsdg.loggen import CallSpec, TopologySpec, generate_logs

from tests.graphs import T0, line, outbound_entry, record, sid, write_log


@pytest.fixture
def source() -> LogSource:
    return LogSource(sid("a-service"), "a-service.default.log")


# =============================================================================
# Service identity
# =============================================================================


class TestServiceId:

    @pytest.mark.parametrize("text, expected", [
        ("b-service.default.svc.cluster.local", "b-service.default"),
        ("b-service.default", "b-service.default"),
        ("b-service:12345", "b-service.default"),
        ("outbound|12345||b-service.default.svc.cluster.local", "b-service.default"),
        ("b-service.prod.svc", "b-service.prod"),
    ])
    def test_parse_normalizes(self, text, expected):
        assert ServiceId.parse(text) == ServiceId(expected)

    def test_parse_uses_default_namespace(self):
        assert ServiceId.parse("orders", default_namespace="shop").name == "orders.shop"

    def test_parts(self):
        s = ServiceId("ts-order-service.default")
        assert s.service == "ts-order-service"
        assert s.namespace == "default"
        assert str(s) == "ts-order-service.default"

    @pytest.mark.parametrize("bad", ["", "a.b.c", "no namespace", "a/b.default"])
    def test_invalid_rejected(self, bad):
        with pytest.raises(InvalidServiceId):
            ServiceId(bad)

    def test_ordering_is_lexicographic(self):
        assert sorted([sid("b"), sid("a"), sid("c")]) == [sid("a"), sid("b"), sid("c")]


# =============================================================================
# Line parsing
# =============================================================================


class TestParseLine:

    def test_outbound_record(self, source):
        entry = parse_line(line(), source, 1)
        assert isinstance(entry, AccessLogEntry)
        assert entry.start_time == datetime(2022, 5, 26, 6, 22, 2, 661000, tzinfo=timezone.utc)
        assert entry.method == "GET"
        assert entry.path == "/api/v1/endpoint/"
        assert entry.response_code == 200
        assert entry.duration_ms == 5
        assert entry.bytes_sent == 7
        assert entry.route_name == "default"
        assert classify_direction(entry) is Direction.OUTBOUND
        assert destination_service(entry) == sid("b-service")

    def test_inbound_record(self, source):
        entry = parse_line(line(upstream_cluster="inbound|80||", authority="a-service:80"), source)
        assert classify_direction(entry) is Direction.INBOUND
        assert destination_service(entry) is None

    def test_unknown_direction(self, source):
        entry = parse_line(line(upstream_cluster="PassthroughCluster"), source)
        assert classify_direction(entry) is Direction.UNKNOWN
        assert destination_service(entry) is None

    def test_unknown_keys_ignored(self, source):
        assert isinstance(parse_line(line(custom_tag="x", trace_id="abc"), source), AccessLogEntry)

    def test_dash_numeric_fields_default_to_zero(self, source):
        entry = parse_line(line(duration="-", bytes_sent=None), source)
        assert entry.duration_ms == 0
        assert entry.bytes_sent == 0

    def test_destination_falls_back_to_authority(self, source):
        entry = parse_line(line(upstream_cluster="outbound|80||", authority="c-service:80"), source)
        assert destination_service(entry) == sid("c-service")

    def test_destination_uses_source_namespace_default(self, source):
        entry = parse_line(line(upstream_cluster="outbound|80||", authority="c-service:80"), source)
        assert destination_service(entry, "prod") == ServiceId("c-service.prod")

    @pytest.mark.parametrize("text, reason", [
        ("", "empty"),
        ("not json at all", "not JSON"),
        ("[1, 2, 3]", "not a JSON object"),
        (json.dumps({k: v for k, v in record().items() if k != "upstream_cluster"}), "upstream_cluster"),
        (line(start_time="now"), "start_time"),
        (line(start_time="2022"), "start_time"),
        (line(start_time="5/26/2022"), "start_time"),
        (line(bytes_sent=-1), "numeric"),
        (line(duration="fast"), "numeric"),
        (line(response_code=True), "numeric"),
        (line(response_code=700), "outside"),
    ])
    def test_failures(self, source, text, reason):
        result = parse_line(text, source, 12)
        assert isinstance(result, ParseFailure)
        assert reason in result.reason
        assert result.line_number == 12
        assert result.file == source.file

    def test_record_round_trip(self, source):
        entry = parse_line(line(), source)
        assert parse_line(entry.to_json(), source) == entry

    def test_generated_records_round_trip(self, v010_corpus):
        _, logs, _ = v010_corpus
        checked = 0
        for src in discover_sources(logs):
            with open(src.file, encoding="utf-8") as f:
                for number, raw in enumerate(f, 1):
                    raw = raw.rstrip("\n")
                    entry = parse_line(raw, src, number)
                    assert isinstance(entry, AccessLogEntry)
                    assert entry.to_json() == raw
                    assert parse_line(entry.to_json(), src, number) == entry
                    checked += 1
        assert checked > 0

    def test_to_record_uses_sidecar_keys(self):
        rec = outbound_entry(sid("b-service")).to_record()
        assert rec["duration"] == 5
        assert rec["start_time"] == "2022-05-26T06:22:02.661Z"
        assert "duration_ms" not in rec


class TestTimestamps:

    def test_offset_converted_to_utc(self):
        assert parse_timestamp("2022-05-26T08:22:02.661+02:00") == T0

    def test_naive_is_utc(self):
        assert parse_timestamp("2022-05-26T06:22:02.661") == T0

    @pytest.mark.parametrize("value", [
        None, "", "now", "today", 12345, "garbage",
        "2022", "5/26/2022", "2022-05-26", "26/05/2022 06:22", "2022-05-26T06:22", "2022-13-40T06:22:02Z",
    ])
    def test_unparseable(self, value):
        assert parse_timestamp(value) is None

    def test_format(self):
        assert format_timestamp(T0) == "2022-05-26T06:22:02.661Z"


# =============================================================================
# Endpoints and windows
# =============================================================================


class TestNormalizePath:

    def test_query_removed_trailing_slash_kept(self):
        assert normalize_path("/api/v1/endpoint/?x=1") == "/api/v1/endpoint/"

    def test_ids_kept_by_default(self):
        assert normalize_path("/api/v1/orders/42") == "/api/v1/orders/42"

    def test_collapse_numeric_and_uuid(self):
        path = "/api/v1/orders/42/items/5ad7750b-a68b-49c0-a8c0-32776b067703"
        assert normalize_path(path, collapse_ids=True) == "/api/v1/orders/{id}/items/{id}"

    def test_version_segment_not_collapsed(self):
        assert normalize_path("/api/v1/orders", collapse_ids=True) == "/api/v1/orders"


class TestFilterWindow:

    @pytest.fixture
    def entries(self):
        return [outbound_entry(sid("b"), when=T0 + timedelta(minutes=m)) for m in range(5)]

    def test_half_open(self, entries):
        kept = filter_window(entries, T0 + timedelta(minutes=1), T0 + timedelta(minutes=3))
        assert [e.start_time for e in kept] == [T0 + timedelta(minutes=1), T0 + timedelta(minutes=2)]

    def test_unbounded(self, entries):
        assert filter_window(entries) == entries
        assert len(filter_window(entries, start=T0 + timedelta(minutes=4))) == 1
        assert len(filter_window(entries, end=T0)) == 0

    def test_empty_window(self, entries):
        assert filter_window(entries, T0, T0) == []

    def test_inverted_window_rejected(self, entries):
        with pytest.raises(InvalidWindow):
            filter_window(entries, T0 + timedelta(minutes=1), T0)


# =============================================================================
# Files, sources and manifests
# =============================================================================


class TestFiles:

    def test_parse_file_counts_failures(self, tmp_path):
        path = tmp_path / "a-service.default.log"
        write_log(path, [line(), "", "{broken", line(), "   "])
        result = parse_file(LogSource(sid("a-service"), str(path)))
        assert len(result.entries) == 2
        assert len(result.failures) == 1
        assert result.failures[0].line_number == 3
        assert result.total_lines == 3

    def test_corrupted_lines_match_rescan(self, tmp_path):
        call = CallSpec(sid("a"), sid("b"), "/api/v1/x", count=100)
        spec = TopologySpec((), (call,), T0, T0 + timedelta(minutes=5))
        generate_logs(spec, tmp_path, mirror_inbound=False)
        path = tmp_path / "a.default.log"
        lines = path.read_text(encoding="utf-8").splitlines()
        for n in (4, 50, 99):
            lines[n] = lines[n][: len(lines[n]) // 2]
        write_log(path, lines)

        rescan = []
        for number, text in enumerate(lines, 1):
            try:
                json.loads(text)
            except ValueError:
                rescan.append(number)

        result = parse_file(LogSource(sid("a"), str(path)))
        assert (len(result.entries), len(result.failures)) == (97, 3)
        assert [f.line_number for f in result.failures] == rescan == [5, 51, 100]

    def test_parse_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            parse_file(LogSource(sid("a"), str(tmp_path / "missing.log")))

    def test_discover_by_convention(self, tmp_path):
        write_log(tmp_path / "ts-order-service.default.log", [line()])
        write_log(tmp_path / "frontend.log", [line()])
        write_log(tmp_path / "notes.txt", ["x"])
        sources = discover_sources(tmp_path)
        assert [s.service for s in sources] == [sid("frontend"), sid("ts-order-service")]

    def test_manifest_overrides_convention(self, tmp_path):
        write_log(tmp_path / "pod-7f9c.txt", [line()])
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_text(json.dumps([
            {"file": "pod-7f9c.txt", "service": "checkout.shop"},
            {"service": "silent.shop"},
        ]))
        manifest = read_manifest(manifest_path)
        assert manifest[1] == ManifestEntry(ServiceId("silent.shop"), None)
        sources = discover_sources(tmp_path, manifest)
        assert [(s.service.name, s.file.endswith("pod-7f9c.txt")) for s in sources] == [("checkout.shop", True)]

    def test_manifest_missing_file(self, tmp_path):
        manifest = [ManifestEntry(sid("a"), "nope.log")]
        with pytest.raises(InputError):
            discover_sources(tmp_path, manifest)

    def test_bad_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"file": "x"}))
        with pytest.raises(InputError):
            read_manifest(path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(InputError):
            discover_sources(tmp_path / "nope")
