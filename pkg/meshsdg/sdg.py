"""
MeshSDG - Service Dependency Graph
Builds the weighted, endpoint-labeled dependency graph from classified
outbound access-log entries and answers service-level graph queries.

Edges are keyed by (source, destination, endpoint, method); degree queries
collapse endpoints to the service level. Only outbound records create edges,
so a call seen by both sidecars is counted once.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple

import networkx as nx

from meshsdg.access_log import (
    AccessLogEntry,
    Direction,
    LogSource,
    ServiceId,
    classify_direction,
    destination_service,
    format_timestamp,
    normalize_path,
    parse_timestamp,
)
from meshsdg.errors import (
    ConfigError,
    InvalidReport,
    InvalidServiceId,
    InvalidWindow,
    UnknownService,
    WindowMismatch,
)

logger = logging.getLogger(__name__)


STATUS_FILTERS = ("all", "2xx", "non-5xx")


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, order=True)
class EdgeKey:
    """Identity of an edge: who called which endpoint of whom, with which method"""
    source: ServiceId
    destination: ServiceId
    endpoint: str
    method: str

    def to_dict(self) -> Dict[str, str]:
        return {
            "source": str(self.source),
            "destination": str(self.destination),
            "endpoint": self.endpoint,
            "method": self.method,
        }


@dataclass(frozen=True)
class SdgEdge:
    """Directed endpoint-labeled edge; weight is the observed call count"""
    source: ServiceId
    destination: ServiceId
    endpoint: str
    method: str
    weight: int

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError(f"edge weight must be >= 1, got {self.weight}")

    @property
    def key(self) -> EdgeKey:
        return EdgeKey(self.source, self.destination, self.endpoint, self.method)

    def to_dict(self) -> Dict[str, Any]:
        return {**self.key.to_dict(), "weight": self.weight}


@dataclass(frozen=True)
class TimeWindow:
    """Half-open observation window [start, end); None bounds are open"""
    start: Optional[datetime] = None
    end: Optional[datetime] = None

    def __post_init__(self):
        if self.start is not None and self.end is not None and self.start > self.end:
            raise InvalidWindow(
                f"window start {format_timestamp(self.start)} is after end {format_timestamp(self.end)}"
            )

    def overlaps(self, other: "TimeWindow") -> bool:
        a_before_b_ends = self.start is None or other.end is None or self.start < other.end
        b_before_a_ends = other.start is None or self.end is None or other.start < self.end
        return a_before_b_ends and b_before_a_ends

    def span(self, other: "TimeWindow") -> "TimeWindow":
        start = None if self.start is None or other.start is None else min(self.start, other.start)
        end = None if self.end is None or other.end is None else max(self.end, other.end)
        return TimeWindow(start, end)

    def to_dict(self) -> Dict[str, Optional[str]]:
        return {
            "from": format_timestamp(self.start) if self.start else None,
            "to": format_timestamp(self.end) if self.end else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TimeWindow":
        bounds = []
        for key in ("from", "to"):
            raw = data.get(key)
            value = parse_timestamp(raw) if raw is not None else None
            if raw is not None and value is None:
                raise InvalidReport(f"unparseable window bound {key}={raw!r}")
            bounds.append(value)
        return cls(*bounds)


class ServiceDependencyGraph:
    """
    Immutable SDG snapshot.

    Invariants: every edge endpoint is a node, every weight is >= 1 and
    total_requests is the sum of the weights. Safe for concurrent reads.
    """

    def __init__(
        self,
        nodes: Iterable[ServiceId] = (),
        weights: Optional[Mapping[EdgeKey, int]] = None,
        window: Optional[TimeWindow] = None,
    ):
        weights = dict(weights or {})
        for key, weight in weights.items():
            if weight < 1:
                raise ValueError(f"edge {key} has weight {weight}; weights must be >= 1")
        node_set: Set[ServiceId] = set(nodes)
        for key in weights:
            node_set.add(key.source)
            node_set.add(key.destination)

        self._nodes = frozenset(node_set)
        self._weights = MappingProxyType(dict(sorted(weights.items())))
        self._window = window
        self._digraph: Optional[nx.DiGraph] = None

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[SdgEdge],
        nodes: Iterable[ServiceId] = (),
        window: Optional[TimeWindow] = None,
    ) -> "ServiceDependencyGraph":
        weights: Dict[EdgeKey, int] = {}
        for edge in edges:
            weights[edge.key] = weights.get(edge.key, 0) + edge.weight
        return cls(nodes, weights, window)

    # ─── accessors ───────────────────────────────────────────────────────────

    @property
    def nodes(self) -> frozenset:
        return self._nodes

    @property
    def weights(self) -> Mapping[EdgeKey, int]:
        return self._weights

    @property
    def edges(self) -> Tuple[SdgEdge, ...]:
        return tuple(
            SdgEdge(k.source, k.destination, k.endpoint, k.method, w)
            for k, w in self._weights.items()
        )

    @property
    def window(self) -> Optional[TimeWindow]:
        return self._window

    @property
    def total_requests(self) -> int:
        return sum(self._weights.values())

    def sorted_nodes(self) -> List[ServiceId]:
        return sorted(self._nodes)

    def __contains__(self, service: object) -> bool:
        return service in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ServiceDependencyGraph):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and dict(self._weights) == dict(other._weights)
            and self._window == other._window
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"ServiceDependencyGraph(nodes={len(self._nodes)}, edges={len(self._weights)}, "
            f"total_requests={self.total_requests})"
        )

    # ─── service-level view ──────────────────────────────────────────────────

    def service_graph(self) -> nx.DiGraph:
        """
        Endpoint-collapsed digraph. Edge attribute 'weight' is the summed call
        count, 'endpoints' the number of distinct (endpoint, method) labels.
        Self-loops are kept.
        """
        if self._digraph is None:
            graph = nx.DiGraph()
            graph.add_nodes_from(self.sorted_nodes())
            for key, weight in self._weights.items():
                if graph.has_edge(key.source, key.destination):
                    data = graph[key.source][key.destination]
                    data["weight"] += weight
                    data["endpoints"] += 1
                else:
                    graph.add_edge(key.source, key.destination, weight=weight, endpoints=1)
            self._digraph = graph
        return self._digraph

    def _require(self, service: ServiceId) -> None:
        if service not in self._nodes:
            raise UnknownService(f"{service} is not a node of this graph")

    def predecessors(self, service: ServiceId) -> Set[ServiceId]:
        """Distinct services calling `service`; self excluded."""
        self._require(service)
        return {s for s in self.service_graph().predecessors(service) if s != service}

    def successors(self, service: ServiceId) -> Set[ServiceId]:
        """Distinct services `service` calls; self excluded."""
        self._require(service)
        return {d for d in self.service_graph().successors(service) if d != service}

    def inbound_weight(self, service: ServiceId) -> int:
        self._require(service)
        return int(self.service_graph().in_degree(service, weight="weight"))

    def outbound_weight(self, service: ServiceId) -> int:
        self._require(service)
        return int(self.service_graph().out_degree(service, weight="weight"))

    # ─── serialization ───────────────────────────────────────────────────────

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [str(n) for n in self.sorted_nodes()],
            "edges": [edge.to_dict() for edge in self.edges],
            "window": self._window.to_dict() if self._window else None,
            "total_requests": self.total_requests,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ServiceDependencyGraph":
        """
        Rebuild a snapshot written by to_dict().

        Raises:
            InvalidReport: on missing keys, bad ids or inconsistent totals
        """
        try:
            nodes = [ServiceId(n) for n in data["nodes"]]
            weights = {}
            for raw in data["edges"]:
                edge = SdgEdge(
                    ServiceId(raw["source"]), ServiceId(raw["destination"]),
                    str(raw["endpoint"]), str(raw["method"]), int(raw["weight"]),
                )
                if edge.key in weights:
                    raise InvalidReport(f"duplicate edge {edge.key}")
                weights[edge.key] = edge.weight
            window = TimeWindow.from_dict(data["window"]) if data.get("window") else None
        except (KeyError, TypeError, ValueError, InvalidServiceId, InvalidWindow) as e:
            raise InvalidReport(f"invalid graph snapshot: {e}") from e

        graph = cls(nodes, weights, window)
        declared_total = data.get("total_requests")
        if declared_total is not None and declared_total != graph.total_requests:
            raise InvalidReport(
                f"snapshot total_requests {declared_total} != sum of edge weights {graph.total_requests}"
            )
        return graph


# ═══════════════════════════════════════════════════════════════════════════════
# GRAPH QUERIES (module-level forms)
# ═══════════════════════════════════════════════════════════════════════════════

def predecessors(g: ServiceDependencyGraph, service: ServiceId) -> Set[ServiceId]:
    return g.predecessors(service)


def successors(g: ServiceDependencyGraph, service: ServiceId) -> Set[ServiceId]:
    return g.successors(service)


def inbound_weight(g: ServiceDependencyGraph, service: ServiceId) -> int:
    return g.inbound_weight(service)


def outbound_weight(g: ServiceDependencyGraph, service: ServiceId) -> int:
    return g.outbound_weight(service)


# ═══════════════════════════════════════════════════════════════════════════════
# CONSTRUCTION
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class BuildOptions:
    """
    collapse_ids: replace numeric/UUID path segments with '{id}'
    status_filter: 'all' | '2xx' | 'non-5xx' (which response codes count)
    declared_services: zero-edge nodes declared by a manifest
    window: window recorded on the built graph
    """
    collapse_ids: bool = False
    status_filter: str = "all"
    declared_services: Tuple[ServiceId, ...] = ()
    window: Optional[TimeWindow] = None

    def __post_init__(self):
        if self.status_filter not in STATUS_FILTERS:
            raise ConfigError(
                f"status filter {self.status_filter!r} not one of {', '.join(STATUS_FILTERS)}"
            )

    def counts_status(self, response_code: int) -> bool:
        if self.status_filter == "2xx":
            return 200 <= response_code < 300
        if self.status_filter == "non-5xx":
            return response_code < 500
        return True


@dataclass
class BuildDiagnostics:
    """Tally of what happened to each entry offered to a GraphBuilder"""
    outbound: int = 0
    inbound: int = 0
    unknown: int = 0
    unresolved: int = 0
    status_filtered: int = 0
    self_calls: int = 0
    status_classes: Counter = field(default_factory=Counter)

    def merge(self, other: "BuildDiagnostics") -> "BuildDiagnostics":
        return BuildDiagnostics(
            outbound=self.outbound + other.outbound,
            inbound=self.inbound + other.inbound,
            unknown=self.unknown + other.unknown,
            unresolved=self.unresolved + other.unresolved,
            status_filtered=self.status_filtered + other.status_filtered,
            self_calls=self.self_calls + other.self_calls,
            status_classes=self.status_classes + other.status_classes,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "outbound": self.outbound,
            "inbound": self.inbound,
            "unknown": self.unknown,
            "unresolved": self.unresolved,
            "status_filtered": self.status_filtered,
            "self_calls": self.self_calls,
            "status_classes": dict(sorted(self.status_classes.items())),
        }


class GraphBuilder:
    """
    Single-writer incremental SDG builder.

    Each outbound entry with a resolvable destination upserts the edge
    (source sidecar -> destination, endpoint, method) and adds one to its
    weight. Inbound and unknown entries only update the diagnostics.
    """

    def __init__(self, options: Optional[BuildOptions] = None):
        self.options = options or BuildOptions()
        self.diagnostics = BuildDiagnostics()
        self._weights: Dict[EdgeKey, int] = {}
        self._nodes: Set[ServiceId] = set(self.options.declared_services)

    def add(self, source: LogSource, entry: AccessLogEntry) -> Optional[EdgeKey]:
        """Offer one entry; returns the edge key it was counted on, if any."""
        direction = classify_direction(entry)
        if direction is Direction.INBOUND:
            self.diagnostics.inbound += 1
            return None
        if direction is Direction.UNKNOWN:
            self.diagnostics.unknown += 1
            return None

        self.diagnostics.outbound += 1
        self.diagnostics.status_classes[f"{entry.response_code // 100}xx"] += 1
        if not self.options.counts_status(entry.response_code):
            self.diagnostics.status_filtered += 1
            return None

        destination = destination_service(entry, source.service.namespace)
        if destination is None:
            self.diagnostics.unresolved += 1
            return None
        if destination == source.service:
            self.diagnostics.self_calls += 1

        key = EdgeKey(
            source=source.service,
            destination=destination,
            endpoint=normalize_path(entry.path, self.options.collapse_ids),
            method=entry.method,
        )
        self._weights[key] = self._weights.get(key, 0) + 1
        self._nodes.add(source.service)
        self._nodes.add(destination)
        return key

    def add_all(self, entries: Iterable[Tuple[LogSource, AccessLogEntry]]) -> "GraphBuilder":
        for source, entry in entries:
            self.add(source, entry)
        return self

    def build(self) -> ServiceDependencyGraph:
        if self.diagnostics.unresolved:
            logger.warning("%d outbound entries had no resolvable destination", self.diagnostics.unresolved)
        return ServiceDependencyGraph(self._nodes, self._weights, self.options.window)


def build_graph(
    entries: Iterable[Tuple[LogSource, AccessLogEntry]],
    options: Optional[BuildOptions] = None,
) -> ServiceDependencyGraph:
    """Build an SDG from (source, entry) pairs; input order does not matter."""
    return GraphBuilder(options).add_all(entries).build()


def merge(
    g1: ServiceDependencyGraph,
    g2: ServiceDependencyGraph,
    strict: bool = False,
) -> ServiceDependencyGraph:
    """
    Union of nodes and edge-wise sum of weights. An unset window acts as the
    identity; two set windows merge to their span.

    Raises:
        WindowMismatch: in strict mode, when both windows are set and disjoint
    """
    w1, w2 = g1.window, g2.window
    if w1 is not None and w2 is not None:
        if strict and not w1.overlaps(w2):
            raise WindowMismatch(f"cannot merge graphs with disjoint windows {w1.to_dict()} and {w2.to_dict()}")
        window = w1.span(w2)
    else:
        window = w1 if w1 is not None else w2

    weights = dict(g1.weights)
    for key, weight in g2.weights.items():
        weights[key] = weights.get(key, 0) + weight
    return ServiceDependencyGraph(g1.nodes | g2.nodes, weights, window)


# ═══════════════════════════════════════════════════════════════════════════════
# INBOUND CONSISTENCY CHECK
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class InboundMismatch:
    """A sidecar logged a different number of inbound calls than callers attributed to it"""
    service: ServiceId
    inbound_records: int
    attributed_weight: int


def cross_check_inbound(
    graph: ServiceDependencyGraph,
    entries: Iterable[Tuple[LogSource, AccessLogEntry]],
    options: Optional[BuildOptions] = None,
) -> List[InboundMismatch]:
    """
    Compare, for every service that contributed a log file, the inbound
    records its own sidecar wrote with the outbound weight the graph
    attributes to it. External (ingress) traffic shows up as a mismatch.
    """
    options = options or BuildOptions()
    seen: Counter = Counter()
    sources: Set[ServiceId] = set()
    for source, entry in entries:
        sources.add(source.service)
        if classify_direction(entry) is Direction.INBOUND and options.counts_status(entry.response_code):
            seen[source.service] += 1

    mismatches = []
    for service in sorted(sources):
        attributed = graph.inbound_weight(service) if service in graph else 0
        if seen[service] != attributed:
            mismatches.append(InboundMismatch(service, seen[service], attributed))
    for m in mismatches:
        logger.info(
            "Inbound check: %s logged %d inbound calls, callers attribute %d",
            m.service, m.inbound_records, m.attributed_weight,
        )
    return mismatches
