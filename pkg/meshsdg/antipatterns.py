"""
MeshSDG - Anti-pattern Metrics
Per-service importance/dependence/criticality metrics, cyclic dependency
detection, shared persistency and API versioning checks over an SDG.

All metrics depend on topology only: edge weights never change a row.
"""

import logging
import re
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import pandas as pd

from meshsdg.access_log import ServiceId
from meshsdg.errors import InvalidPattern
from meshsdg.sdg import ServiceDependencyGraph

logger = logging.getLogger(__name__)


DEFAULT_DB_PATTERNS = ("mongo", "mysql", "postgres", "redis", "mariadb", "-db")
DEFAULT_VERSION_PATTERN = r"^/api/v[0-9]+(/|$)"
INGRESS_NOTE = "ingress or unconsumed"
METRIC_COLUMNS = ["service_name", "in_degree", "out_degree", "ais", "ads", "acs"]


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MetricsRow:
    """
    One service's metrics.

    ais: distinct services invoking this one (= in_degree)
    ads: distinct services this one relies on (= out_degree)
    acs: ais * ads, the criticality / bottleneck indicator
    """
    service: ServiceId
    in_degree: int
    out_degree: int
    ais: int
    ads: int
    acs: int

    @property
    def note(self) -> str:
        return INGRESS_NOTE if self.ais == 0 else ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "service_name": str(self.service),
            "in_degree": self.in_degree,
            "out_degree": self.out_degree,
            "ais": self.ais,
            "ads": self.ads,
            "acs": self.acs,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricsRow":
        return cls(
            service=ServiceId(str(data["service_name"])),
            in_degree=int(data["in_degree"]),
            out_degree=int(data["out_degree"]),
            ais=int(data["ais"]),
            ads=int(data["ads"]),
            acs=int(data["acs"]),
        )


@dataclass(frozen=True)
class CycleReport:
    """
    siy: unordered service pairs that are mutually reachable
    components: strongly connected components of size >= 2, members sorted
    self_loops: services calling themselves (not counted in siy)
    direct_pairs: pairs calling each other directly (a->b and b->a)
    """
    siy: int = 0
    components: Tuple[Tuple[ServiceId, ...], ...] = ()
    self_loops: Tuple[ServiceId, ...] = ()
    direct_pairs: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.components and not self.self_loops

    def member_of(self, service: ServiceId) -> Optional[Tuple[ServiceId, ...]]:
        for component in self.components:
            if service in component:
                return component
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "siy": self.siy,
            "direct_pairs": self.direct_pairs,
            "components": [[str(s) for s in c] for c in self.components],
            "self_loops": [str(s) for s in self.self_loops],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CycleReport":
        return cls(
            siy=int(data["siy"]),
            components=tuple(tuple(ServiceId(s) for s in c) for c in data["components"]),
            self_loops=tuple(ServiceId(s) for s in data["self_loops"]),
            direct_pairs=int(data.get("direct_pairs", 0)),
        )


@dataclass(frozen=True)
class PersistencyFinding:
    """A datastore reached by two or more distinct services"""
    datastore: ServiceId
    sharers: Tuple[ServiceId, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"datastore": str(self.datastore), "sharers": [str(s) for s in self.sharers]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PersistencyFinding":
        return cls(ServiceId(data["datastore"]), tuple(ServiceId(s) for s in data["sharers"]))


@dataclass(frozen=True)
class VersioningFinding:
    """Whether one (source, destination, endpoint) carries an API version"""
    source: ServiceId
    destination: ServiceId
    endpoint: str
    versioned: bool

    @property
    def edge(self) -> Tuple[ServiceId, ServiceId, str]:
        return (self.source, self.destination, self.endpoint)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": str(self.source),
            "destination": str(self.destination),
            "endpoint": self.endpoint,
            "versioned": self.versioned,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VersioningFinding":
        return cls(
            ServiceId(data["source"]), ServiceId(data["destination"]),
            str(data["endpoint"]), bool(data["versioned"]),
        )


class DatastoreClassifier:
    """
    Decides which nodes are datastores by searching name patterns in the
    service part of the id ('ts-order-mongo' of 'ts-order-mongo.default').
    """

    def __init__(self, patterns: Iterable[str] = DEFAULT_DB_PATTERNS):
        self.patterns = tuple(patterns)
        try:
            self._compiled = [re.compile(p) for p in self.patterns]
        except re.error as e:
            raise InvalidPattern(f"invalid datastore pattern: {e}") from e

    def is_datastore(self, service: ServiceId) -> bool:
        return any(p.search(service.service) for p in self._compiled)

    def __repr__(self) -> str:
        return f"DatastoreClassifier({list(self.patterns)!r})"


def compile_version_pattern(pattern: str = DEFAULT_VERSION_PATTERN) -> "re.Pattern[str]":
    try:
        return re.compile(pattern)
    except re.error as e:
        raise InvalidPattern(f"invalid version pattern {pattern!r}: {e}") from e


# ═══════════════════════════════════════════════════════════════════════════════
# METRICS
# ═══════════════════════════════════════════════════════════════════════════════

def compute_metrics(g: ServiceDependencyGraph) -> List[MetricsRow]:
    """One row per node, sorted by service name. Degrees count distinct services."""
    rows = []
    for service in g.sorted_nodes():
        ais = len(g.predecessors(service))
        ads = len(g.successors(service))
        rows.append(MetricsRow(service, ais, ads, ais, ads, ais * ads))
    return rows


def rank_bottlenecks(rows: Sequence[MetricsRow]) -> List[Tuple[ServiceId, int]]:
    """Services by descending acs; ties broken by name."""
    return [(r.service, r.acs) for r in sorted(rows, key=lambda r: (-r.acs, r.service))]


def metrics_frame(rows: Sequence[MetricsRow]) -> pd.DataFrame:
    """Get metric rows as a DataFrame in CSV column order"""
    if not rows:
        return pd.DataFrame(columns=METRIC_COLUMNS)
    return pd.DataFrame([r.to_dict() for r in rows], columns=METRIC_COLUMNS)


# ═══════════════════════════════════════════════════════════════════════════════
# DETECTIONS
# ═══════════════════════════════════════════════════════════════════════════════

def detect_cycles(g: ServiceDependencyGraph) -> CycleReport:
    """
    Strongly connected components of the endpoint-collapsed graph. Every
    pair inside one component depends on the other through some path.
    """
    graph = g.service_graph()

    components = sorted(
        tuple(sorted(c)) for c in nx.strongly_connected_components(graph) if len(c) >= 2
    )
    siy = sum(len(c) * (len(c) - 1) // 2 for c in components)
    self_loops = tuple(sorted(nx.nodes_with_selfloops(graph)))
    direct_pairs = sum(
        1 for u, v in graph.edges
        if u < v and graph.has_edge(v, u)
    )

    if components:
        logger.info("Found %d cyclic component(s), siy=%d", len(components), siy)
    return CycleReport(siy, tuple(components), self_loops, direct_pairs)


def detect_shared_persistency(
    g: ServiceDependencyGraph,
    classifier: Optional[DatastoreClassifier] = None,
) -> List[PersistencyFinding]:
    """Datastore nodes with two or more distinct non-datastore callers."""
    classifier = classifier or DatastoreClassifier()
    findings = []
    for node in g.sorted_nodes():
        if not classifier.is_datastore(node):
            continue
        sharers = sorted(p for p in g.predecessors(node) if not classifier.is_datastore(p))
        if len(sharers) >= 2:
            findings.append(PersistencyFinding(node, tuple(sharers)))
    return findings


def check_api_versioning(
    g: ServiceDependencyGraph,
    pattern: str = DEFAULT_VERSION_PATTERN,
    classifier: Union[DatastoreClassifier, bool, None] = None,
) -> List[VersioningFinding]:
    """
    One finding per distinct (source, destination, endpoint). Calls into
    datastores carry no HTTP version and are skipped; classifier=None uses
    the default datastore patterns, classifier=False checks every call.

    Raises:
        InvalidPattern: if pattern does not compile
    """
    version = compile_version_pattern(pattern)
    skip = DatastoreClassifier() if classifier is None or classifier is True else classifier
    edges = sorted({(k.source, k.destination, k.endpoint) for k in g.weights})
    return [
        VersioningFinding(src, dst, endpoint, bool(version.search(endpoint)))
        for src, dst, endpoint in edges
        if not skip or not skip.is_datastore(dst)
    ]


def versioned_ratio(findings: Sequence[VersioningFinding]) -> float:
    """Share of versioned endpoints; 1.0 when there is nothing to check."""
    if not findings:
        return 1.0
    return sum(f.versioned for f in findings) / len(findings)


# ═══════════════════════════════════════════════════════════════════════════════
# SUMMARY
# ═══════════════════════════════════════════════════════════════════════════════

def summarize_antipatterns(
    rows: Sequence[MetricsRow],
    cycles: CycleReport,
    persistency: Sequence[PersistencyFinding],
    versioning: Sequence[VersioningFinding],
    top_k: int = 3,
) -> List[str]:
    """Human-readable anti-pattern summary lines, in a fixed order."""
    lines = [f"services: {len(rows)}"]

    lines.append(f"cyclic dependency (siy): {cycles.siy} (direct pairs: {cycles.direct_pairs})")

    ranked = [(s, acs) for s, acs in rank_bottlenecks(rows) if acs > 0][:top_k]
    if ranked:
        lines.append("bottlenecks (acs): " + ", ".join(f"{s} {acs}" for s, acs in ranked))
    else:
        lines.append("bottlenecks (acs): none")

    if persistency:
        for f in persistency:
            lines.append(f"shared persistency: {f.datastore} used by {', '.join(map(str, f.sharers))}")
    else:
        lines.append("shared persistency: none")

    versioned = sum(f.versioned for f in versioning)
    lines.append(
        f"api versioning: {versioned}/{len(versioning)} endpoints versioned "
        f"({versioned_ratio(versioning):.1%})"
    )
    for f in versioning:
        if not f.versioned:
            lines.append(f"unversioned endpoint: {f.source} -> {f.destination} {f.endpoint}")

    ingress = [str(r.service) for r in rows if r.note]
    if ingress:
        lines.append(f"{INGRESS_NOTE}: {', '.join(ingress)}")
    return lines
