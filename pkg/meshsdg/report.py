"""
MeshSDG - Report Emitters
Deterministic DOT, CSV, JSON and plain-text artifacts for graphs, metrics,
cycles, findings and scaling plans, plus readers for the CSV and the JSON
report so that later runs (diff, scale-plan) can start from files.

Equal inputs always produce byte-identical output.
"""

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from meshsdg.antipatterns import (
    METRIC_COLUMNS,
    CycleReport,
    DatastoreClassifier,
    MetricsRow,
    PersistencyFinding,
    VersioningFinding,
    compute_metrics,
    rank_bottlenecks,
    summarize_antipatterns,
)
from meshsdg.errors import ConfigError, InputError, InvalidReport, SchemaMismatch
from meshsdg.scaling import ScalingPlan
from meshsdg.sdg import ServiceDependencyGraph

logger = logging.getLogger(__name__)


SCHEMA_VERSION = "1"
EMPTY_DOT = "digraph sdg { }\n"
CYCLE_COLOR = "red"
HEAT_COLD = "#4575b4"
HEAT_HOT = "#f46d43"
NODE_COLD = "#ffffff"
NODE_HOT = "#fdae61"
NO_CYCLES = "no cycles detected"


# ═══════════════════════════════════════════════════════════════════════════════
# DOT
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class RenderOptions:
    """
    min_penwidth / max_penwidth: edge thickness range (log-scaled by weight)
    weight_labels / endpoint_labels: what edge labels show
    highlight_cycles: color edges inside cyclic components red
    heatmap: color other edges and fill nodes by traffic
    """
    min_penwidth: float = 1.0
    max_penwidth: float = 5.0
    weight_labels: bool = True
    endpoint_labels: bool = True
    highlight_cycles: bool = True
    heatmap: bool = True

    def __post_init__(self):
        if not 0 < self.min_penwidth <= self.max_penwidth:
            raise ConfigError(
                f"penwidth bounds must satisfy 0 < min <= max, got {self.min_penwidth}, {self.max_penwidth}"
            )


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _heat_ratio(values: Sequence[int]) -> np.ndarray:
    """log(1+v)/log(1+max) per value; all zeros when values are equal or empty."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return arr
    top = arr.max()
    if top <= 0 or np.all(arr == top):
        return np.zeros_like(arr)
    return np.log1p(arr) / np.log1p(top)


def _blend(cold: str, hot: str, ratio: float) -> str:
    a = np.array([int(cold[i:i + 2], 16) for i in (1, 3, 5)], dtype=float)
    b = np.array([int(hot[i:i + 2], 16) for i in (1, 3, 5)], dtype=float)
    rgb = np.rint(a + (b - a) * ratio).astype(int)
    return "#" + "".join(f"{c:02x}" for c in rgb)


def edge_penwidths(weights: Sequence[int], opts: Optional[RenderOptions] = None) -> List[float]:
    """Pen width per weight: min + (max - min) * ln(1+w) / ln(1+w_max)."""
    opts = opts or RenderOptions()
    ratio = _heat_ratio(weights)
    return [float(opts.min_penwidth + (opts.max_penwidth - opts.min_penwidth) * r) for r in ratio]


def _edge_label(endpoint: str, weight: int, opts: RenderOptions) -> Optional[str]:
    if opts.endpoint_labels and opts.weight_labels:
        return f"{endpoint} ({weight})"
    if opts.endpoint_labels:
        return endpoint
    if opts.weight_labels:
        return str(weight)
    return None


def emit_dot(
    g: ServiceDependencyGraph,
    cycles: Optional[CycleReport] = None,
    opts: Optional[RenderOptions] = None,
    classifier: Optional[DatastoreClassifier] = None,
) -> str:
    """
    Render the SDG as Graphviz DOT.

    Args:
        g: Graph to render
        cycles: Cycle report; edges inside its components are highlighted
        opts: Rendering options
        classifier: When given, datastore nodes are drawn as cylinders

    Returns:
        DOT text with nodes and edges in sorted order
    """
    opts = opts or RenderOptions()
    if not g.nodes:
        return EMPTY_DOT

    component_of = {}
    if cycles is not None and opts.highlight_cycles:
        for i, component in enumerate(cycles.components):
            for service in component:
                component_of[service] = i

    nodes = g.sorted_nodes()
    inbound = [g.inbound_weight(n) for n in nodes]
    node_heat = _heat_ratio(inbound)

    edges = g.edges
    weights = [e.weight for e in edges]
    penwidths = edge_penwidths(weights, opts)
    edge_heat = _heat_ratio(weights)

    lines = [
        "digraph sdg {",
        "  rankdir=LR;",
        '  node [shape=box, style="rounded,filled", fontname="Helvetica", fillcolor="#ffffff"];',
        '  edge [fontname="Helvetica", fontsize=10];',
    ]
    for node, heat, weight in zip(nodes, node_heat, inbound):
        attrs = []
        if classifier is not None and classifier.is_datastore(node):
            attrs.append("shape=cylinder")
        if opts.heatmap:
            attrs.append(f"fillcolor={_quote(_blend(NODE_COLD, NODE_HOT, heat))}")
            attrs.append(f"tooltip={_quote(f'{weight} inbound calls')}")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  {_quote(node)}{suffix};")

    for edge, width, heat in zip(edges, penwidths, edge_heat):
        attrs = []
        label = _edge_label(edge.endpoint, edge.weight, opts)
        if label is not None:
            attrs.append(f"label={_quote(label)}")
        attrs.append(f"penwidth={width:.2f}")
        in_cycle = (
            edge.source != edge.destination
            and edge.source in component_of
            and component_of.get(edge.destination) == component_of[edge.source]
        )
        if in_cycle:
            attrs.append(f"color={_quote(CYCLE_COLOR)}")
        elif opts.heatmap:
            attrs.append(f"color={_quote(_blend(HEAT_COLD, HEAT_HOT, heat))}")
        lines.append(f"  {_quote(edge.source)} -> {_quote(edge.destination)} [{', '.join(attrs)}];")

    lines.append("}")
    return "\n".join(lines) + "\n"


# ═══════════════════════════════════════════════════════════════════════════════
# METRIC CSV
# ═══════════════════════════════════════════════════════════════════════════════

def emit_metrics_csv(rows: Sequence[MetricsRow]) -> str:
    """Header 'service_name,in_degree,out_degree,ais,ads,acs' and one LF-terminated line per row."""
    frame = pd.DataFrame([r.to_dict() for r in rows], columns=METRIC_COLUMNS)
    return frame.to_csv(index=False, lineterminator="\n")


def parse_metrics_csv(text: str) -> List[MetricsRow]:
    """
    Read back a metric CSV written by emit_metrics_csv.

    Raises:
        InvalidReport: on a wrong header or non-integer cells
    """
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidReport(f"unreadable metric CSV: {e}") from e
    if list(frame.columns) != METRIC_COLUMNS:
        raise InvalidReport(f"metric CSV header {list(frame.columns)} != {METRIC_COLUMNS}")
    try:
        return [MetricsRow.from_dict(record) for record in frame.to_dict(orient="records")]
    except ValueError as e:
        raise InvalidReport(f"bad metric CSV row: {e}") from e


# ═══════════════════════════════════════════════════════════════════════════════
# JSON REPORT
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass
class AnalysisReport:
    """Everything one analysis produced, as stored in report.json"""
    graph: ServiceDependencyGraph
    rows: List[MetricsRow]
    cycles: CycleReport
    persistency: List[PersistencyFinding] = field(default_factory=list)
    versioning: List[VersioningFinding] = field(default_factory=list)
    plan: ScalingPlan = field(default_factory=ScalingPlan)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "graph": self.graph.to_dict(),
            "metrics": [r.to_dict() for r in self.rows],
            "cycles": self.cycles.to_dict(),
            "shared_persistency": [f.to_dict() for f in self.persistency],
            "api_versioning": [f.to_dict() for f in self.versioning],
            "scaling_plan": self.plan.to_records(),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AnalysisReport":
        """
        Raises:
            SchemaMismatch: schema_version missing or unsupported
            InvalidReport: structure broken or metrics inconsistent with the graph
        """
        if not isinstance(data, Mapping):
            raise InvalidReport("report must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaMismatch(f"unsupported report schema_version {version!r} (expected {SCHEMA_VERSION!r})")

        graph = ServiceDependencyGraph.from_dict(data.get("graph") or {})
        try:
            report = cls(
                graph=graph,
                rows=[MetricsRow.from_dict(r) for r in data["metrics"]],
                cycles=CycleReport.from_dict(data["cycles"]),
                persistency=[PersistencyFinding.from_dict(f) for f in data.get("shared_persistency", [])],
                versioning=[VersioningFinding.from_dict(f) for f in data.get("api_versioning", [])],
                plan=ScalingPlan.from_records(data.get("scaling_plan", [])),
                diagnostics=dict(data.get("diagnostics") or {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidReport(f"invalid report structure: {e}") from e

        if report.rows != compute_metrics(graph):
            raise InvalidReport("report metrics do not match its graph snapshot")
        return report


def emit_report_json(
    g: ServiceDependencyGraph,
    rows: Sequence[MetricsRow],
    cycles: CycleReport,
    persistency: Sequence[PersistencyFinding],
    versioning: Sequence[VersioningFinding],
    plan: ScalingPlan,
    diagnostics: Optional[Mapping[str, Any]] = None,
) -> str:
    """Single report document (schema_version '1'), keys sorted."""
    report = AnalysisReport(
        graph=g,
        rows=list(rows),
        cycles=cycles,
        persistency=list(persistency),
        versioning=list(versioning),
        plan=plan,
        diagnostics=dict(diagnostics or {}),
    )
    return report.to_json()


def load_report(path: Union[str, Path]) -> AnalysisReport:
    """
    Load a report.json written by analyze.

    Raises:
        InputError: file unreadable
        InvalidReport: not JSON or structurally invalid
        SchemaMismatch: unsupported schema_version
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read report {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidReport(f"report {path} is not JSON: {e}") from e
    logger.debug("Loaded report %s", path)
    return AnalysisReport.from_dict(data)


# ═══════════════════════════════════════════════════════════════════════════════
# TEXT
# ═══════════════════════════════════════════════════════════════════════════════

def emit_cycles_text(cycles: CycleReport) -> List[str]:
    """One line per component and per self-loop, or 'no cycles detected'."""
    lines = [f"cycle: {' <-> '.join(str(s) for s in c)}" for c in cycles.components]
    lines += [f"self-loop: {s}" for s in cycles.self_loops]
    return lines or [NO_CYCLES]


def emit_summary_text(report: AnalysisReport, top_k: int = 3) -> str:
    """The text artifact: cycles, anti-pattern summary, bottlenecks and the scaling plan"""
    lines = ["# cycles"]
    lines += emit_cycles_text(report.cycles)

    lines += ["", "# anti-patterns"]
    lines += summarize_antipatterns(
        report.rows, report.cycles, report.persistency, report.versioning, top_k=top_k
    )

    lines += ["", "# bottleneck ranking"]
    ranking = rank_bottlenecks(report.rows)
    lines += [f"{i}. {service} acs {acs}" for i, (service, acs) in enumerate(ranking, 1) if acs > 0]
    if not any(acs > 0 for _, acs in ranking):
        lines.append("none")

    if report.diagnostics:
        lines += ["", "# input"]
        for key in sorted(report.diagnostics):
            value = report.diagnostics[key]
            if isinstance(value, Mapping):
                value = ", ".join(f"{k}={v}" for k, v in sorted(value.items())) or "-"
            elif isinstance(value, (list, tuple)):
                value = ", ".join(map(str, value)) or "-"
            lines.append(f"{key}: {value}")

    lines += ["", "# scaling plan"]
    return "\n".join(lines) + "\n" + report.plan.to_text()
