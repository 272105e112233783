# MeshSDG
"""
MeshSDG - Service Dependency Graphs from service-mesh access logs.
Builds the weighted, endpoint-labeled SDG from sidecar access logs and derives
anti-pattern metrics, cycle reports, evolution diffs and scaling plans.
"""

__version__ = "0.3.0"

from meshsdg.access_log import (
    AccessLogEntry,
    Direction,
    LogSource,
    ParseFailure,
    ServiceId,
    classify_direction,
    discover_sources,
    filter_window,
    parse_file,
    parse_line,
)
from meshsdg.sdg import (
    BuildOptions,
    GraphBuilder,
    SdgEdge,
    ServiceDependencyGraph,
    TimeWindow,
    build_graph,
    cross_check_inbound,
    inbound_weight,
    merge,
    outbound_weight,
    predecessors,
    successors,
)
from meshsdg.antipatterns import (
    CycleReport,
    DatastoreClassifier,
    MetricsRow,
    PersistencyFinding,
    VersioningFinding,
    check_api_versioning,
    compute_metrics,
    detect_cycles,
    detect_shared_persistency,
    rank_bottlenecks,
)
from meshsdg.evolution import SdgDiff, diff_graphs, summarize_diff
from meshsdg.scaling import ScalingPlan, build_scaling_plan
from meshsdg.report import (
    AnalysisReport,
    RenderOptions,
    emit_cycles_text,
    emit_dot,
    emit_metrics_csv,
    emit_report_json,
    load_report,
)
from meshsdg.loggen import TopologySpec, generate_logs, load_topology

__all__ = [
    'AccessLogEntry',
    'Direction',
    'LogSource',
    'ParseFailure',
    'ServiceId',
    'classify_direction',
    'discover_sources',
    'filter_window',
    'parse_file',
    'parse_line',
    'BuildOptions',
    'GraphBuilder',
    'SdgEdge',
    'ServiceDependencyGraph',
    'TimeWindow',
    'build_graph',
    'cross_check_inbound',
    'inbound_weight',
    'merge',
    'outbound_weight',
    'predecessors',
    'successors',
    'CycleReport',
    'DatastoreClassifier',
    'MetricsRow',
    'PersistencyFinding',
    'VersioningFinding',
    'check_api_versioning',
    'compute_metrics',
    'detect_cycles',
    'detect_shared_persistency',
    'rank_bottlenecks',
    'SdgDiff',
    'diff_graphs',
    'summarize_diff',
    'ScalingPlan',
    'build_scaling_plan',
    'AnalysisReport',
    'RenderOptions',
    'emit_cycles_text',
    'emit_dot',
    'emit_metrics_csv',
    'emit_report_json',
    'load_report',
    'TopologySpec',
    'generate_logs',
    'load_topology',
]
