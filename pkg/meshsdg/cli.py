"""
MeshSDG - Command Line
Subcommands:
    analyze     access logs -> sdg.dot, metrics.csv, report.json, summary.txt
    diff        two report.json snapshots -> diff JSON and summary
    scale-plan  report.json -> ranked scaling plan
    gen         topology JSON -> synthetic sidecar access logs

Exit codes:
    0   success
    1   input, configuration, topology or report error
    2   too many malformed log lines (failure ratio above the limit)
    3   report schema_version mismatch
    64  command-line usage error
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from meshsdg.access_log import (
    AccessLogEntry,
    FileParseResult,
    LogSource,
    discover_sources,
    filter_window,
    parse_file,
    read_manifest,
)
from meshsdg.antipatterns import (
    DatastoreClassifier,
    check_api_versioning,
    compute_metrics,
    detect_cycles,
    detect_shared_persistency,
    summarize_antipatterns,
)
from meshsdg.config import ARTIFACT_NAMES, FORMATS, AnalyzeConfig, load_config_file, merge_config
from meshsdg.errors import FailureRatioExceeded, InputError, MeshSdgError, SchemaMismatch
from meshsdg.evolution import diff_graphs, diff_to_json, summarize_diff
from meshsdg.loggen import bundled_topologies, generate_logs, load_topology
from meshsdg.report import (
    AnalysisReport,
    emit_cycles_text,
    emit_dot,
    emit_metrics_csv,
    emit_summary_text,
    load_report,
)
from meshsdg.scaling import build_scaling_plan
from meshsdg.sdg import (
    STATUS_FILTERS,
    BuildDiagnostics,
    BuildOptions,
    GraphBuilder,
    ServiceDependencyGraph,
    cross_check_inbound,
    merge,
)

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FAILURE_RATIO = 2
EXIT_SCHEMA = 3
EXIT_USAGE = 64

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


# ═══════════════════════════════════════════════════════════════════════════════
# LOGGING AND OUTPUT
# ═══════════════════════════════════════════════════════════════════════════════

def setup_logging(level: str = "INFO") -> None:
    """Log to stderr; stdout carries reports only."""
    loglevel = getattr(logging, level.upper())
    logging.basicConfig(
        format="%(relativeCreated)05d %(levelname)-5s - %(message)s" if loglevel == logging.DEBUG
        else "%(levelname)-5s - %(message)s",
        stream=sys.stderr,
        level=loglevel,
        force=True,
    )


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}") from e
    logger.info("Wrote %s", path)


def _print_lines(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


# ═══════════════════════════════════════════════════════════════════════════════
# ANALYZE
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass
class FileAnalysis:
    """One log file: parse result, window-filtered entries and its partial graph"""
    result: FileParseResult
    entries: List[AccessLogEntry]
    graph: ServiceDependencyGraph
    diagnostics: BuildDiagnostics


def analyze_file(source: LogSource, config: AnalyzeConfig, options: BuildOptions) -> FileAnalysis:
    result = parse_file(source)
    entries = filter_window(result.entries, config.start, config.end)
    builder = GraphBuilder(options)
    for entry in entries:
        builder.add(source, entry)
    return FileAnalysis(result, entries, builder.build(), builder.diagnostics)


def analyze_sources(
    sources: Sequence[LogSource],
    config: AnalyzeConfig,
    options: BuildOptions,
) -> List[FileAnalysis]:
    """Parse and build per-file graphs, up to config.jobs files at a time; order is kept."""
    if config.jobs <= 1 or len(sources) <= 1:
        return [analyze_file(s, config, options) for s in sources]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        return list(pool.map(lambda s: analyze_file(s, config, options), sources))


def run_analyze(config: AnalyzeConfig) -> int:
    """
    Run the whole pipeline and write the configured artifacts.

    Raises:
        InputError: unreadable inputs or outputs
        FailureRatioExceeded: malformed lines above config.failure_ratio_limit
    """
    manifest = read_manifest(config.manifest) if config.manifest else []
    sources = discover_sources(config.logs_dir, manifest)
    if not sources:
        logger.warning("No log files found in %s; writing empty artifacts", config.logs_dir)

    options = BuildOptions(
        collapse_ids=config.collapse_ids,
        status_filter=config.status_filter,
        window=config.window,
    )
    files = analyze_sources(sources, config, options)

    total_lines = sum(f.result.total_lines for f in files)
    failures = sum(len(f.result.failures) for f in files)
    if total_lines and failures / total_lines > config.failure_ratio_limit:
        raise FailureRatioExceeded(failures, total_lines, config.failure_ratio_limit)

    graph = ServiceDependencyGraph((m.service for m in manifest), None, config.window)
    diagnostics = BuildDiagnostics()
    for f in files:
        graph = merge(graph, f.graph)
        diagnostics = diagnostics.merge(f.diagnostics)
    logger.info("SDG: %d services, %d edges, %d requests", len(graph.nodes), len(graph.weights), graph.total_requests)

    classifier = config.classifier()
    rows = compute_metrics(graph)
    cycles = detect_cycles(graph)
    persistency = detect_shared_persistency(graph, classifier)
    versioning = check_api_versioning(graph, config.version_pattern, classifier)
    plan = build_scaling_plan(graph, rows, classifier, config.top_k)

    report_diagnostics: Dict[str, Any] = {
        "files": len(files),
        "lines": total_lines,
        "skipped_lines": failures,
        "entries_in_window": sum(len(f.entries) for f in files),
        "db_patterns": list(config.db_patterns),
        **diagnostics.to_dict(),
    }
    if config.inbound_check:
        pairs = [(f.result.source, e) for f in files for e in f.entries]
        mismatches = cross_check_inbound(graph, pairs, options)
        report_diagnostics["inbound_mismatches"] = [str(m.service) for m in mismatches]
        if mismatches:
            logger.warning("%d service(s) logged inbound traffic that callers do not account for", len(mismatches))

    report = AnalysisReport(
        graph=graph,
        rows=rows,
        cycles=cycles,
        persistency=persistency,
        versioning=versioning,
        plan=plan,
        diagnostics=report_diagnostics,
    )

    artifacts = {
        "dot": lambda: emit_dot(graph, cycles, config.render, classifier),
        "csv": lambda: emit_metrics_csv(rows),
        "json": report.to_json,
        "text": lambda: emit_summary_text(report, config.summary_top_k),
    }
    for fmt in FORMATS:
        if fmt in config.formats:
            _write(Path(config.out_dir) / ARTIFACT_NAMES[fmt], artifacts[fmt]())

    _print_lines(emit_cycles_text(cycles))
    _print_lines(summarize_antipatterns(rows, cycles, persistency, versioning, config.summary_top_k))
    print(f"parsed {total_lines} lines from {len(files)} files, skipped {failures} malformed")
    return EXIT_OK


# ═══════════════════════════════════════════════════════════════════════════════
# DIFF, SCALE-PLAN, GEN
# ═══════════════════════════════════════════════════════════════════════════════

def run_diff(
    old_report: str,
    new_report: str,
    out: Optional[str] = None,
    top_k: int = 5,
    relative: bool = False,
) -> int:
    """Diff two analyze reports; writes the diff JSON when out is given."""
    old, new = load_report(old_report), load_report(new_report)
    diff = diff_graphs(old.graph, new.graph)
    if out:
        _write(Path(out), diff_to_json(diff))
    _print_lines(summarize_diff(diff, top_k=top_k, relative=relative))
    return EXIT_OK


def run_scale(
    report: str,
    top_k: Optional[int] = None,
    db_patterns: Optional[Sequence[str]] = None,
    out: Optional[str] = None,
) -> int:
    """
    Print the scaling plan of a stored report; writes it as JSON when out is
    given. Without db_patterns, the patterns the report was analyzed with are
    reused, falling back to the defaults for reports that do not record them.
    """
    loaded = load_report(report)
    patterns = db_patterns or loaded.diagnostics.get("db_patterns")
    classifier = DatastoreClassifier(patterns) if patterns else DatastoreClassifier()
    plan = build_scaling_plan(loaded.graph, loaded.rows, classifier, top_k)
    if out:
        _write(Path(out), plan.to_json())
    sys.stdout.write(plan.to_text())
    return EXIT_OK


def run_gen(topology: str, out_dir: str, seed: Optional[int] = None, mirror_inbound: bool = True) -> int:
    spec = load_topology(topology)
    ledger = generate_logs(spec, out_dir, mirror_inbound=mirror_inbound, seed=seed)
    print(f"wrote {ledger.total} calls on {len(ledger.counts())} edges to {len(ledger.files)} files in {out_dir}")
    return EXIT_OK


# ═══════════════════════════════════════════════════════════════════════════════
# ARGUMENT PARSING
# ═══════════════════════════════════════════════════════════════════════════════

class MeshSdgArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 64 so that 2 stays the failure-ratio code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", choices=LOG_LEVELS, type=str.upper,
                        help="stderr log level (default INFO)")

    parser = MeshSdgArgumentParser(
        prog="meshsdg",
        description="Service dependency graphs and anti-pattern metrics from service-mesh access logs",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    # analyze
    p = commands.add_parser("analyze", parents=[common], help="build the SDG and metrics from access logs")
    p.add_argument("--config", metavar="FILE", help="JSON config file; flags override it")
    p.add_argument("--logs", dest="logs_dir", metavar="DIR", help="directory of <service>.<namespace>.log files")
    p.add_argument("--manifest", metavar="FILE", help="JSON list of {file, service} overriding file-name attribution")
    p.add_argument("--from", dest="from_", metavar="TIME", help="window start, RFC3339, inclusive")
    p.add_argument("--to", metavar="TIME", help="window end, RFC3339, exclusive")
    p.add_argument("--out-dir", metavar="DIR", help="artifact directory (default out)")
    p.add_argument("--format", dest="formats", action="append", metavar="FMT",
                   help=f"repeatable or comma separated subset of {','.join(FORMATS)}")
    p.add_argument("--db-pattern", dest="db_patterns", action="append", metavar="REGEX",
                   help="datastore name pattern (repeatable, replaces the defaults)")
    p.add_argument("--version-pattern", metavar="REGEX", help="API version regex")
    p.add_argument("--collapse-ids", action="store_true", default=None,
                   help="collapse numeric and UUID path segments to {id}")
    p.add_argument("--failure-ratio-limit", type=float, metavar="RATIO",
                   help="maximum share of malformed lines (default 0.25)")
    p.add_argument("--top-k", type=_positive_int, metavar="N", help="scaling plan length")
    p.add_argument("--jobs", type=_positive_int, metavar="N", help="files parsed in parallel (default: CPUs)")
    p.add_argument("--status-filter", choices=STATUS_FILTERS, help="which response codes count as calls")
    p.add_argument("--no-inbound-check", dest="inbound_check", action="store_false", default=None,
                   help="skip the inbound/outbound consistency check")
    p.add_argument("--min-penwidth", type=float, metavar="W")
    p.add_argument("--max-penwidth", type=float, metavar="W")
    p.add_argument("--no-weight-labels", dest="weight_labels", action="store_false", default=None)
    p.add_argument("--no-endpoint-labels", dest="endpoint_labels", action="store_false", default=None)
    p.add_argument("--no-cycle-highlight", dest="highlight_cycles", action="store_false", default=None)
    p.add_argument("--no-heatmap", dest="heatmap", action="store_false", default=None)
    p.set_defaults(handler=_handle_analyze)

    # diff
    p = commands.add_parser("diff", parents=[common], help="compare two report.json snapshots")
    p.add_argument("old_report", metavar="OLD")
    p.add_argument("new_report", metavar="NEW")
    p.add_argument("--out", metavar="FILE", help="write the diff JSON here")
    p.add_argument("--top-k", type=_positive_int, default=5, metavar="N", help="weight swings listed (default 5)")
    p.add_argument("--relative", action="store_true", help="add percentage change to weight swings")
    p.set_defaults(handler=lambda a: run_diff(a.old_report, a.new_report, a.out, a.top_k, a.relative))

    # scale-plan
    p = commands.add_parser("scale-plan", parents=[common], help="rank services to scale from a report.json")
    p.add_argument("report", metavar="REPORT")
    p.add_argument("--top-k", type=_positive_int, metavar="N")
    p.add_argument("--db-pattern", dest="db_patterns", action="append", metavar="REGEX")
    p.add_argument("--out", metavar="FILE", help="write the plan JSON here")
    p.set_defaults(handler=lambda a: run_scale(a.report, a.top_k, a.db_patterns, a.out))

    # gen
    p = commands.add_parser("gen", parents=[common], help="generate synthetic access logs from a topology")
    p.add_argument("--topology", required=True, metavar="FILE",
                   help=f"topology JSON, or a bundled name ({', '.join(bundled_topologies())})")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, help="overrides the topology seed")
    p.add_argument("--no-inbound", dest="mirror_inbound", action="store_false",
                   help="do not mirror inbound records into destination files")
    p.set_defaults(handler=lambda a: run_gen(a.topology, a.out_dir, a.seed, a.mirror_inbound))

    return parser


def _split_formats(values: Optional[List[str]]) -> Optional[List[str]]:
    if not values:
        return None
    return [f.strip() for v in values for f in v.split(",") if f.strip()]


def config_from_args(args: argparse.Namespace) -> AnalyzeConfig:
    """DEFAULT_CONFIG, then --config, then explicit flags."""
    file_config = load_config_file(args.config) if args.config else {}
    overrides = {
        "logs_dir": args.logs_dir,
        "manifest": args.manifest,
        "from": args.from_,
        "to": args.to,
        "out_dir": args.out_dir,
        "formats": _split_formats(args.formats),
        "db_patterns": args.db_patterns,
        "version_pattern": args.version_pattern,
        "collapse_ids": args.collapse_ids,
        "failure_ratio_limit": args.failure_ratio_limit,
        "top_k": args.top_k,
        "jobs": args.jobs,
        "status_filter": args.status_filter,
        "inbound_check": args.inbound_check,
        "min_penwidth": args.min_penwidth,
        "max_penwidth": args.max_penwidth,
        "weight_labels": args.weight_labels,
        "endpoint_labels": args.endpoint_labels,
        "highlight_cycles": args.highlight_cycles,
        "heatmap": args.heatmap,
    }
    return AnalyzeConfig.from_mapping(merge_config(file_config, overrides))


def _handle_analyze(args: argparse.Namespace) -> int:
    return run_analyze(config_from_args(args))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except FailureRatioExceeded as ex:
        sys.stderr.write(f"ERROR - {ex}\n")
        return EXIT_FAILURE_RATIO
    except SchemaMismatch as ex:
        sys.stderr.write(f"ERROR - {ex}\n")
        return EXIT_SCHEMA
    except MeshSdgError as ex:
        sys.stderr.write(f"ERROR - {ex}\n")
        return EXIT_INPUT
