"""
MeshSDG - Evolution Module
Diffs two SDG snapshots (for example two releases of the same system) to
surface new and vanished services, dependencies, load swings and the
resulting metric changes.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Tuple

from meshsdg.access_log import ServiceId
from meshsdg.antipatterns import MetricsRow, compute_metrics
from meshsdg.sdg import EdgeKey, ServiceDependencyGraph

logger = logging.getLogger(__name__)


NO_CHANGES = "no changes"


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MetricDelta:
    """Metric rows of one service in the old and the new snapshot"""
    old: MetricsRow
    new: MetricsRow

    @property
    def ais(self) -> int:
        return self.new.ais - self.old.ais

    @property
    def ads(self) -> int:
        return self.new.ads - self.old.ads

    @property
    def acs(self) -> int:
        return self.new.acs - self.old.acs

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.ais, self.ads, self.acs)

    def changed_fields(self) -> List[str]:
        """'name old→new' for every metric that moved, in ais/ads/acs order"""
        parts = []
        for name in ("ais", "ads", "acs"):
            before, after = getattr(self.old, name), getattr(self.new, name)
            if before != after:
                parts.append(f"{name} {before}→{after}")
        return parts


@dataclass(frozen=True)
class SdgDiff:
    """Structural and load differences from an old to a new snapshot"""
    added_nodes: FrozenSet[ServiceId] = frozenset()
    removed_nodes: FrozenSet[ServiceId] = frozenset()
    added_edges: FrozenSet[EdgeKey] = frozenset()
    removed_edges: FrozenSet[EdgeKey] = frozenset()
    weight_changes: Dict[EdgeKey, Tuple[int, int]] = field(default_factory=dict)
    metric_deltas: Dict[ServiceId, MetricDelta] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not (
            self.added_nodes or self.removed_nodes or self.added_edges
            or self.removed_edges or self.weight_changes or self.metric_deltas
        )


# ═══════════════════════════════════════════════════════════════════════════════
# DIFFING
# ═══════════════════════════════════════════════════════════════════════════════

def diff_graphs(old: ServiceDependencyGraph, new: ServiceDependencyGraph) -> SdgDiff:
    """
    Compare two snapshots.

    A service present in only one snapshot appears in added/removed nodes
    and never in metric_deltas. Metric deltas are kept only when a value moved.
    """
    old_keys, new_keys = set(old.weights), set(new.weights)

    weight_changes = {
        key: (old.weights[key], new.weights[key])
        for key in sorted(old_keys & new_keys)
        if old.weights[key] != new.weights[key]
    }

    old_rows = {r.service: r for r in compute_metrics(old)}
    new_rows = {r.service: r for r in compute_metrics(new)}
    metric_deltas = {}
    for service in sorted(old_rows.keys() & new_rows.keys()):
        delta = MetricDelta(old_rows[service], new_rows[service])
        if delta.as_tuple() != (0, 0, 0):
            metric_deltas[service] = delta

    diff = SdgDiff(
        added_nodes=frozenset(new.nodes - old.nodes),
        removed_nodes=frozenset(old.nodes - new.nodes),
        added_edges=frozenset(new_keys - old_keys),
        removed_edges=frozenset(old_keys - new_keys),
        weight_changes=weight_changes,
        metric_deltas=metric_deltas,
    )
    logger.debug(
        "Diff: +%d/-%d nodes, +%d/-%d edges, %d weight changes",
        len(diff.added_nodes), len(diff.removed_nodes),
        len(diff.added_edges), len(diff.removed_edges), len(weight_changes),
    )
    return diff


def _edge_text(key: EdgeKey) -> str:
    return f"{key.source} -> {key.destination} {key.method} {key.endpoint}"


def summarize_diff(d: SdgDiff, top_k: int = 5, relative: bool = False) -> List[str]:
    """
    Deterministic summary lines: node changes, edge changes, the top_k
    largest weight swings, then services whose acs moved.

    Args:
        d: Diff to summarize
        top_k: Number of weight swings to list
        relative: Append the percentage change to weight swing lines
    """
    if d.is_empty:
        return [NO_CHANGES]

    lines = [f"+ node {s}" for s in sorted(d.added_nodes)]
    lines += [f"- node {s}" for s in sorted(d.removed_nodes)]
    lines += [f"+ edge {_edge_text(k)}" for k in sorted(d.added_edges)]
    lines += [f"- edge {_edge_text(k)}" for k in sorted(d.removed_edges)]

    swings = sorted(d.weight_changes.items(), key=lambda kv: (-abs(kv[1][1] - kv[1][0]), kv[0]))
    for key, (before, after) in swings[:top_k]:
        line = f"~ weight {_edge_text(key)}: {before}→{after}"
        if relative:
            line += f" ({(after - before) / before:+.1%})"
        lines.append(line)

    for service, delta in sorted(d.metric_deltas.items()):
        if delta.acs != 0:
            lines.append(f"metrics {service} {', '.join(delta.changed_fields())}")
    return lines


# ═══════════════════════════════════════════════════════════════════════════════
# SERIALIZATION
# ═══════════════════════════════════════════════════════════════════════════════

def diff_to_dict(d: SdgDiff) -> Dict[str, Any]:
    """Diff document with every array sorted"""
    return {
        "added_nodes": [str(s) for s in sorted(d.added_nodes)],
        "removed_nodes": [str(s) for s in sorted(d.removed_nodes)],
        "added_edges": [k.to_dict() for k in sorted(d.added_edges)],
        "removed_edges": [k.to_dict() for k in sorted(d.removed_edges)],
        "weight_changes": [
            {**k.to_dict(), "old": before, "new": after}
            for k, (before, after) in sorted(d.weight_changes.items())
        ],
        "metric_deltas": [
            {
                "service": str(service),
                "ais": [delta.old.ais, delta.new.ais],
                "ads": [delta.old.ads, delta.new.ads],
                "acs": [delta.old.acs, delta.new.acs],
                "delta": list(delta.as_tuple()),
            }
            for service, delta in sorted(d.metric_deltas.items())
        ],
    }


def diff_to_json(d: SdgDiff) -> str:
    return json.dumps(diff_to_dict(d), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
