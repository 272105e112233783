"""
MeshSDG - Scaling Plan
Ranks the stateless services to scale out first: the most depended-upon
services lead, heavier inbound traffic breaks ties, and the service with the
highest criticality is flagged to be detangled before it is replicated.
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from meshsdg.access_log import ServiceId
from meshsdg.antipatterns import DatastoreClassifier, MetricsRow
from meshsdg.sdg import ServiceDependencyGraph

logger = logging.getLogger(__name__)


PLAN_COLUMNS = ["rank", "service", "ais", "ads", "acs", "inbound_weight", "detangle_first", "rationale"]


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ScalingEntry:
    """One ranked service of a scaling plan"""
    service: ServiceId
    rank: int
    ais: int
    ads: int
    acs: int
    inbound_weight: int
    detangle_first: bool
    rationale: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rank": self.rank,
            "service": str(self.service),
            "ais": self.ais,
            "ads": self.ads,
            "acs": self.acs,
            "inbound_weight": self.inbound_weight,
            "detangle_first": self.detangle_first,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScalingEntry":
        return cls(
            service=ServiceId(str(data["service"])),
            rank=int(data["rank"]),
            ais=int(data["ais"]),
            ads=int(data["ads"]),
            acs=int(data["acs"]),
            inbound_weight=int(data["inbound_weight"]),
            detangle_first=bool(data["detangle_first"]),
            rationale=str(data.get("rationale", "")),
        )


@dataclass(frozen=True)
class ScalingPlan:
    """Ordered scaling entries; ranks run 1..n without gaps"""
    entries: tuple = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def services(self) -> List[ServiceId]:
        return [e.service for e in self.entries]

    def to_records(self) -> List[Dict[str, Any]]:
        return [e.to_dict() for e in self.entries]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2, sort_keys=True) + "\n"

    def to_frame(self) -> pd.DataFrame:
        """Get the plan as a DataFrame"""
        if not self.entries:
            return pd.DataFrame(columns=PLAN_COLUMNS)
        return pd.DataFrame(self.to_records(), columns=PLAN_COLUMNS)

    def to_text(self) -> str:
        """Aligned plain-text table; 'no services to scale' when empty"""
        if not self.entries:
            return "no services to scale\n"
        frame = self.to_frame()
        frame["detangle_first"] = frame["detangle_first"].map({True: "yes", False: "no"})
        lines = frame.to_string(index=False, justify="left").splitlines()
        return "\n".join(line.rstrip() for line in lines) + "\n"

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]]) -> "ScalingPlan":
        return cls(tuple(ScalingEntry.from_dict(r) for r in records))


# ═══════════════════════════════════════════════════════════════════════════════
# PLANNING
# ═══════════════════════════════════════════════════════════════════════════════

def _rationale(ais: int, ads: int, inbound: int, detangle: bool, max_acs: int) -> str:
    text = f"{ais} calling services, {inbound} inbound calls, depends on {ads}"
    if detangle:
        text += f"; highest acs {max_acs}, reduce tanglement before scaling"
    return text


def build_scaling_plan(
    g: ServiceDependencyGraph,
    rows: Sequence[MetricsRow],
    classifier: Optional[DatastoreClassifier] = None,
    top_k: Optional[int] = None,
) -> ScalingPlan:
    """
    Rank scale-out candidates.

    Args:
        g: Graph the rows were computed on (supplies inbound weights)
        rows: compute_metrics(g)
        classifier: Datastore classifier; datastores are never candidates
        top_k: Keep only the first top_k entries

    Returns:
        ScalingPlan ordered by (ais desc, inbound_weight desc, ads desc, name).
        Ingress services (ais 0) are excluded. detangle_first marks the
        candidates whose acs equals the maximum among all candidates.
    """
    classifier = classifier or DatastoreClassifier()
    candidates = [
        (row, g.inbound_weight(row.service))
        for row in rows
        if row.ais > 0 and not classifier.is_datastore(row.service)
    ]
    candidates.sort(key=lambda c: (-c[0].ais, -c[1], -c[0].ads, c[0].service))
    max_acs = max((row.acs for row, _ in candidates), default=0)

    if top_k is not None:
        candidates = candidates[:top_k]

    entries = []
    for rank, (row, inbound) in enumerate(candidates, 1):
        detangle = row.acs == max_acs
        entries.append(ScalingEntry(
            service=row.service,
            rank=rank,
            ais=row.ais,
            ads=row.ads,
            acs=row.acs,
            inbound_weight=inbound,
            detangle_first=detangle,
            rationale=_rationale(row.ais, row.ads, inbound, detangle, max_acs),
        ))

    logger.debug("Scaling plan: %d candidates", len(entries))
    return ScalingPlan(tuple(entries))
