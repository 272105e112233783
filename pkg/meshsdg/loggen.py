"""
MeshSDG - Synthetic Access-Log Generator
Renders a declared topology into per-service sidecar log files in the
JSON access-log format, deterministically from a seed, and returns a ledger
of exactly what was generated so the pipeline can be checked against it.
"""

import json
import logging
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from meshsdg.access_log import (
    CLUSTER_SUFFIX,
    DEFAULT_NAMESPACE,
    INBOUND_PREFIX,
    LOG_SUFFIX,
    OUTBOUND_PREFIX,
    AccessLogEntry,
    ServiceId,
    format_timestamp,
    normalize_path,
    parse_timestamp,
)
from meshsdg.errors import InputError, InvalidServiceId, InvalidTopology
from meshsdg.sdg import EdgeKey, ServiceDependencyGraph, TimeWindow

logger = logging.getLogger(__name__)


TOPOLOGY_DIR = Path(__file__).parent / "topologies"
SERVICE_PORT = 80
USER_AGENT = "Apache-HttpClient/4.5.13 (Java/1.8.0_242)"


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class CallSpec:
    """`count` calls from source to destination on one endpoint"""
    source: ServiceId
    destination: ServiceId
    endpoint: str
    method: str = "GET"
    count: int = 1
    status_code: int = 200

    @property
    def key(self) -> EdgeKey:
        return EdgeKey(self.source, self.destination, normalize_path(self.endpoint), self.method)

    @property
    def is_self_call(self) -> bool:
        return self.source == self.destination


@dataclass(frozen=True)
class TopologySpec:
    """A declared set of services and calls spread over [start, end)"""
    services: Tuple[ServiceId, ...]
    calls: Tuple[CallSpec, ...]
    start: datetime
    end: datetime
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.start >= self.end:
            raise InvalidTopology(f"topology {self.name!r}: time span start must be before end")
        for call in self.calls:
            if not call.endpoint:
                raise InvalidTopology(f"topology {self.name!r}: call {call.source} -> {call.destination} has no endpoint")
            if call.count < 1:
                raise InvalidTopology(f"topology {self.name!r}: call {call.source} -> {call.destination} has count {call.count}")
            if not 100 <= call.status_code <= 599:
                raise InvalidTopology(f"topology {self.name!r}: status code {call.status_code} outside 100-599")
            if call.is_self_call:
                logger.warning("Topology %s: %s calls itself on %s", self.name, call.source, call.endpoint)

    def all_services(self) -> List[ServiceId]:
        names = set(self.services)
        for call in self.calls:
            names.update((call.source, call.destination))
        return sorted(names)

    @property
    def window(self) -> TimeWindow:
        return TimeWindow(self.start, self.end)

    @property
    def total_calls(self) -> int:
        return sum(c.count for c in self.calls)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TopologySpec":
        """
        Build from the topology JSON document:
        {name, namespace, seed, time_span: {from, to}, services: [...],
         calls: [{source, destination, endpoint, method, count, status_code}]}

        Raises:
            InvalidTopology: on missing keys or invalid values
        """
        try:
            namespace = str(data.get("namespace", DEFAULT_NAMESPACE))
            span = data["time_span"]
            start, end = parse_timestamp(span["from"]), parse_timestamp(span["to"])
            if start is None or end is None:
                raise InvalidTopology(f"unparseable time_span {span!r}")
            services = tuple(ServiceId.parse(s, namespace) for s in data.get("services", []))
            calls = tuple(
                CallSpec(
                    source=ServiceId.parse(c["source"], namespace),
                    destination=ServiceId.parse(c["destination"], namespace),
                    endpoint=str(c["endpoint"]),
                    method=str(c.get("method", "GET")),
                    count=int(c["count"]),
                    status_code=int(c.get("status_code", 200)),
                )
                for c in data["calls"]
            )
            return cls(
                services=services,
                calls=calls,
                start=start,
                end=end,
                seed=int(data.get("seed", 0)),
                name=str(data.get("name", "")),
            )
        except (KeyError, TypeError, ValueError, InvalidServiceId) as e:
            if isinstance(e, InvalidTopology):
                raise
            raise InvalidTopology(f"invalid topology document: {e}") from e


@dataclass
class GenerationLedger:
    """What generate_logs wrote: timestamps of every generated call, per edge"""
    timestamps: Dict[EdgeKey, List[datetime]] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    window: Optional[TimeWindow] = None

    def counts(self) -> Dict[EdgeKey, int]:
        return {key: len(ts) for key, ts in sorted(self.timestamps.items())}

    @property
    def total(self) -> int:
        return sum(len(ts) for ts in self.timestamps.values())

    def count_between(
        self, start: Optional[datetime] = None, end: Optional[datetime] = None
    ) -> Dict[EdgeKey, int]:
        """Per-edge counts restricted to start <= t < end; edges with none are dropped."""
        counts = {}
        for key, stamps in sorted(self.timestamps.items()):
            n = sum(1 for t in stamps if (start is None or t >= start) and (end is None or t < end))
            if n:
                counts[key] = n
        return counts

    def expected_graph(self, window: Optional[TimeWindow] = None) -> ServiceDependencyGraph:
        """The graph an exact pipeline must rebuild from the generated files"""
        return ServiceDependencyGraph((), self.counts(), window)


# ═══════════════════════════════════════════════════════════════════════════════
# LOADING
# ═══════════════════════════════════════════════════════════════════════════════

def bundled_topologies() -> List[str]:
    """Names of the topologies shipped with the package"""
    return sorted(p.stem for p in TOPOLOGY_DIR.glob("*.json"))


def load_topology(path: Union[str, Path]) -> TopologySpec:
    """
    Load a topology from a JSON file path or a bundled topology name
    ('trainticket-v0.2.1').

    Raises:
        InputError: file unreadable
        InvalidTopology: not JSON or invalid content
    """
    candidate = Path(path)
    if not candidate.exists() and (TOPOLOGY_DIR / f"{path}.json").exists():
        candidate = TOPOLOGY_DIR / f"{path}.json"
    try:
        with open(candidate, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read topology {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidTopology(f"topology {path} is not JSON: {e}") from e
    spec = TopologySpec.from_dict(data)
    logger.debug("Loaded topology %s: %d services, %d calls", spec.name or path, len(spec.all_services()), spec.total_calls)
    return spec


# ═══════════════════════════════════════════════════════════════════════════════
# GENERATION
# ═══════════════════════════════════════════════════════════════════════════════

def _pod_ips(services: Iterable[ServiceId]) -> Dict[ServiceId, str]:
    return {s: f"10.244.{i // 250}.{i % 250 + 2}" for i, s in enumerate(sorted(services))}


def _cluster_ips(services: Iterable[ServiceId]) -> Dict[ServiceId, str]:
    return {s: f"10.96.{i // 250}.{i % 250 + 10}" for i, s in enumerate(sorted(services))}


def _records_for_call(
    call: CallSpec,
    when: datetime,
    rng: np.random.Generator,
    pod_ip: Dict[ServiceId, str],
    cluster_ip: Dict[ServiceId, str],
) -> Tuple[AccessLogEntry, AccessLogEntry]:
    """Outbound record for the caller's sidecar and its mirrored inbound record."""
    request_id = str(uuid.UUID(bytes=rng.bytes(16), version=4))
    duration = int(rng.integers(1, 120))
    upstream_time = max(duration - int(rng.integers(0, 3)), 0)
    bytes_sent = int(rng.integers(0, 4096))
    bytes_received = int(rng.integers(0, 1024)) if call.method in ("POST", "PUT", "PATCH") else 0
    caller_port = int(rng.integers(32768, 61000))

    src, dst = call.source, call.destination
    authority = f"{dst.service}:{SERVICE_PORT}"
    upstream = f"{pod_ip[dst]}:{SERVICE_PORT}"
    common = dict(
        start_time=when,
        method=call.method,
        path=call.endpoint,
        protocol="HTTP/1.1",
        response_code=call.status_code,
        duration_ms=duration,
        bytes_sent=bytes_sent,
        bytes_received=bytes_received,
        request_id=request_id,
        authority=authority,
        user_agent=USER_AGENT,
        upstream_service_time=str(upstream_time),
        response_code_details="via_upstream",
    )
    outbound = AccessLogEntry(
        upstream_cluster=f"{OUTBOUND_PREFIX}{SERVICE_PORT}||{dst.service}.{dst.namespace}{CLUSTER_SUFFIX}",
        upstream_host=upstream,
        upstream_local_address=f"{pod_ip[src]}:{caller_port}",
        downstream_local_address=f"{cluster_ip[dst]}:{SERVICE_PORT}",
        downstream_remote_address=f"{pod_ip[src]}:{caller_port + 1}",
        route_name="default",
        **common,
    )
    inbound = AccessLogEntry(
        upstream_cluster=f"{INBOUND_PREFIX}{SERVICE_PORT}||",
        upstream_host=upstream,
        upstream_local_address=f"127.0.0.6:{caller_port}",
        downstream_local_address=upstream,
        downstream_remote_address=f"{pod_ip[src]}:{caller_port}",
        route_name="default",
        requested_server_name=f"outbound_.{SERVICE_PORT}_._.{dst.service}.{dst.namespace}{CLUSTER_SUFFIX}",
        **common,
    )
    return outbound, inbound


def generate_logs(
    spec: TopologySpec,
    out_dir: Union[str, Path],
    mirror_inbound: bool = True,
    seed: Optional[int] = None,
) -> GenerationLedger:
    """
    Write one '<service>.<namespace>.log' file per service that has records.

    Args:
        spec: Topology to render
        out_dir: Directory for the log files (created if missing)
        mirror_inbound: Also write each call's inbound record into the
            destination's file
        seed: Overrides spec.seed

    Returns:
        GenerationLedger with the timestamp of every generated call

    Raises:
        InputError: if out_dir cannot be written
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    services = spec.all_services()
    pod_ip, cluster_ip = _pod_ips(services), _cluster_ips(services)
    span_ms = int((spec.end - spec.start).total_seconds() * 1000)

    ledger = GenerationLedger(window=spec.window)
    # (timestamp, sequence, line) per file; sequence keeps the sort total
    lines: Dict[ServiceId, List[Tuple[datetime, int, str]]] = {}
    sequence = 0

    for call in spec.calls:
        offsets = np.sort(rng.integers(0, max(span_ms, 1), size=call.count))
        stamps = ledger.timestamps.setdefault(call.key, [])
        for offset in offsets:
            when = spec.start + timedelta(milliseconds=int(offset))
            outbound, inbound = _records_for_call(call, when, rng, pod_ip, cluster_ip)
            stamps.append(when)
            lines.setdefault(call.source, []).append((when, sequence, outbound.to_json()))
            sequence += 1
            if mirror_inbound:
                lines.setdefault(call.destination, []).append((when, sequence, inbound.to_json()))
                sequence += 1

    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for service in sorted(lines):
            path = root / f"{service}{LOG_SUFFIX}"
            records = sorted(lines[service], key=lambda r: (r[0], r[1]))
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.writelines(line + "\n" for _, _, line in records)
            ledger.files.append(str(path))
    except OSError as e:
        raise InputError(f"cannot write logs to {out_dir}: {e}") from e

    for stamps in ledger.timestamps.values():
        stamps.sort()
    logger.info(
        "Generated %d calls for %d services into %s (%s..%s)",
        ledger.total, len(lines), root, format_timestamp(spec.start), format_timestamp(spec.end),
    )
    return ledger
