"""
MeshSDG - Access Log Module
Parses the JSON access logs written by each service's Istio/Envoy sidecar,
classifies request direction and normalizes service identities and endpoints.

The caller of a request is never named inside the record; it is the owner of
the sidecar that wrote the file (LogSource).
"""

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from meshsdg.errors import InputError, InvalidServiceId, InvalidWindow

logger = logging.getLogger(__name__)


CLUSTER_SUFFIX = ".svc.cluster.local"
DEFAULT_NAMESPACE = "default"
OUTBOUND_PREFIX = "outbound|"
INBOUND_PREFIX = "inbound|"
ID_PLACEHOLDER = "{id}"
LOG_SUFFIX = ".log"

_SERVICE_ID = re.compile(r"^[A-Za-z0-9_-]+\.[A-Za-z0-9_-]+$")
_NUMERIC_SEGMENT = re.compile(r"^[0-9]+$")
_UUID_SEGMENT = re.compile(
    r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)
# date, time, optional fraction, optional Z or offset (none means UTC)
_RFC3339 = re.compile(
    r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})?$"
)


# ═══════════════════════════════════════════════════════════════════════════════
# DATA STRUCTURES
# ═══════════════════════════════════════════════════════════════════════════════

class Direction(str, Enum):
    """Request direction as seen by the sidecar that logged it"""
    INBOUND = "inbound"
    OUTBOUND = "outbound"
    UNKNOWN = "unknown"


@dataclass(frozen=True, order=True)
class ServiceId:
    """
    Stable service identity '<service>.<namespace>' (the service DNS name
    without the cluster suffix). Pod IPs are ephemeral and never used.
    """
    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not _SERVICE_ID.match(self.name):
            raise InvalidServiceId(
                f"invalid service id {self.name!r}: expected '<service>.<namespace>'"
            )

    @property
    def service(self) -> str:
        return self.name.split(".", 1)[0]

    @property
    def namespace(self) -> str:
        return self.name.split(".", 1)[1]

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str, default_namespace: str = DEFAULT_NAMESPACE) -> "ServiceId":
        """
        Normalize a cluster host, authority or file stem into a ServiceId.

        Accepts 'b-service.default.svc.cluster.local', 'b-service.default',
        'b-service:12345' (namespace taken from default_namespace) and
        cluster strings carrying 'outbound|port||' fragments.
        """
        host = (text or "").strip()
        if "|" in host:
            host = host.rsplit("|", 1)[-1]
        if ":" in host:
            host = host.split(":", 1)[0]
        if host.endswith(CLUSTER_SUFFIX):
            host = host[: -len(CLUSTER_SUFFIX)]
        elif host.endswith(".svc"):
            host = host[: -len(".svc")]
        if not host:
            raise InvalidServiceId(f"cannot derive a service id from {text!r}")
        if "." not in host:
            host = f"{host}.{default_namespace}"
        return cls(host)


@dataclass(frozen=True)
class LogSource:
    """Provenance of a log file: the sidecar owner and the file path"""
    service: ServiceId
    file: str


@dataclass(frozen=True)
class AccessLogEntry:
    """One parsed sidecar access-log record (every field of the default JSON format)"""
    start_time: datetime
    method: str
    path: str
    protocol: str
    response_code: int
    duration_ms: int
    bytes_sent: int
    bytes_received: int
    request_id: str
    authority: str
    upstream_cluster: str
    upstream_host: Optional[str] = None
    upstream_local_address: Optional[str] = None
    downstream_local_address: Optional[str] = None
    downstream_remote_address: Optional[str] = None
    response_flags: str = "-"
    user_agent: Optional[str] = None
    route_name: Optional[str] = None
    upstream_service_time: Optional[str] = None
    requested_server_name: Optional[str] = None
    response_code_details: Optional[str] = None
    connection_termination_details: Optional[str] = None
    upstream_transport_failure_reason: Optional[str] = None
    x_forwarded_for: Optional[str] = None

    def to_record(self) -> Dict[str, Any]:
        """Serialize back to the sidecar's JSON keys, in the sidecar default field order."""
        return {
            "start_time": format_timestamp(self.start_time),
            "upstream_host": self.upstream_host,
            "downstream_local_address": self.downstream_local_address,
            "upstream_transport_failure_reason": self.upstream_transport_failure_reason,
            "protocol": self.protocol,
            "upstream_service_time": self.upstream_service_time,
            "authority": self.authority,
            "requested_server_name": self.requested_server_name,
            "response_code_details": self.response_code_details,
            "connection_termination_details": self.connection_termination_details,
            "upstream_local_address": self.upstream_local_address,
            "downstream_remote_address": self.downstream_remote_address,
            "path": self.path,
            "bytes_sent": self.bytes_sent,
            "request_id": self.request_id,
            "bytes_received": self.bytes_received,
            "route_name": self.route_name,
            "duration": self.duration_ms,
            "x_forwarded_for": self.x_forwarded_for,
            "response_flags": self.response_flags,
            "response_code": self.response_code,
            "method": self.method,
            "upstream_cluster": self.upstream_cluster,
            "user_agent": self.user_agent,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())


@dataclass(frozen=True)
class ParseFailure:
    """A line that could not be turned into an AccessLogEntry"""
    reason: str
    file: str = ""
    line_number: int = 0


@dataclass
class FileParseResult:
    """Entries and failures from one sidecar log file"""
    source: LogSource
    entries: List[AccessLogEntry] = field(default_factory=list)
    failures: List[ParseFailure] = field(default_factory=list)

    @property
    def total_lines(self) -> int:
        """Non-empty lines seen; always entries + failures."""
        return len(self.entries) + len(self.failures)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row; file is None for a declared service without logs"""
    service: ServiceId
    file: Optional[str] = None


# ═══════════════════════════════════════════════════════════════════════════════
# TIMESTAMPS
# ═══════════════════════════════════════════════════════════════════════════════

def parse_timestamp(value: Any) -> Optional[datetime]:
    """
    Parse an RFC3339 timestamp ('2022-05-26T06:22:02.661Z') into an aware UTC
    datetime. Returns None when the value is missing or unparseable.
    """
    # pandas also accepts "now", bare years and US dates; require RFC3339 shape
    if not isinstance(value, str) or not _RFC3339.match(value.strip()):
        return None
    try:
        ts = pd.Timestamp(value.strip())
    except (ValueError, TypeError, OverflowError):
        return None
    if pd.isna(ts):
        return None
    ts = ts.tz_localize("UTC") if ts.tzinfo is None else ts.tz_convert("UTC")
    return ts.to_pydatetime()


def format_timestamp(value: datetime) -> str:
    """RFC3339 with millisecond precision and a 'Z' suffix."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    value = value.astimezone(timezone.utc)
    return value.strftime("%Y-%m-%dT%H:%M:%S.") + f"{value.microsecond // 1000:03d}Z"


# ═══════════════════════════════════════════════════════════════════════════════
# LINE PARSING
# ═══════════════════════════════════════════════════════════════════════════════

def _optional_str(record: Dict[str, Any], key: str) -> Optional[str]:
    value = record.get(key)
    if value is None:
        return None
    return str(value)


def _int_field(record: Dict[str, Any], key: str, default: int = 0) -> int:
    value = record.get(key)
    if value is None or value == "-":
        return default
    if isinstance(value, bool):
        raise ValueError(f"{key} is not an integer")
    number = int(value)
    if number < 0:
        raise ValueError(f"{key} is negative")
    return number


def parse_line(line: str, source: LogSource, line_number: int = 0) -> Union[AccessLogEntry, ParseFailure]:
    """
    Parse one JSON-per-line access-log record.

    Args:
        line: Raw text of the line
        source: The sidecar file the line came from
        line_number: 1-based position, recorded on failures

    Returns:
        AccessLogEntry, or ParseFailure for non-JSON lines, a missing
        upstream_cluster, an unparseable start_time or out-of-range numbers.
        Unknown keys are ignored.
    """
    text = line.strip() if isinstance(line, str) else ""

    def failure(reason: str) -> ParseFailure:
        return ParseFailure(reason=reason, file=source.file, line_number=line_number)

    if not text:
        return failure("empty line")
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        return failure(f"not JSON: {e.msg}")
    if not isinstance(record, dict):
        return failure("not a JSON object")

    cluster = record.get("upstream_cluster")
    if not isinstance(cluster, str) or not cluster.strip():
        return failure("missing upstream_cluster")

    start_time = parse_timestamp(record.get("start_time"))
    if start_time is None:
        return failure("unparseable start_time")

    try:
        response_code = _int_field(record, "response_code")
        duration_ms = _int_field(record, "duration")
        bytes_sent = _int_field(record, "bytes_sent")
        bytes_received = _int_field(record, "bytes_received")
    except (TypeError, ValueError) as e:
        return failure(f"bad numeric field: {e}")
    if not 100 <= response_code <= 599:
        return failure(f"response_code {response_code} outside 100-599")

    return AccessLogEntry(
        start_time=start_time,
        method=_optional_str(record, "method") or "-",
        path=_optional_str(record, "path") or "-",
        protocol=_optional_str(record, "protocol") or "-",
        response_code=response_code,
        duration_ms=duration_ms,
        bytes_sent=bytes_sent,
        bytes_received=bytes_received,
        request_id=_optional_str(record, "request_id") or "-",
        authority=_optional_str(record, "authority") or "-",
        upstream_cluster=cluster.strip(),
        upstream_host=_optional_str(record, "upstream_host"),
        upstream_local_address=_optional_str(record, "upstream_local_address"),
        downstream_local_address=_optional_str(record, "downstream_local_address"),
        downstream_remote_address=_optional_str(record, "downstream_remote_address"),
        response_flags=_optional_str(record, "response_flags") or "-",
        user_agent=_optional_str(record, "user_agent"),
        route_name=_optional_str(record, "route_name"),
        upstream_service_time=_optional_str(record, "upstream_service_time"),
        requested_server_name=_optional_str(record, "requested_server_name"),
        response_code_details=_optional_str(record, "response_code_details"),
        connection_termination_details=_optional_str(record, "connection_termination_details"),
        upstream_transport_failure_reason=_optional_str(record, "upstream_transport_failure_reason"),
        x_forwarded_for=_optional_str(record, "x_forwarded_for"),
    )


def classify_direction(entry: AccessLogEntry) -> Direction:
    """Direction is decided by the Envoy cluster-name prefix alone."""
    if entry.upstream_cluster.startswith(OUTBOUND_PREFIX):
        return Direction.OUTBOUND
    if entry.upstream_cluster.startswith(INBOUND_PREFIX):
        return Direction.INBOUND
    return Direction.UNKNOWN


def destination_service(entry: AccessLogEntry, default_namespace: str = DEFAULT_NAMESPACE) -> Optional[ServiceId]:
    """
    Upstream service of an outbound entry.

    Uses the 4th pipe-delimited segment of upstream_cluster
    ('outbound|12345||b-service.default.svc.cluster.local' -> b-service.default);
    when that segment is empty, falls back to the authority with the port
    stripped and default_namespace appended. None when neither resolves.
    """
    if classify_direction(entry) is not Direction.OUTBOUND:
        return None
    segments = entry.upstream_cluster.split("|")
    host = segments[3].strip() if len(segments) > 3 else ""
    for candidate in (host, entry.authority):
        if not candidate or candidate == "-":
            continue
        try:
            return ServiceId.parse(candidate, default_namespace)
        except InvalidServiceId:
            logger.debug("Unresolvable upstream %r in %r", candidate, entry.upstream_cluster)
    return None


def normalize_path(path: str, collapse_ids: bool = False) -> str:
    """
    Endpoint label for a request path: query string removed, trailing slash
    kept. With collapse_ids, numeric and UUID segments become '{id}'.
    """
    endpoint = path.split("?", 1)[0] or "/"
    if not collapse_ids:
        return endpoint
    segments = [
        ID_PLACEHOLDER if (_NUMERIC_SEGMENT.match(s) or _UUID_SEGMENT.match(s)) else s
        for s in endpoint.split("/")
    ]
    return "/".join(segments)


def filter_window(
    entries: Sequence[AccessLogEntry],
    start: Optional[datetime] = None,
    end: Optional[datetime] = None,
) -> List[AccessLogEntry]:
    """
    Keep entries with start <= start_time < end. A missing bound is unbounded.

    Raises:
        InvalidWindow: if start > end
    """
    if start is not None and end is not None and start > end:
        raise InvalidWindow(f"window start {format_timestamp(start)} is after end {format_timestamp(end)}")
    return [
        e for e in entries
        if (start is None or e.start_time >= start) and (end is None or e.start_time < end)
    ]


# ═══════════════════════════════════════════════════════════════════════════════
# FILES, SOURCES AND MANIFESTS
# ═══════════════════════════════════════════════════════════════════════════════

def parse_file(source: LogSource) -> FileParseResult:
    """
    Parse every non-empty line of a sidecar log file. Malformed lines are
    collected as failures; the file is never aborted.

    Raises:
        InputError: if the file cannot be read
    """
    result = FileParseResult(source=source)
    try:
        with open(source.file, "r", encoding="utf-8", errors="replace") as f:
            for line_number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                parsed = parse_line(line, source, line_number)
                if isinstance(parsed, ParseFailure):
                    result.failures.append(parsed)
                else:
                    result.entries.append(parsed)
    except OSError as e:
        raise InputError(f"cannot read log file {source.file}: {e}") from e

    if result.failures:
        logger.warning(
            "%s: skipped %d of %d lines (first: line %d, %s)",
            source.file, len(result.failures), result.total_lines,
            result.failures[0].line_number, result.failures[0].reason,
        )
    logger.debug("%s: %d entries for %s", source.file, len(result.entries), source.service)
    return result


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """
    Load a manifest: a JSON array of {"file": ..., "service": ...}.
    "file" may be omitted to declare a service that wrote no logs.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read manifest {path}: {e}") from e
    if not isinstance(data, list):
        raise InputError(f"manifest {path} must be a JSON array")

    entries = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "service" not in item:
            raise InputError(f"manifest {path} entry {i} needs a 'service' key")
        try:
            service = ServiceId.parse(str(item["service"]))
        except InvalidServiceId as e:
            raise InputError(f"manifest {path} entry {i}: {e}") from e
        file = item.get("file")
        entries.append(ManifestEntry(service=service, file=str(file) if file else None))
    return entries


def discover_sources(
    logs_dir: Union[str, Path],
    manifest: Optional[Iterable[ManifestEntry]] = None,
    default_namespace: str = DEFAULT_NAMESPACE,
) -> List[LogSource]:
    """
    Map the log files of a directory to the sidecars that wrote them.

    Files named '<service>.<namespace>.log' are attributed by name; manifest
    entries override the convention (and may name files with any suffix).
    Sources are returned sorted by file path.
    """
    root = Path(logs_dir)
    if not root.is_dir():
        raise InputError(f"logs directory {logs_dir} does not exist")

    by_file: Dict[str, LogSource] = {}
    for path in sorted(root.iterdir()):
        if not path.is_file() or not path.name.endswith(LOG_SUFFIX):
            continue
        stem = path.name[: -len(LOG_SUFFIX)]
        try:
            service = ServiceId.parse(stem, default_namespace)
        except InvalidServiceId:
            logger.warning("Ignoring %s: file name is not '<service>.<namespace>.log'", path.name)
            continue
        by_file[str(path)] = LogSource(service=service, file=str(path))

    for item in manifest or ():
        if item.file is None:
            continue
        path = Path(item.file)
        if not path.is_absolute():
            path = root / path
        if not path.is_file():
            raise InputError(f"manifest names missing file {item.file}")
        by_file[str(path)] = LogSource(service=item.service, file=str(path))

    return [by_file[k] for k in sorted(by_file)]
