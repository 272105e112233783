"""
MeshSDG - Configuration
Defaults for every tunable, the optional JSON config file, and the validated
AnalyzeConfig the analyze command runs on. Precedence: explicit flags, then
the config file, then DEFAULT_CONFIG.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from meshsdg.access_log import format_timestamp, parse_timestamp
from meshsdg.antipatterns import (
    DEFAULT_DB_PATTERNS,
    DEFAULT_VERSION_PATTERN,
    DatastoreClassifier,
    compile_version_pattern,
)
from meshsdg.errors import ConfigError, InvalidWindow
from meshsdg.report import RenderOptions
from meshsdg.sdg import STATUS_FILTERS, TimeWindow

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════════
# CONFIGURATION - All tunable parameters
# ═══════════════════════════════════════════════════════════════════════════════

DEFAULT_CONFIG = {
    # Input
    'logs_dir': None,
    'manifest': None,
    'from': None,  # RFC3339, inclusive
    'to': None,  # RFC3339, exclusive
    'failure_ratio_limit': 0.25,  # max share of malformed lines
    'status_filter': 'all',  # 'all' | '2xx' | 'non-5xx'
    'collapse_ids': False,  # '/orders/42' -> '/orders/{id}'
    'inbound_check': True,  # compare inbound records with attributed weights
    'jobs': None,  # parallel file parsing; None = available CPUs

    # Output
    'out_dir': 'out',
    'formats': ['dot', 'csv', 'json', 'text'],

    # Detection
    'db_patterns': list(DEFAULT_DB_PATTERNS),
    'version_pattern': DEFAULT_VERSION_PATTERN,
    'top_k': None,  # scaling plan length; None = all candidates
    'summary_top_k': 3,  # bottlenecks listed in the summary

    # Rendering
    'min_penwidth': 1.0,
    'max_penwidth': 5.0,
    'weight_labels': True,
    'endpoint_labels': True,
    'highlight_cycles': True,
    'heatmap': True,
}

FORMATS = ("dot", "csv", "json", "text")

ARTIFACT_NAMES = {
    "dot": "sdg.dot",
    "csv": "metrics.csv",
    "json": "report.json",
    "text": "summary.txt",
}


# ═══════════════════════════════════════════════════════════════════════════════
# CONFIG FILE
# ═══════════════════════════════════════════════════════════════════════════════

def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON config file whose keys are DEFAULT_CONFIG keys.

    Raises:
        ConfigError: unreadable file, not a JSON object, or unknown keys
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(data) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError(f"config file {path} has unknown keys: {', '.join(unknown)}")
    return data


def merge_config(
    file_config: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """DEFAULT_CONFIG updated by the file, then by every override that is not None."""
    merged = dict(DEFAULT_CONFIG)
    merged.update(file_config or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return merged


# ═══════════════════════════════════════════════════════════════════════════════
# ANALYZE CONFIG
# ═══════════════════════════════════════════════════════════════════════════════

def _timestamp(value: Any, key: str) -> Optional[datetime]:
    if value is None or isinstance(value, datetime):
        return value
    parsed = parse_timestamp(value)
    if parsed is None:
        raise ConfigError(f"{key} must be an RFC3339 timestamp, got {value!r}")
    return parsed


@dataclass
class AnalyzeConfig:
    """Validated settings of one analyze run"""
    logs_dir: Path
    out_dir: Path = Path("out")
    manifest: Optional[Path] = None
    start: Optional[datetime] = None
    end: Optional[datetime] = None
    formats: Tuple[str, ...] = FORMATS
    db_patterns: Tuple[str, ...] = DEFAULT_DB_PATTERNS
    version_pattern: str = DEFAULT_VERSION_PATTERN
    collapse_ids: bool = False
    failure_ratio_limit: float = 0.25
    top_k: Optional[int] = None
    summary_top_k: int = 3
    jobs: int = 1
    status_filter: str = "all"
    inbound_check: bool = True
    render: RenderOptions = field(default_factory=RenderOptions)

    @property
    def window(self) -> Optional[TimeWindow]:
        if self.start is None and self.end is None:
            return None
        return TimeWindow(self.start, self.end)

    def classifier(self) -> DatastoreClassifier:
        return DatastoreClassifier(self.db_patterns)

    def validate(self) -> "AnalyzeConfig":
        """
        Raises:
            ConfigError: logs_dir missing, bad formats, limits or counts
            InvalidPattern: a datastore or version pattern does not compile
            InvalidWindow: start after end
        """
        if not self.logs_dir:
            raise ConfigError("no logs directory given (--logs or 'logs_dir' in the config file)")
        if not Path(self.logs_dir).is_dir():
            raise ConfigError(f"logs directory {self.logs_dir} does not exist")
        if not self.formats:
            raise ConfigError("at least one output format is required")
        bad = sorted(set(self.formats) - set(FORMATS))
        if bad:
            raise ConfigError(f"unknown format(s) {', '.join(bad)}; choose from {', '.join(FORMATS)}")
        if not 0.0 <= self.failure_ratio_limit <= 1.0:
            raise ConfigError(f"failure ratio limit must be within [0, 1], got {self.failure_ratio_limit}")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError(f"top-k must be >= 1, got {self.top_k}")
        if self.summary_top_k < 1:
            raise ConfigError(f"summary_top_k must be >= 1, got {self.summary_top_k}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.status_filter not in STATUS_FILTERS:
            raise ConfigError(f"status filter {self.status_filter!r} not one of {', '.join(STATUS_FILTERS)}")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise InvalidWindow(f"--from {format_timestamp(self.start)} is after --to {format_timestamp(self.end)}")
        self.classifier()
        compile_version_pattern(self.version_pattern)
        return self

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "AnalyzeConfig":
        """Build from a merged configuration dictionary and validate it."""
        try:
            formats = values["formats"]
            if isinstance(formats, str):
                formats = [f.strip() for f in formats.split(",") if f.strip()]
            db_patterns = values["db_patterns"]
            if isinstance(db_patterns, str):
                db_patterns = [db_patterns]
            config = cls(
                logs_dir=Path(values["logs_dir"]) if values.get("logs_dir") else None,
                out_dir=Path(values["out_dir"]),
                manifest=Path(values["manifest"]) if values.get("manifest") else None,
                start=_timestamp(values.get("from"), "from"),
                end=_timestamp(values.get("to"), "to"),
                formats=tuple(dict.fromkeys(formats)),
                db_patterns=tuple(db_patterns),
                version_pattern=str(values["version_pattern"]),
                collapse_ids=bool(values["collapse_ids"]),
                failure_ratio_limit=float(values["failure_ratio_limit"]),
                top_k=int(values["top_k"]) if values.get("top_k") is not None else None,
                summary_top_k=int(values["summary_top_k"]),
                jobs=int(values["jobs"]) if values.get("jobs") is not None else (os.cpu_count() or 1),
                status_filter=str(values["status_filter"]),
                inbound_check=bool(values["inbound_check"]),
                render=RenderOptions(
                    min_penwidth=float(values["min_penwidth"]),
                    max_penwidth=float(values["max_penwidth"]),
                    weight_labels=bool(values["weight_labels"]),
                    endpoint_labels=bool(values["endpoint_labels"]),
                    highlight_cycles=bool(values["highlight_cycles"]),
                    heatmap=bool(values["heatmap"]),
                ),
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e
        except ValueError as e:
            if isinstance(e, (ConfigError, InvalidWindow)):
                raise
            raise ConfigError(f"invalid configuration value: {e}") from e
        return config.validate()
