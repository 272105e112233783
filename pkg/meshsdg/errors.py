"""
MeshSDG - Error Types
All library failures derive from MeshSdgError so the CLI can map them to exit codes.
"""

from typing import Optional


class MeshSdgError(Exception):
    """Base class for every error raised by meshsdg."""


class InvalidServiceId(MeshSdgError, ValueError):
    """A service identity could not be normalized to '<service>.<namespace>'."""


class InvalidWindow(MeshSdgError, ValueError):
    """Time window with from > to."""


class WindowMismatch(MeshSdgError):
    """Two graphs with disjoint windows were merged in strict mode."""


class UnknownService(MeshSdgError, KeyError):
    """Graph query for a service that is not a node."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else "unknown service"


class InvalidPattern(MeshSdgError, ValueError):
    """A datastore or version pattern failed to compile."""


class InvalidTopology(MeshSdgError, ValueError):
    """Generator topology violates its invariants."""


class InvalidReport(MeshSdgError, ValueError):
    """A report document is unreadable or structurally invalid."""


class SchemaMismatch(InvalidReport):
    """A report document carries an unsupported schema_version."""


class ConfigError(MeshSdgError, ValueError):
    """Invalid analyze configuration or config file."""


class InputError(MeshSdgError):
    """Missing log directory, unreadable log file or manifest."""


class FailureRatioExceeded(MeshSdgError):
    """Too many malformed lines across the parsed corpus."""

    def __init__(self, failures: int, total: int, limit: float, message: Optional[str] = None):
        self.failures = failures
        self.total = total
        self.limit = limit
        ratio = failures / total if total else 0.0
        super().__init__(
            message
            or f"{failures} of {total} lines could not be parsed "
               f"(ratio {ratio:.2f} exceeds limit {limit:.2f})"
        )
