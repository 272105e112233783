"""
Shared builders for the test suite: small hand-made graphs, seeded random
graphs, raw access-log lines and brute-force oracles.
"""

import json
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import floyd_warshall

from meshsdg.access_log import AccessLogEntry, LogSource, ServiceId
from meshsdg.sdg import EdgeKey, ServiceDependencyGraph, TimeWindow

T0 = datetime(2022, 5, 26, 6, 22, 2, 661000, tzinfo=timezone.utc)
ENDPOINTS = ("/api/v1/endpoint", "/api/v2/endpoint", "/api/v1/orders", "/health")
METHODS = ("GET", "POST")


def sid(name: str) -> ServiceId:
    """'a' -> a.default; names with a namespace are kept."""
    return ServiceId(name if "." in name else f"{name}.default")


def graph_from(
    edges: Iterable[Tuple],
    nodes: Iterable[str] = (),
    window: Optional[TimeWindow] = None,
) -> ServiceDependencyGraph:
    """edges: (source, destination, weight[, endpoint[, method]])"""
    weights = {}
    for edge in edges:
        src, dst, weight = edge[:3]
        endpoint = edge[3] if len(edge) > 3 else "/api/v1/endpoint"
        method = edge[4] if len(edge) > 4 else "GET"
        key = EdgeKey(sid(src), sid(dst), endpoint, method)
        weights[key] = weights.get(key, 0) + weight
    return ServiceDependencyGraph([sid(n) for n in nodes], weights, window)


def prototype_graph() -> ServiceDependencyGraph:
    return graph_from([
        ("a-service", "b-service", 10, "/api/v1/endpoint"),
        ("a-service", "c-service", 2, "/api/v1/endpoint"),
        ("b-service", "c-service", 2, "/api/v2/endpoint"),
    ])


def random_graph(
    seed: int,
    max_nodes: int = 8,
    density: float = 0.3,
    self_loops: bool = True,
) -> ServiceDependencyGraph:
    """Seeded random graph of 1..max_nodes services with multi-endpoint edges."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_nodes + 1))
    names = [f"svc-{i}" for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            p = 0.05 if i == j else density
            if (i == j and not self_loops) or rng.random() >= p:
                continue
            for _ in range(int(rng.integers(1, 3))):
                edges.append((
                    names[i], names[j], int(rng.integers(1, 20)),
                    ENDPOINTS[int(rng.integers(0, len(ENDPOINTS)))],
                    METHODS[int(rng.integers(0, len(METHODS)))],
                ))
    return graph_from(edges, nodes=names)


def scaled(g: ServiceDependencyGraph, k: int) -> ServiceDependencyGraph:
    return ServiceDependencyGraph(g.nodes, {key: w * k for key, w in g.weights.items()}, g.window)


def with_edge(g: ServiceDependencyGraph, key: EdgeKey, weight: int = 1) -> ServiceDependencyGraph:
    weights = dict(g.weights)
    weights[key] = weights.get(key, 0) + weight
    return ServiceDependencyGraph(g.nodes, weights, g.window)


# ─── oracles ─────────────────────────────────────────────────────────────────

def mutual_reachability_pairs(g: ServiceDependencyGraph) -> int:
    """Unordered pairs of distinct services reachable both ways (Floyd-Warshall)."""
    nodes = g.sorted_nodes()
    if len(nodes) < 2:
        return 0
    index = {s: i for i, s in enumerate(nodes)}
    adj = np.zeros((len(nodes), len(nodes)))
    for key in g.weights:
        if key.source != key.destination:
            adj[index[key.source], index[key.destination]] = 1
    dist = floyd_warshall(csr_matrix(adj), directed=True, unweighted=True)
    reach = np.isfinite(dist)
    return sum(
        1
        for i in range(len(nodes))
        for j in range(i + 1, len(nodes))
        if reach[i, j] and reach[j, i]
    )


def scan_predecessors(g: ServiceDependencyGraph, s: ServiceId) -> set:
    return {k.source for k in g.weights if k.destination == s and k.source != s}


def scan_successors(g: ServiceDependencyGraph, s: ServiceId) -> set:
    return {k.destination for k in g.weights if k.source == s and k.destination != s}


# ─── access-log records ──────────────────────────────────────────────────────

def outbound_entry(
    destination: ServiceId,
    endpoint: str = "/api/v1/endpoint",
    method: str = "GET",
    when: datetime = T0,
    response_code: int = 200,
) -> AccessLogEntry:
    return AccessLogEntry(
        start_time=when,
        method=method,
        path=endpoint,
        protocol="HTTP/1.1",
        response_code=response_code,
        duration_ms=5,
        bytes_sent=100,
        bytes_received=0,
        request_id="7b1b9a3c-6f40-4c0e-9d47-6a8f0f2d2f11",
        authority=f"{destination.service}:80",
        upstream_cluster=f"outbound|80||{destination.service}.{destination.namespace}.svc.cluster.local",
    )


def inbound_entry(endpoint: str = "/api/v1/endpoint", when: datetime = T0) -> AccessLogEntry:
    entry = outbound_entry(sid("x"), endpoint, when=when)
    return replace(entry, upstream_cluster="inbound|80||")


def entries_for(g: ServiceDependencyGraph, spread_seconds: int = 600) -> List[Tuple[LogSource, AccessLogEntry]]:
    """(source, entry) pairs whose single-pass build reproduces g's edges."""
    pairs = []
    for key, weight in g.weights.items():
        source = LogSource(key.source, f"{key.source}.log")
        for i in range(weight):
            when = T0 + timedelta(seconds=(i * 7) % spread_seconds)
            pairs.append((source, outbound_entry(key.destination, key.endpoint, key.method, when)))
    return pairs


def record(**overrides) -> dict:
    """A default-format outbound JSON record with overrides applied."""
    base = {
        "start_time": "2022-05-26T06:22:02.661Z",
        "upstream_host": "10.1.0.82:12345",
        "downstream_local_address": "10.96.0.20:12345",
        "upstream_transport_failure_reason": None,
        "protocol": "HTTP/1.1",
        "upstream_service_time": "4",
        "authority": "b-service:12345",
        "requested_server_name": None,
        "response_code_details": "via_upstream",
        "connection_termination_details": None,
        "upstream_local_address": "10.1.0.81:44730",
        "downstream_remote_address": "10.1.0.81:37880",
        "path": "/api/v1/endpoint/",
        "bytes_sent": 7,
        "request_id": "4e1d0e1a-7d5b-9b43-b6a6-0e7e8ad4e0d3",
        "bytes_received": 0,
        "route_name": "default",
        "duration": 5,
        "x_forwarded_for": None,
        "response_flags": "-",
        "response_code": 200,
        "method": "GET",
        "upstream_cluster": "outbound|12345||b-service.default.svc.cluster.local",
        "user_agent": "python-requests/2.27.1",
    }
    base.update(overrides)
    return base


def line(**overrides) -> str:
    return json.dumps(record(**overrides))


def write_log(path, lines: Sequence[str]) -> None:
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
