"""Ground truth: network-expansion kNN and brute-force distances on the raw graph."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping

from .graph import INF, RoadGraph


@dataclass
class OracleResult:
    neighbors: list[tuple[int, float]] = field(default_factory=list)
    settled: int = 0
    partial: bool = False


def _objects(assignments: Mapping[int, object], v: int):
    bucket = assignments.get(v)
    if not bucket:
        return ()
    return bucket.items() if isinstance(bucket, Mapping) else bucket


def ine_knn(graph: RoadGraph, assignments: Mapping[int, object], v_q: int, k: int) -> OracleResult:
    """Dijkstra from ``v_q`` scoring each settled vertex's objects at distance + residual.

    ``assignments`` maps a vertex to ``{obj: residual}`` or ``[(obj, residual)]``.
    Stops once k candidates are held and the next vertex is strictly farther
    than the k-th, so equal-distance objects are still ranked by id.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    found: list[tuple[float, int]] = []
    seen = set()
    heap = [(0, v_q)]
    settled = 0
    while heap:
        d, u = heapq.heappop(heap)
        if u in seen:
            continue
        if len(found) >= k:
            found.sort()
            del found[k:]
            if found[-1][0] < d:
                break
        seen.add(u)
        settled += 1
        for obj, delta in _objects(assignments, u):
            found.append((d + delta, obj))
        for v, w in graph.adj[u].items():
            if v not in seen:
                heapq.heappush(heap, (d + w, v))
    found.sort()
    top = found[:k]
    return OracleResult([(o, d) for d, o in top], settled, len(top) < k)


def exhaustive_knn(graph: RoadGraph, assignments: Mapping[int, object], v_q: int, k: int) -> list[tuple[int, float]]:
    """Score every object from a complete single-source run, then sort."""
    dist = {v_q: 0}
    heap = [(0, v_q)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in graph.adj[u].items():
            if d + w < dist.get(v, INF):
                dist[v] = d + w
                heapq.heappush(heap, (d + w, v))
    scored = [
        (dist[v] + delta, obj)
        for v in assignments
        if v in dist
        for obj, delta in _objects(assignments, v)
    ]
    scored.sort()
    return [(o, d) for d, o in scored[:k]]


def brute_sd(graph: RoadGraph, a: int, b: int) -> float:
    if a == b:
        return 0
    dist = {a: 0}
    heap = [(0, a)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u == b:
            return d
        if u in done:
            continue
        done.add(u)
        for v, w in graph.adj[u].items():
            if d + w < dist.get(v, INF):
                dist[v] = d + w
                heapq.heappush(heap, (d + w, v))
    return INF


def bellman_ford(graph: RoadGraph, source: int) -> list[float]:
    dist = [INF] * graph.vertex_count
    dist[source] = 0
    edges = list(graph.edges())
    for _ in range(graph.vertex_count - 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
            if dist[v] + w < dist[u]:
                dist[u] = dist[v] + w
                changed = True
        if not changed:
            break
    return dist
