"""Multi-source parallel bidirectional search over combined skeleton graphs.

One Dijkstra instance runs per source. Instances record themselves on every
vertex they settle; when two meet, the joined path length is a candidate
distance for their pair. A pair is final once its candidate is no longer
than the sum of both instances' bound distances (the smallest settled
distance among vertices that still have an unsettled neighbour).
"""

from __future__ import annotations

import heapq
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import INF
from .skeleton import SkeletonGraph


class StructuralError(RuntimeError):
    """Index structure is inconsistent (e.g. a dangling external edge)."""


@dataclass
class CombinedGraph:
    """Union of child skeleton graphs plus the external edges joining them."""

    adj: dict[int, dict[int, float]]
    external: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def vertex_count(self) -> int:
        return len(self.adj)

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adj.values()) // 2

    def add_edge(self, u: int, v: int, w: float) -> None:
        self.adj.setdefault(u, {})
        self.adj.setdefault(v, {})
        if w < self.adj[u].get(v, INF):
            self.adj[u][v] = w
            self.adj[v][u] = w


def combine_skeletons(
    children: Sequence[SkeletonGraph], external_edges: Iterable[tuple[int, int, float]]
) -> CombinedGraph:
    owner: dict[int, int] = {}
    for i, sk in enumerate(children):
        for v in sk.vertices():
            if v in owner:
                raise StructuralError(f"vertex {v} appears in two child skeletons")
            owner[v] = i
    g = CombinedGraph({v: {} for v in owner})
    for sk in children:
        for u, v, w in sk.edges():
            g.add_edge(u, v, w)
    seen = set()
    for u, v, w in external_edges:
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        for x in (u, v):
            if x not in owner:
                raise StructuralError(f"external edge endpoint {x} is in no child skeleton")
            if x not in children[owner[x]].borders:
                raise StructuralError(f"external edge endpoint {x} is not a border vertex")
        if owner[u] == owner[v]:
            raise StructuralError(f"external edge ({u},{v}) stays inside one child")
        g.add_edge(u, v, w)
        g.external.append((key[0], key[1], w))
    return g


class DistanceMatrix:
    """Rows are border vertices, columns border and live vertices; +inf by default."""

    def __init__(self, borders: Iterable[int], lives: Iterable[int]):
        self.rows = sorted(set(borders))
        self.columns = sorted(set(self.rows) | set(lives))
        self.values: dict[tuple[int, int], float] = {}

    def __getitem__(self, key: tuple[int, int]) -> float:
        a, b = key
        if a == b:
            return 0
        return self.values.get((min(a, b), max(a, b)), INF)

    def improve(self, a: int, b: int, d: float) -> bool:
        key = (min(a, b), max(a, b))
        if d < self.values.get(key, INF):
            self.values[key] = d
            return True
        return False

    def row(self, b: int) -> dict[int, float]:
        return {c: self[b, c] for c in self.columns}

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(r, c): self[r, c] for r in self.rows for c in self.columns}


@dataclass
class MpbsStats:
    instances: int = 0
    settled_vertices: int = 0
    early_settles: int = 0
    # (candidate distance, BD(source), BD(other)) captured at every bound-based settle
    settle_events: list[tuple[float, float, float]] = field(default_factory=list)


class _Shared:
    def __init__(self, matrix: DistanceMatrix, record: bool):
        self.matrix = matrix
        self.registry: dict[int, list[tuple["SearchInstance", float]]] = {}
        self.lock = threading.Lock()
        self.stats = MpbsStats()
        self.record = record


class SearchInstance:
    """Dijkstra from one source that can stop as soon as its pairs are final."""

    def __init__(self, source: int, graph: CombinedGraph, destinations: Iterable[int], is_border: bool):
        self.source = source
        self.graph = graph
        self.is_border = is_border
        self.pending = set(destinations) - {source}
        self.met: set[int] = set()
        self.processed: dict[int, float] = {}
        self.best: dict[int, float] = {}
        self.queue: list[tuple[float, int]] = []
        self.unprocessed_nbrs: dict[int, int] = {}
        self._bound_heap: list[tuple[float, int]] = []
        self.bound_distance = INF
        self.finished = False
        self.peers: dict[int, "SearchInstance"] = {}

    def start(self, shared: _Shared) -> None:
        self._settle_vertex(self.source, 0, shared)
        self._check_done()

    def step(self, shared: _Shared) -> bool:
        """Settle one vertex; returns False once the instance has terminated."""
        if self.finished:
            return False
        while self.queue:
            d, u = heapq.heappop(self.queue)
            if u not in self.processed:
                self._settle_vertex(u, d, shared)
                break
        self._check_done()
        return not self.finished

    def _check_done(self) -> None:
        if not self.pending or not self.queue:
            self.finished = True

    def _settle_vertex(self, u: int, d: float, shared: _Shared) -> None:
        adj = self.graph.adj[u]
        self.processed[u] = d
        shared.stats.settled_vertices += 1
        free = 0
        for v in adj:
            if v in self.processed:
                self.unprocessed_nbrs[v] -= 1
            else:
                free += 1
        self.unprocessed_nbrs[u] = free
        if free:
            heapq.heappush(self._bound_heap, (d, u))
        previous_bd = self.bound_distance
        self._refresh_bound()

        visitors = shared.registry.setdefault(u, [])
        for other, od in visitors:
            self._meet(other, d + od, shared)
        visitors.append((self, d))

        if self.bound_distance > previous_bd:
            for j in list(self.met & self.pending):
                self._try_settle(self.peers[j], shared)

        for v, w in adj.items():
            if v not in self.processed:
                nd = d + w
                if nd < self.best.get(v, INF):
                    self.best[v] = nd
                    heapq.heappush(self.queue, (nd, v))

    def _refresh_bound(self) -> None:
        heap = self._bound_heap
        while heap and self.unprocessed_nbrs[heap[0][1]] == 0:
            heapq.heappop(heap)
        self.bound_distance = heap[0][0] if heap else INF

    def _meet(self, other: "SearchInstance", length: float, shared: _Shared) -> None:
        if not (self.is_border or other.is_border):
            return
        shared.matrix.improve(self.source, other.source, length)
        j = other.source
        if j in self.pending:
            self.met.add(j)
            self._try_settle(other, shared)
        elif self.source in other.pending:
            other.met.add(self.source)
            other._try_settle(self, shared)

    def _try_settle(self, other: "SearchInstance", shared: _Shared) -> None:
        dm = shared.matrix[self.source, other.source]
        if dm <= self.bound_distance + other.bound_distance:
            if shared.record:
                shared.stats.settle_events.append((dm, self.bound_distance, other.bound_distance))
            shared.stats.early_settles += 1
            self.pending.discard(other.source)
            other.pending.discard(self.source)
            if not other.pending:
                other.finished = True


def mpbs(
    graph: CombinedGraph,
    borders: Iterable[int],
    lives: Iterable[int] = (),
    mode: str = "sequential",
    order: Sequence[int] | None = None,
    workers: int = 4,
    record: bool = False,
) -> DistanceMatrix:
    """Exact distances from every border to every border and live vertex.

    ``mode`` is ``"sequential"`` (round robin, one settle per instance per
    turn), ``"serial"`` (each instance runs to completion, in ``order``) or
    ``"threaded"`` (a worker pool steps instances concurrently; every step
    holds the shared lock, so registry reads, matrix updates and bound
    distances are always mutually consistent).
    """
    borders = set(borders)
    lives = set(lives) - borders
    matrix = DistanceMatrix(borders, lives)
    shared = _Shared(matrix, record)
    instances: dict[int, SearchInstance] = {}
    for b in sorted(borders):
        instances[b] = SearchInstance(b, graph, borders | lives, True)
    for v in sorted(lives):
        instances[v] = SearchInstance(v, graph, borders, False)
    for inst in instances.values():
        inst.peers = instances
        if inst.source not in graph.adj:
            graph.adj[inst.source] = {}
    shared.stats.instances = len(instances)
    sequence = [instances[s] for s in (order if order is not None else sorted(instances))]
    for inst in sequence:
        inst.start(shared)

    if mode == "sequential":
        ring = deque(i for i in sequence if not i.finished)
        while ring:
            inst = ring.popleft()
            if inst.step(shared):
                ring.append(inst)
    elif mode == "serial":
        for inst in sequence:
            while inst.step(shared):
                pass
    elif mode == "threaded":
        ring = deque(i for i in sequence if not i.finished)

        def worker() -> None:
            while True:
                with shared.lock:
                    if not ring:
                        return
                    inst = ring.popleft()
                    alive = inst.step(shared)
                    if alive:
                        ring.append(inst)

        threads = [threading.Thread(target=worker) for _ in range(max(1, workers))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    matrix.stats = shared.stats  # type: ignore[attr-defined]
    return matrix


def run_instance(inst: SearchInstance, shared: _Shared) -> None:
    """Drive a single started instance until it terminates."""
    while inst.step(shared):
        pass
