"""Weighted undirected road graph, DIMACS ingestion and Dijkstra primitives."""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

INF = math.inf


class DimacsParseError(ValueError):
    """Raised for malformed DIMACS shortest-path input; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


@dataclass
class RoadGraph:
    """Immutable-after-load undirected graph with positive integer weights.

    ``adj[u]`` maps each neighbor to the edge weight. Parallel edges are
    collapsed to their minimum weight and self-loops are dropped on insert.
    """

    adj: list[dict[int, int]]
    coords: list[tuple[float, float]] | None = field(default=None, repr=False)

    @classmethod
    def empty(cls, n: int) -> "RoadGraph":
        return cls([{} for _ in range(n)])

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, int]]) -> "RoadGraph":
        g = cls.empty(n)
        for u, v, w in edges:
            g._add_edge(u, v, w)
        return g

    def _add_edge(self, u: int, v: int, w: int) -> None:
        if u == v:
            return
        if w <= 0 or w != int(w):
            raise ValueError(f"edge ({u},{v}) weight {w} is not a positive integer")
        old = self.adj[u].get(v)
        if old is None or w < old:
            self.adj[u][v] = w
            self.adj[v][u] = w

    @property
    def vertex_count(self) -> int:
        return len(self.adj)

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def neighbors(self, u: int) -> Iterator[tuple[int, int]]:
        return iter(self.adj[u].items())

    def weight(self, u: int, v: int) -> int | None:
        return self.adj[u].get(v)

    def edges(self) -> Iterator[tuple[int, int, int]]:
        """Each undirected edge once, as ``(u, v, w)`` with ``u < v``."""
        for u, nbrs in enumerate(self.adj):
            for v, w in nbrs.items():
                if u < v:
                    yield u, v, w

    def induced(self, vertices: Iterable[int]) -> tuple["RoadGraph", list[int]]:
        """Subgraph on ``vertices`` with dense local ids; returns (graph, local->global)."""
        order = sorted(vertices)
        local = {v: i for i, v in enumerate(order)}
        sub = RoadGraph.empty(len(order))
        for v in order:
            lv = local[v]
            for u, w in self.adj[v].items():
                lu = local.get(u)
                if lu is not None:
                    sub.adj[lv][lu] = w
        return sub, order


def load_dimacs(source: str | TextIO) -> RoadGraph:
    """Parse a 9th DIMACS challenge ``.gr`` file (text or open handle).

    Arcs are symmetrized; duplicate arcs keep the minimum weight.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    n = None
    graph = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "p":
            if n is not None:
                raise DimacsParseError("duplicate problem line", lineno)
            if len(parts) != 4 or parts[1] != "sp":
                raise DimacsParseError("malformed header, expected 'p sp <n> <m>'", lineno)
            try:
                n = int(parts[2])
                int(parts[3])
            except ValueError:
                raise DimacsParseError("malformed header counts", lineno) from None
            if n <= 0:
                raise DimacsParseError("header vertex count must be positive", lineno)
            graph = RoadGraph.empty(n)
        elif tag == "a":
            if graph is None:
                raise DimacsParseError("arc before problem line", lineno)
            if len(parts) != 4:
                raise DimacsParseError("malformed arc line", lineno)
            try:
                u, v, w = (int(x) for x in parts[1:])
            except ValueError:
                raise DimacsParseError("non-integer arc field", lineno) from None
            for x in (u, v):
                if not 1 <= x <= n:
                    raise DimacsParseError(f"vertex {x} out of range", lineno)
            if w <= 0:
                raise DimacsParseError(f"non-positive weight {w}", lineno)
            graph._add_edge(u - 1, v - 1, w)
        else:
            raise DimacsParseError(f"unknown line type {tag!r}", lineno)
    if graph is None:
        raise DimacsParseError("missing problem line")
    return graph


def load_dimacs_coords(source: str | TextIO, n: int) -> list[tuple[float, float]]:
    """Parse a DIMACS ``.co`` companion file (``v <id> <x> <y>`` lines)."""
    lines = source.splitlines() if isinstance(source, str) else source
    coords: list[tuple[float, float] | None] = [None] * n
    for lineno, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts or parts[0] != "v":
            continue
        try:
            i, x, y = int(parts[1]), float(parts[2]), float(parts[3])
        except (ValueError, IndexError):
            raise DimacsParseError("malformed coordinate line", lineno) from None
        if not 1 <= i <= n:
            raise DimacsParseError(f"vertex {i} out of range", lineno)
        coords[i - 1] = (x, y)
    if any(c is None for c in coords):
        raise DimacsParseError("coordinate file does not cover every vertex")
    return coords  # type: ignore[return-value]


def write_dimacs(graph: RoadGraph, out: TextIO, comment: str | None = None) -> None:
    """Write ``graph`` as a ``.gr`` file, emitting both arc directions."""
    if comment:
        for c in comment.splitlines():
            out.write(f"c {c}\n")
    out.write(f"p sp {graph.vertex_count} {2 * graph.edge_count}\n")
    for u, v, w in graph.edges():
        out.write(f"a {u + 1} {v + 1} {w}\n")
        out.write(f"a {v + 1} {u + 1} {w}\n")


def dijkstra(
    graph: RoadGraph,
    source: int,
    targets: Iterable[int] | None = None,
    radius: float | None = None,
) -> dict[int, float]:
    """Exact shortest distances from ``source``.

    With ``targets`` the search stops once every reachable target is settled
    and unreached targets map to ``INF``. With ``radius`` no vertex farther
    than ``radius`` is settled. With neither, every vertex is reported.
    """
    if not 0 <= source < graph.vertex_count:
        raise IndexError(f"source {source} out of range")
    if radius is not None and radius < 0:
        raise ValueError("radius must be nonnegative")
    pending = set(targets) if targets is not None else None
    dist: dict[int, float] = {}
    best = {source: 0}
    heap = [(0, source)]
    adj = graph.adj
    while heap:
        d, u = heapq.heappop(heap)
        if u in dist:
            continue
        if radius is not None and d > radius:
            break
        dist[u] = d
        if pending is not None:
            pending.discard(u)
            if not pending:
                break
        for v, w in adj[u].items():
            nd = d + w
            if v not in dist and nd < best.get(v, INF):
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    if pending is not None:
        for t in pending:
            dist[t] = INF
    elif radius is None:
        for v in range(graph.vertex_count):
            dist.setdefault(v, INF)
    return dist


def synthetic_graph(n: int, seed: int = 0, max_weight: int = 100) -> RoadGraph:
    """Connected random geometric/grid hybrid with integer weights in ``[1, max_weight]``.

    Vertices sit on a jittered grid; grid neighbours are linked (a few links
    dropped), a spanning tree guarantees connectivity and sparse diagonal
    shortcuts mimic irregular road layouts.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = random.Random(seed)
    side = max(1, math.ceil(math.sqrt(n)))
    coords = [
        ((i % side) + rng.uniform(-0.3, 0.3), (i // side) + rng.uniform(-0.3, 0.3))
        for i in range(n)
    ]

    def length(u: int, v: int) -> int:
        (x1, y1), (x2, y2) = coords[u], coords[v]
        scaled = math.hypot(x1 - x2, y1 - y2) * max_weight / 2.5
        return min(max_weight, max(1, round(scaled * rng.uniform(0.8, 1.2))))

    candidates = []
    for i in range(n):
        r, c = divmod(i, side)
        for dr, dc in ((0, 1), (1, 0)):
            j = (r + dr) * side + (c + dc)
            if c + dc < side and j < n:
                candidates.append((i, j))
        if rng.random() < 0.15:
            dc = rng.choice((-1, 1))
            j = (r + 1) * side + c + dc
            if 0 <= c + dc < side and j < n:
                candidates.append((i, j))
    rng.shuffle(candidates)

    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    g = RoadGraph.empty(n)
    g.coords = coords
    extras = []
    for u, v in candidates:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            g._add_edge(u, v, length(u, v))
        else:
            extras.append((u, v))
    for u, v in extras:
        if rng.random() < 0.8:
            g._add_edge(u, v, length(u, v))
    # stray vertices (only possible when the last grid row is short)
    for v in range(1, n):
        if find(v) != find(0):
            parent[find(v)] = find(0)
            g._add_edge(v, v - 1, length(v, v - 1))
    return g
