"""Continuous kNN over the active skeletons: query preprocessing, initial and incremental rounds."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable

from .graph import INF
from .index import OdinIndex


@dataclass(frozen=True)
class Query:
    query_vertex: int
    k: int
    query_id: int = 0

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be positive")


class KnnHeap:
    """Bounded max-heap of ``(distance, object id)``; the top is the worst kept entry."""

    def __init__(self, k: int):
        self.k = k
        self._h: list[tuple[float, int]] = []
        self.ops = 0

    def __len__(self) -> int:
        return len(self._h)

    @property
    def full(self) -> bool:
        return len(self._h) >= self.k

    @property
    def top(self) -> tuple[float, int]:
        d, o = self._h[0]
        return -d, -o

    def offer(self, dist: float, obj: int) -> bool:
        key = (-dist, -obj)
        if len(self._h) < self.k:
            heapq.heappush(self._h, key)
            self.ops += 1
            return True
        if key > self._h[0]:  # (dist, obj) strictly below the top
            heapq.heapreplace(self._h, key)
            self.ops += 1
            return True
        return False

    def sorted(self) -> list[tuple[int, float]]:
        return [(-o, -d) for d, o in sorted(self._h, reverse=True)]


@dataclass
class QueryOverlay:
    """Transient edges from the query vertex into its hosting active skeleton."""

    query_vertex: int
    host: int
    case: str  # "border", "live" or "plain"
    edges: dict[int, float]
    stamp: tuple

    def __len__(self) -> int:
        return len(self.edges)


@dataclass
class Counters:
    borders_settled: int = 0
    lives_settled: int = 0
    heap_ops: int = 0
    # vertices settled by the resumed expansion of an incremental round
    expansion_settles: int = 0
    seeded_relaxers: int = 0
    derived_lives: int = 0
    pure_live_relaxations: int = 0

    @property
    def settled(self) -> int:
        return self.borders_settled + self.lives_settled


@dataclass
class QueryState:
    query: Query
    dist: dict[int, float] = field(default_factory=dict)
    # border -> stamp under which all its neighbours were known
    accomplished: dict[int, tuple] = field(default_factory=dict)
    contributed: dict[int, list[int]] = field(default_factory=dict)
    candidate_nodes: set[int] = field(default_factory=set)
    overlay: QueryOverlay | None = None
    rows: "BranchRows | None" = None
    round: int = 0
    result: list[tuple[int, float]] = field(default_factory=list)
    partial: bool = False
    counters: Counters = field(default_factory=Counters)
    # (top distance, head distance) at early exit; None when the queue drained
    exit_gap: tuple[float, float] | None = None
    trace: list[tuple[int, float]] | None = None


class BranchRows:
    """In-subgraph distances from one vertex, per node on its root-ward branch.

    Every value is a shortest distance inside a static subgraph, so entries
    never expire; a changed live set or a new hosting node only adds work for
    the vertices not seen before.
    """

    def __init__(self, index: OdinIndex, v: int):
        self.index = index
        self.v = v
        self.leaf = index.tree.leaf_index[v]
        # node -> distances to every child border (every vertex, for the leaf)
        self.rows: dict[int, dict[int, float]] = {}
        self.memo: dict[tuple[int, int], float] = {}

    def row(self, x: int) -> dict[int, float]:
        r = self.rows.get(x)
        if r is None:
            r = self.rows[x] = self._compute(x)
        return r

    def _compute(self, x: int) -> dict[int, float]:
        index, tree, v = self.index, self.index.tree, self.v
        if x == self.leaf:
            return index.tables.row(x, v, index.tables.order[x])
        below = tree.child_toward(x, v)
        below_row = self.row(below)
        below_borders = tree[below].borders
        first = [(b, below_row[b]) for b in below_borders if b != v]
        if v in below_borders:
            first.extend((r, w) for r, w in tree[below].external_edges[v] if tree.contains(x, r))
        targets = set().union(*(tree[c].borders for c in tree[x].children))
        out = index._combined_search(x, v, first, targets)
        out[v] = 0
        return out

    def live_distance(self, x: int, l: int) -> float:
        key = (x, l)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        tree = self.index.tree
        r = self.row(x)
        if l in r:
            d = r[l]
        else:
            cl = tree.child_toward(x, l)
            row_l = self.index.skeleton(cl).bl[l]
            d = min((r[b] + w for b, w in row_l.items()), default=INF)
            if cl == tree.child_toward(x, self.v):
                d = min(d, self.live_distance(cl, l))
        self.memo[key] = d
        return d


def preprocess_query(index: OdinIndex, v_q: int, rows: BranchRows | None = None) -> QueryOverlay:
    """Attach ``v_q`` to every vertex of its hosting active skeleton, without touching the index."""
    if not 0 <= v_q < index.graph.vertex_count:
        raise IndexError(f"query vertex {v_q} out of range")
    host = index.active_node_of(v_q)
    sk = index.skeleton(host)
    stamp = (host, index.nodes[host].version)
    if v_q in sk.borders:
        return QueryOverlay(v_q, host, "border", {}, stamp)
    rows = rows or BranchRows(index, v_q)
    edges = {l: rows.live_distance(host, l) for l in sk.bl if l != v_q}
    if v_q in sk.lives:
        return QueryOverlay(v_q, host, "live", edges, stamp)
    r = rows.row(host)
    edges.update((b, r[b]) for b in sk.borders)
    return QueryOverlay(v_q, host, "plain", edges, stamp)


def _current_overlay(index: OdinIndex, state: QueryState) -> QueryOverlay:
    v_q = state.query.query_vertex
    ov = state.overlay
    host = index.active_node_of(v_q)
    if ov is not None and ov.stamp == (host, index.nodes[host].version):
        return ov
    if state.rows is None:
        state.rows = BranchRows(index, v_q)
    ov = state.overlay = preprocess_query(index, v_q, state.rows)
    return ov


class _Search:
    """One round's traversal over the global skeleton view."""

    def __init__(self, index: OdinIndex, state: QueryState, overlay: QueryOverlay, literal: bool):
        self.index = index
        self.state = state
        self.overlay = overlay
        self.literal = literal
        self.v_q = state.query.query_vertex
        self.hp = KnnHeap(state.query.k)
        self.queue: list[tuple[float, int]] = []
        self.best: dict[int, float] = {}
        self.dist = state.dist
        self.c = state.counters
        self.contributed: dict[int, list[int]] = {}
        self.nodes_seen: set[int] = set()
        self.tree = index.tree
        self.nodes = index.nodes

    def role(self, u: int) -> tuple[int, bool, bool]:
        a = self.index.active_node_of(u)
        sk = self.nodes[a].skeleton
        return a, u in sk.borders, u in sk.lives

    def neighbor_groups(self, u: int, a: int) -> tuple:
        """Neighbour lists of border ``u`` (or of the query vertex) in the view."""
        sk = self.nodes[a].skeleton
        if u == self.v_q and self.overlay.case != "border":
            return (self.overlay.edges.items(), sk.bl[u].items() if u in sk.bl else ())
        if u not in sk.borders:
            self.c.pure_live_relaxations += 1
            return ()
        return (sk.bb[u].items(), sk.lb[u].items(), self.tree[a].external_edges.get(u, ()))

    def score(self, u: int, d: float) -> None:
        objs = self.index.objects_at(u)
        if objs:
            self.contributed[u] = sorted(objs)
            for obj, delta in objs.items():
                self.hp.offer(d + delta, obj)

    def push(self, v: int, nd: float) -> None:
        if v not in self.dist and nd < self.best.get(v, INF):
            self.best[v] = nd
            heapq.heappush(self.queue, (nd, v))
            self.c.heap_ops += 1

    def relax(self, u: int, d: float, a: int) -> None:
        best, dist, q = self.best, self.dist, self.queue
        pushes = 0
        for group in self.neighbor_groups(u, a):
            for v, w in group:
                nd = d + w
                if nd < best.get(v, INF) and v not in dist:
                    best[v] = nd
                    heapq.heappush(q, (nd, v))
                    pushes += 1
        self.c.heap_ops += pushes

    def settle(self, u: int, d: float, counted: bool = True) -> None:
        self.dist[u] = d
        if u == self.v_q:
            a, is_border, is_live = self.overlay.host, self.overlay.case == "border", self.overlay.case != "plain"
        else:
            a, is_border, is_live = self.role(u)
        self.nodes_seen.add(a)
        if counted:
            if is_border or u == self.v_q:
                self.c.borders_settled += 1
            else:
                self.c.lives_settled += 1
        if self.state.trace is not None:
            self.state.trace.append((u, d))
        if is_live:
            self.score(u, d)
        # weights are positive integers: nothing reached through u lands below d + 1
        if (is_border or u == self.v_q) and not (self.hp.full and self.hp.top[0] < d + 1):
            self.relax(u, d, a)

    def should_stop(self, head: float) -> bool:
        if not self.hp.full:
            return False
        top = self.hp.top[0]
        return top <= head if self.literal else top < head

    def expand(self, incremental: bool) -> None:
        q = self.queue
        while q:
            d, u = q[0]
            if u in self.dist:
                heapq.heappop(q)
                continue
            if self.should_stop(d):
                self.state.exit_gap = (self.hp.top[0], d)
                return
            heapq.heappop(q)
            self.c.heap_ops += 1
            if incremental:
                self.c.expansion_settles += 1
            self.settle(u, d)
        self.state.exit_gap = None

    def finish(self) -> list[tuple[int, float]]:
        self.c.heap_ops += self.hp.ops
        st = self.state
        st.result = self.hp.sorted()
        st.partial = len(st.result) < st.query.k
        st.contributed = self.contributed
        st.candidate_nodes = self.nodes_seen
        st.round += 1
        return st.result


def knn_init(
    index: OdinIndex, query: Query, state: QueryState | None = None, literal_termination: bool = False
) -> QueryState:
    """Fresh expansion from the query vertex; returns the populated state.

    ``literal_termination`` stops as soon as the k-th distance is no larger
    than the queue head, which can drop an equal-distance object with a
    smaller id; the default only stops once the head is strictly farther.
    """
    if state is None:
        state = QueryState(query)
    state.query = query
    state.dist = {}
    state.accomplished = {}
    state.counters = Counters()
    overlay = _current_overlay(index, state)
    s = _Search(index, state, overlay, literal_termination)
    s.settle(query.query_vertex, 0)
    s.expand(incremental=False)
    s.finish()
    return state


def knn_inc(index: OdinIndex, state: QueryState, literal_termination: bool = False) -> QueryState:
    """Next round for a registered query, reusing every distance cached so far.

    Cached distances are shortest distances in the road graph and survive any
    fold/unfold; only roles and accomplished flags are re-derived.
    """
    if state.round == 0:
        return knn_init(index, state.query, state, literal_termination)
    state.counters = Counters()
    overlay = _current_overlay(index, state)
    s = _Search(index, state, overlay, literal_termination)
    v_q = state.query.query_vertex
    c = state.counters
    dist = state.dist
    nodes = index.nodes
    active_node_of = index.active_node_of

    # cached vertices keep exact distances forever; those outside the view are
    # never neighbours of view vertices, so they stay in ``dist`` untouched
    lives: list[int] = []
    by_node: dict[int, list[int]] = {}
    for u in dist:
        if u == v_q:
            continue
        a = active_node_of(u)
        sk = nodes[a].skeleton
        if u in sk.borders:
            by_node.setdefault(a, []).append(u)
            if u in sk.lives:
                lives.append(u)
        elif u in sk.lives:
            lives.append(u)
            s.nodes_seen.add(a)
    s.nodes_seen.update(by_node)
    s.nodes_seen.add(overlay.host)

    for a in sorted(s.nodes_seen):
        sk = nodes[a].skeleton
        if not all(b in dist for b in sk.borders):
            continue
        direct = overlay.edges if a == overlay.host else {}
        for v, row in sk.bl.items():
            if v in dist:
                continue
            d = min((dist[b] + w for b, w in row.items()), default=INF)
            d = min(d, direct.get(v, INF))
            if d < INF:
                dist[v] = d
                lives.append(v)
                c.derived_lives += 1

    if overlay.case != "plain":
        s.score(v_q, 0)
    for u in lives:
        s.score(u, dist[u])

    gver = index.structure_version
    s.relax(v_q, 0, overlay.host)
    c.seeded_relaxers += 1
    push = s.push
    for a, members in by_node.items():
        node = nodes[a]
        stamp = (a, node.version, gver)
        pending = [u for u in members if state.accomplished.get(u) != stamp]
        if not pending:
            continue
        c.seeded_relaxers += len(pending)
        sk = node.skeleton
        # a border is adjacent to every other vertex of its skeleton
        unknown_b = [x for x in sk.borders if x not in dist]
        unknown_l = [x for x in sk.bl if x not in dist]
        for x in unknown_b:
            d = min(dist[u] + sk.bb[u][x] for u in members)
            if d < INF:
                push(x, d)
        for x in unknown_l:
            row = sk.bl[x]
            d = min(dist[u] + row[u] for u in members)
            if d < INF:
                push(x, d)
        closed = not (unknown_b or unknown_l)
        ext = index.tree[a].external_edges
        for u in pending:
            open_ext = False
            for r, w in ext.get(u, ()):
                if r not in dist:
                    open_ext = True
                    push(r, dist[u] + w)
            if closed and not open_ext:
                state.accomplished[u] = stamp
            else:
                state.accomplished.pop(u, None)

    s.expand(incremental=True)
    s.finish()
    return state


def skeleton_distances(index: OdinIndex, v_q: int, targets: Iterable[int] | None = None) -> tuple[dict[int, float], Counters]:
    """Unbounded expansion over the view plus the query overlay (no objects scored)."""
    state = QueryState(Query(v_q, 1))
    overlay = _current_overlay(index, state)
    s = _Search(index, state, overlay, False)
    s.score = lambda u, d: None  # type: ignore[method-assign]
    s.settle(v_q, 0)
    s.hp = KnnHeap(1)  # never full, so expansion runs to exhaustion
    s.expand(incremental=False)
    if targets is None:
        return dict(s.dist), state.counters
    return {t: s.dist.get(t, INF) for t in targets}, state.counters


def view_vertices(index: OdinIndex) -> set[int]:
    """Every vertex of the global skeleton view: active borders plus live vertices."""
    out: set[int] = set()
    for nid in index.active_nodes():
        sk = index.nodes[nid].skeleton
        out |= sk.borders
        out |= sk.lives
    return out
