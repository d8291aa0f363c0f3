"""The elastic ODIN tree: activation, live-vertex maintenance, fold/unfold."""

from __future__ import annotations

import heapq
import logging
from itertools import chain
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, TextIO

from .graph import INF, RoadGraph
from .mpbs import combine_skeletons, mpbs
from .partition import LeafDistanceTable, PartitionTree
from .skeleton import SkeletonGraph

log = logging.getLogger(__name__)

INDEX_DUMP_VERSION = "odin-index v1"


class FoldError(ValueError):
    pass


@dataclass
class OdinNode:
    node_id: int
    active: bool = False
    materialized: bool = False
    skeleton: SkeletonGraph | None = None
    # bumped on every skeleton or state change; overlays and query caches key on it
    version: int = 0

    @property
    def live_count(self) -> int:
        return len(self.skeleton.lives) if self.skeleton is not None else 0


@dataclass
class ObjectUpdate:
    obj: int
    old_vertex: int | None
    new_vertex: int | None
    delta: int = 0


@dataclass
class Delta:
    """Changes between two snapshots.

    ``updates`` lists every object whose live vertex or residual distance
    changed; ``became_live`` / ``became_obsolete`` are the implied vertex
    transitions and are checked against the updates when applied.
    """

    updates: list[ObjectUpdate] = field(default_factory=list)
    became_live: set[int] = field(default_factory=set)
    became_obsolete: set[int] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.updates or self.became_live or self.became_obsolete)


@dataclass
class MaintenanceReport:
    inserted: int = 0
    removed: int = 0
    offset_updates: int = 0
    folds: int = 0
    unfolds: int = 0
    first_activations: int = 0
    nodes_touched: int = 0
    # branch length of every skeleton insert/remove, in application order
    branch_lengths: list[int] = field(default_factory=list)

    def merge(self, other: "MaintenanceReport") -> None:
        for name in ("inserted", "removed", "offset_updates", "folds", "unfolds",
                     "first_activations", "nodes_touched"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.branch_lengths.extend(other.branch_lengths)


class OdinIndex:
    def __init__(
        self,
        graph: RoadGraph,
        tree: PartitionTree,
        tables: LeafDistanceTable,
        mu: int = 5,
        m: int | None = None,
        mpbs_mode: str = "sequential",
    ):
        self.graph = graph
        self.tree = tree
        self.tables = tables
        self.mu = mu
        self.m = m if m is not None else tree.m
        self.mpbs_mode = mpbs_mode
        self.nodes = [OdinNode(i) for i in range(len(tree))]
        self.assignments: dict[int, dict[int, int]] = {}
        self.object_at: dict[int, int] = {}
        # bumped on fold/unfold; invalidates active-node lookups
        self.structure_version = 0
        self._active_cache: dict[int, int] = {}
        self.totals = MaintenanceReport()

    # -- lookups ---------------------------------------------------------------

    def live_vertices(self) -> set[int]:
        return set(self.assignments)

    def is_live(self, v: int) -> bool:
        return v in self.assignments

    def objects_at(self, v: int) -> Mapping[int, int]:
        return self.assignments.get(v, {})

    @property
    def object_count(self) -> int:
        return len(self.object_at)

    def active_nodes(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.active]

    def active_ancestor(self, leaf: int) -> int:
        """The unique active node on the path from ``leaf`` to the root."""
        hit = self._active_cache.get(leaf)
        if hit is not None:
            return hit
        for nid in reversed(self.tree.ancestors[leaf]):
            if self.nodes[nid].active:
                self._active_cache[leaf] = nid
                return nid
        raise RuntimeError(f"leaf {leaf} has no active ancestor")

    def active_node_of(self, v: int) -> int:
        return self.active_ancestor(self.tree.leaf_index[v])

    def skeleton(self, node_id: int) -> SkeletonGraph:
        sk = self.nodes[node_id].skeleton
        if sk is None:
            raise RuntimeError(f"node {node_id} is not materialized")
        return sk

    def _bump(self, node_id: int) -> None:
        self.nodes[node_id].version += 1

    def _set_active(self, node_id: int, active: bool) -> None:
        node = self.nodes[node_id]
        if node.active != active:
            node.active = active
            node.version += 1
            self.structure_version += 1
            self._active_cache.clear()

    # -- combined-graph searches -------------------------------------------------

    def _combined_neighbors(self, x: int, u: int) -> tuple[bool, Iterator[tuple[int, float]]]:
        """Neighbours of ``u`` in the union of ``x``'s child skeletons plus their external edges."""
        tree = self.tree
        c = tree.child_toward(x, u)
        sk = self.nodes[c].skeleton
        if u in sk.borders:
            ext = ((r, w) for r, w in tree[c].external_edges[u] if tree.contains(x, r))
            return True, chain(sk.bb[u].items(), sk.lb[u].items(), ext)
        return False, iter(sk.bl[u].items())

    def _combined_search(
        self, x: int, source: int, first_edges: Iterable[tuple[int, float]], targets: Iterable[int]
    ) -> dict[int, float]:
        """Multi-target Dijkstra from ``source`` over ``x``'s combined child skeletons."""
        pending = set(targets)
        pending.discard(source)
        want = set(pending)
        out: dict[int, float] = {}
        best: dict[int, float] = {}
        done = {source}
        heap: list[tuple[float, int]] = []
        for v, w in first_edges:
            if w < best.get(v, INF):
                best[v] = w
                heapq.heappush(heap, (w, v))
        while heap and pending:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u in pending:
                out[u] = d
                pending.discard(u)
            is_border, nbrs = self._combined_neighbors(x, u)
            if not is_border:
                continue  # a pure live vertex never shortens a path
            for v, w in nbrs:
                nd = d + w
                if v not in done and nd < best.get(v, INF):
                    best[v] = nd
                    heapq.heappush(heap, (nd, v))
        return {t: out.get(t, INF) for t in want}

    def _leaf_row(self, leaf: int, v: int, targets: Iterable[int]) -> dict[int, float]:
        return self.tables.row(leaf, v, targets)

    def _live_row(self, x: int, v: int) -> dict[int, float]:
        """Distances from ``v`` to every border of ``x``, in ``x``'s subgraph."""
        node = self.tree[x]
        if node.is_leaf:
            return self._leaf_row(x, v, node.borders)
        _, first = self._combined_neighbors(x, v)
        return self._combined_search(x, v, list(first), node.borders)

    # -- materialization ---------------------------------------------------------

    def _materialize_leaf(self, leaf: int) -> None:
        node = self.tree[leaf]
        sk = SkeletonGraph(node.borders)
        bs = sorted(node.borders)
        for i, a in enumerate(bs):
            row = self.tables.row(leaf, a, bs[i + 1:])
            for b, w in row.items():
                sk.set_border_weight(a, b, w)
        for v in node.vertices:
            if v in self.assignments:
                sk.add_live(v, None if v in sk.borders else self._leaf_row(leaf, v, node.borders))
        on = self.nodes[leaf]
        on.skeleton = sk
        on.materialized = True
        self._bump(leaf)

    def _first_activation(self, x: int) -> None:
        tree = self.tree
        children = tree[x].children
        for c in children:
            if not self.nodes[c].materialized:
                self._ensure_materialized(c)
        sks = [self.nodes[c].skeleton for c in children]
        external = []
        for c in children:
            for b, edges in tree[c].external_edges.items():
                for r, w in edges:
                    if tree.contains(x, r):
                        external.append((b, r, w))
        combined = combine_skeletons(sks, external)
        borders = tree[x].borders
        lives = set().union(*(sk.lives for sk in sks))
        matrix = mpbs(combined, borders, lives, mode=self.mpbs_mode)
        sk = SkeletonGraph(borders)
        bs = sorted(borders)
        for i, a in enumerate(bs):
            for b in bs[i + 1:]:
                sk.set_border_weight(a, b, matrix[a, b])
        for v in sorted(lives):
            sk.add_live(v, None if v in borders else {b: matrix[b, v] for b in borders})
        on = self.nodes[x]
        on.skeleton = sk
        on.materialized = True
        self._bump(x)
        self.totals.first_activations += 1

    def _ensure_materialized(self, x: int) -> None:
        if self.nodes[x].materialized:
            return
        if self.tree[x].is_leaf:
            self._materialize_leaf(x)
        else:
            self._first_activation(x)

    def _reconcile(self, x: int) -> None:
        """Bring a stale skeleton's live set in line with its (current) children."""
        sk = self.nodes[x].skeleton
        node = self.tree[x]
        if node.is_leaf:
            current = {v for v in node.vertices if v in self.assignments}
        else:
            current = set().union(*(self.nodes[c].skeleton.lives for c in node.children))
        changed = False
        for v in sk.lives - current:
            sk.remove_live(v)
            changed = True
        for v in sorted(current - sk.lives):
            sk.add_live(v, None if v in sk.borders else self._live_row(x, v))
            changed = True
        if changed:
            self._bump(x)

    def activate(self, x: int) -> None:
        """Materialize ``x``'s skeleton on first use, else patch its live set.

        Border-to-border weights of a previously materialized node are kept;
        borders never change.
        """
        if not self.nodes[x].materialized:
            self._ensure_materialized(x)
        else:
            self._reconcile(x)
        self._set_active(x, True)

    # -- live-vertex maintenance -------------------------------------------------

    def _branch_of(self, v: int) -> list[int]:
        leaf = self.tree.leaf_index[v]
        return self.tree.branch(leaf, self.active_ancestor(leaf))

    def _skeleton_insert(self, v: int) -> list[int]:
        branch = self._branch_of(v)
        for x in branch:
            sk = self.skeleton(x)
            sk.add_live(v, None if v in sk.borders else self._live_row(x, v))
            self._bump(x)
        return branch

    def _skeleton_remove(self, v: int) -> list[int]:
        branch = self._branch_of(v)
        for x in branch:
            self.skeleton(x).remove_live(v)
            self._bump(x)
        return branch

    def insert_live(self, v: int, objects: Iterable[tuple[int, int]]) -> list[int]:
        """Attach ``objects`` (id, residual distance) to ``v``; returns the nodes touched."""
        bucket = self.assignments.get(v)
        fresh = bucket is None
        if fresh:
            bucket = self.assignments[v] = {}
        for obj, delta in objects:
            old = self.object_at.get(obj)
            if old is not None and old != v:
                raise ValueError(f"object {obj} already sits on vertex {old}")
            bucket[obj] = delta
            self.object_at[obj] = v
        if not fresh:
            return []
        if not bucket:
            del self.assignments[v]
            return []
        return self._skeleton_insert(v)

    def remove_live(self, v: int) -> list[int]:
        """Drop ``v`` and all its objects; returns the nodes touched."""
        bucket = self.assignments.pop(v, None)
        if bucket is None:
            log.warning("remove_live on non-live vertex %d ignored", v)
            return []
        for obj in bucket:
            del self.object_at[obj]
        return self._skeleton_remove(v)

    # -- fold / unfold -------------------------------------------------------------

    def foldable(self, p: int) -> bool:
        node = self.tree[p]
        if node.is_leaf or p == self.tree.root:
            return False
        kids = [self.nodes[c] for c in node.children]
        return all(k.active for k in kids) and sum(k.live_count for k in kids) < self.mu

    def overfilled(self, x: int) -> bool:
        node = self.nodes[x]
        return node.active and not self.tree[x].is_leaf and node.live_count > self.m * self.mu

    def fold(self, p: int) -> None:
        if p == self.tree.root:
            raise FoldError("the root's children are never folded")
        if not self.foldable(p):
            raise FoldError(f"children of node {p} do not meet the folding criteria")
        for c in self.tree[p].children:
            self._set_active(c, False)
        self.activate(p)
        self.totals.folds += 1

    def unfold(self, x: int) -> int:
        """Hand ``x``'s role to its children, recursing while they are overfilled."""
        if not self.overfilled(x):
            raise FoldError(f"node {x} does not meet the unfolding criteria")
        count = 0
        stack = [x]
        while stack:
            y = stack.pop()
            self._set_active(y, False)
            count += 1
            for c in self.tree[y].children:
                if self.nodes[c].materialized:
                    self._reconcile(c)
                self.activate(c)
            stack.extend(c for c in self.tree[y].children if self.overfilled(c))
        self.totals.unfolds += count
        return count

    def _sweep(self, touched: set[int], report: MaintenanceReport) -> None:
        heap = []
        for a in touched:
            p = self.tree[a].parent
            if p is not None and p != self.tree.root:
                heapq.heappush(heap, (self.tree[p].height, p))
        seen = set()
        folded = []
        while heap:
            _, p = heapq.heappop(heap)
            if p in seen:
                continue
            seen.add(p)
            if self.foldable(p):
                self.fold(p)
                report.folds += 1
                folded.append(p)
                q = self.tree[p].parent
                if q is not None and q != self.tree.root:
                    heapq.heappush(heap, (self.tree[q].height, q))
        for a in sorted(touched | set(folded), key=lambda n: self.tree[n].level):
            if self.overfilled(a):
                report.unfolds += self.unfold(a)

    def maintain(self, delta: Delta) -> MaintenanceReport:
        """Apply one snapshot's changes, then fold/unfold until no criterion fires."""
        report = MaintenanceReport()
        if not delta:
            return report
        before: dict[int, int] = {}
        for up in delta.updates:
            for v in (up.old_vertex, up.new_vertex):
                if v is not None and v not in before:
                    before[v] = len(self.assignments.get(v, ()))
        for up in delta.updates:
            cur = self.object_at.get(up.obj)
            if cur != up.old_vertex:
                raise ValueError(f"object {up.obj} is on {cur}, delta says {up.old_vertex}")
            if cur is not None:
                del self.assignments[cur][up.obj]
                del self.object_at[up.obj]
            if up.new_vertex is not None:
                self.assignments.setdefault(up.new_vertex, {})[up.obj] = up.delta
                self.object_at[up.obj] = up.new_vertex
            if cur == up.new_vertex:
                report.offset_updates += 1
        obsolete, fresh = set(), set()
        for v, count in before.items():
            now = len(self.assignments.get(v, ()))
            if count and not now:
                obsolete.add(v)
                self.assignments.pop(v, None)
            elif now and not count:
                fresh.add(v)
        if (delta.became_live or delta.became_obsolete) and (
            fresh != delta.became_live or obsolete != delta.became_obsolete
        ):
            raise ValueError("delta vertex transitions disagree with its object updates")
        touched: set[int] = set()
        for v in sorted(obsolete):
            branch = self._skeleton_remove(v)
            report.removed += 1
            report.branch_lengths.append(len(branch))
            report.nodes_touched += len(branch)
            touched.add(branch[-1])
        for v in sorted(fresh):
            branch = self._skeleton_insert(v)
            report.inserted += 1
            report.branch_lengths.append(len(branch))
            report.nodes_touched += len(branch)
            touched.add(branch[-1])
        self._sweep(touched, report)
        self.totals.merge(report)
        return report

    # -- reporting -----------------------------------------------------------------

    def space_report(self) -> dict[int, tuple[int, int]]:
        """Per tree level: (materialized nodes, total nodes)."""
        out: dict[int, list[int]] = {}
        for node in self.tree.nodes:
            rec = out.setdefault(node.level, [0, 0])
            rec[1] += 1
            if self.nodes[node.node_id].materialized:
                rec[0] += 1
        return {lvl: (a, b) for lvl, (a, b) in sorted(out.items())}


def build(
    graph: RoadGraph,
    tree: PartitionTree,
    tables: LeafDistanceTable,
    assignments: Mapping[int, Iterable[tuple[int, int]]],
    mu: int = 5,
    m: int | None = None,
    mpbs_mode: str = "sequential",
) -> OdinIndex:
    """Activate every leaf, then fold underfilled sibling groups level by level."""
    index = OdinIndex(graph, tree, tables, mu=mu, m=m, mpbs_mode=mpbs_mode)
    for v, objs in assignments.items():
        objs = list(objs)
        if not objs:
            continue
        if not 0 <= v < graph.vertex_count:
            raise ValueError(f"assignment to unknown vertex {v}")
        bucket = index.assignments.setdefault(v, {})
        for obj, delta in objs:
            if obj in index.object_at:
                raise ValueError(f"object {obj} assigned twice")
            bucket[obj] = delta
            index.object_at[obj] = v
    for leaf in tree.leaves():
        index._materialize_leaf(leaf)
        index._set_active(leaf, True)
    by_height: dict[int, list[int]] = {}
    for node in tree.nodes:
        if not node.is_leaf and node.node_id != tree.root:
            by_height.setdefault(node.height, []).append(node.node_id)
    for h in range(1, tree.height):
        activated = False
        for p in by_height.get(h, []):
            if index.foldable(p):
                index.fold(p)
                activated = True
        if not activated:
            break
    return index


# -- invariants ------------------------------------------------------------------


def check_invariants(index: OdinIndex) -> list[str]:
    """Structural checks; returns human-readable violations (empty when sound)."""
    problems = []
    tree = index.tree
    for leaf in tree.leaves():
        hits = [n for n in tree.ancestors[leaf] if index.nodes[n].active]
        if len(hits) != 1:
            problems.append(f"leaf {leaf} has {len(hits)} active ancestors")
    for node in index.nodes:
        if node.active and not node.materialized:
            problems.append(f"active node {node.node_id} is not materialized")
    owners: dict[int, int] = {}
    for nid in index.active_nodes():
        for v in index.nodes[nid].skeleton.lives:
            if v in owners:
                problems.append(f"live vertex {v} in active nodes {owners[v]} and {nid}")
            owners[v] = nid
    for v in index.assignments:
        if v not in owners:
            problems.append(f"live vertex {v} is in no active skeleton")
        elif not index.assignments[v]:
            problems.append(f"live vertex {v} has no objects")
    for v in owners:
        if v not in index.assignments:
            problems.append(f"obsolete vertex {v} still live in node {owners[v]}")
    for node in index.nodes:
        if not node.materialized:
            continue
        sk = node.skeleton
        if sk.borders != tree[node.node_id].borders:
            problems.append(f"node {node.node_id} border set drifted")
        expected = {
            (min(b, x), max(b, x))
            for b in sk.borders
            for x in sk.borders | sk.lives
            if b != x
        }
        actual = {(u, v) for u, v, _ in sk.edges()}
        if expected != actual:
            problems.append(f"node {node.node_id} skeleton edge set violates the border x (border+live) shape")
    for nid in index.active_nodes():
        if nid == tree.root and not tree[nid].is_leaf:
            problems.append("root is active")
        if index.overfilled(nid):
            problems.append(f"active node {nid} is overfilled")
    for node in tree.nodes:
        if not node.is_leaf and index.foldable(node.node_id):
            problems.append(f"children of node {node.node_id} are foldable")
    return problems


# -- dump / load -----------------------------------------------------------------


def _fmt(w: float) -> str:
    return "inf" if w == INF else str(int(w))


def dump_index(index: OdinIndex, out: TextIO) -> None:
    out.write(f"{INDEX_DUMP_VERSION}\n")
    out.write(f"params mu={index.mu} m={index.m}\n")
    for node in index.nodes:
        state = "active" if node.active else "inactive"
        out.write(f"node {node.node_id} {state} {int(node.materialized)}\n")
        if not node.materialized:
            continue
        sk = node.skeleton
        out.write("borders " + " ".join(map(str, sorted(sk.borders))) + "\n")
        out.write("lives " + " ".join(map(str, sorted(sk.lives))) + "\n")
        for u, v, w in sk.edges():
            out.write(f"edge {u} {v} {_fmt(w)}\n")
    for v in sorted(index.assignments):
        objs = " ".join(f"{o}:{d}" for o, d in sorted(index.assignments[v].items()))
        out.write(f"assign {v} {objs}\n")


def load_index(
    source: str | TextIO, graph: RoadGraph, tree: PartitionTree, tables: LeafDistanceTable
) -> OdinIndex:
    lines = iter(source.splitlines() if isinstance(source, str) else source)
    header = next(lines, "").strip()
    if header != INDEX_DUMP_VERSION:
        raise ValueError(f"unsupported index dump header {header!r}")
    params = dict(kv.split("=") for kv in next(lines).split()[1:])
    index = OdinIndex(graph, tree, tables, mu=int(params["mu"]), m=int(params["m"]))
    current = None
    pending_rows: dict[int, dict[int, float]] = {}

    def close() -> None:
        if current is None or current.skeleton is None:
            return
        sk = current.skeleton
        for v, row in pending_rows.items():
            sk.lives.add(v)
            sk.bl[v] = row
            for b, w in row.items():
                sk.lb[b][v] = w

    for raw in lines:
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "node":
            close()
            pending_rows = {}
            current = index.nodes[int(parts[1])]
            current.active = parts[2] == "active"
            current.materialized = parts[3] == "1"
        elif tag == "borders":
            current.skeleton = SkeletonGraph(int(x) for x in parts[1:])
        elif tag == "lives":
            sk = current.skeleton
            for x in parts[1:]:
                v = int(x)
                if v in sk.borders:
                    sk.lives.add(v)
                else:
                    pending_rows[v] = {}
        elif tag == "edge":
            u, v = int(parts[1]), int(parts[2])
            w = INF if parts[3] == "inf" else int(parts[3])
            sk = current.skeleton
            if u in sk.borders and v in sk.borders:
                sk.set_border_weight(u, v, w)
            else:
                live, border = (u, v) if v in sk.borders else (v, u)
                pending_rows[live][border] = w
        elif tag == "assign":
            close()
            current = None
            v = int(parts[1])
            for item in parts[2:]:
                o, d = item.split(":")
                index.assignments.setdefault(v, {})[int(o)] = int(d)
                index.object_at[int(o)] = v
        else:
            raise ValueError(f"unknown index dump line {raw!r}")
    close()
    return index
