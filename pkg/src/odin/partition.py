"""Hierarchical m-way partition of a road graph into an M-ary tree.

Each split uses a small multilevel scheme: heavy-edge matching to coarsen,
greedy region growing for the initial m-way split, then boundary
refinement with a hard balance pass on the finest level.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from .graph import INF, RoadGraph

TREE_DUMP_VERSION = "odin-tree v1"


@dataclass
class PartitionNode:
    node_id: int
    level: int
    vertices: frozenset[int]
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    borders: frozenset[int] = frozenset()
    # border vertex -> [(remote vertex outside this node, weight)]
    external_edges: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    height: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


class PartitionTree:
    """Static hierarchy of subgraphs; every vertex knows its leaf.

    Membership tests are O(1) through leaf intervals: leaves are numbered in
    DFS order and each node covers a contiguous range of that numbering.
    """

    def __init__(self, nodes: list[PartitionNode], root: int, n_vertices: int, m: int, z: int):
        self.nodes = nodes
        self.root = root
        self.m = m
        self.z = z
        self.leaf_index = [-1] * n_vertices
        for node in nodes:
            if node.is_leaf:
                for v in node.vertices:
                    self.leaf_index[v] = node.node_id
        if any(x < 0 for x in self.leaf_index):
            raise ValueError("partition does not cover every vertex")
        self._index_intervals()

    def _index_intervals(self) -> None:
        n = len(self.nodes)
        self.lo = [0] * n
        self.hi = [0] * n
        self.leaf_rank = [-1] * n
        self.ancestors: list[list[int]] = [[] for _ in range(n)]
        counter = 0
        stack = [(self.root, False)]
        while stack:
            nid, done = stack.pop()
            node = self.nodes[nid]
            if done:
                self.hi[nid] = counter - 1
                node.height = 1 + max(self.nodes[c].height for c in node.children)
                continue
            parent = node.parent
            self.ancestors[nid] = (self.ancestors[parent] if parent is not None else []) + [nid]
            node.level = len(self.ancestors[nid]) - 1
            self.lo[nid] = counter
            if node.is_leaf:
                self.leaf_rank[nid] = counter
                self.hi[nid] = counter
                node.height = 0
                counter += 1
            else:
                stack.append((nid, True))
                for c in reversed(node.children):
                    stack.append((c, False))

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> PartitionNode:
        return self.nodes[node_id]

    def leaf_of(self, v: int) -> int:
        return self.leaf_index[v]

    def contains(self, node_id: int, v: int) -> bool:
        r = self.leaf_rank[self.leaf_index[v]]
        return self.lo[node_id] <= r <= self.hi[node_id]

    def child_toward(self, node_id: int, v: int) -> int:
        """The child of ``node_id`` whose subtree holds ``v`` (``v`` must be inside)."""
        return self.ancestors[self.leaf_index[v]][self.nodes[node_id].level + 1]

    def branch(self, leaf: int, top: int) -> list[int]:
        """Node ids from ``leaf`` up to ancestor ``top``, inclusive."""
        path = self.ancestors[leaf]
        return path[self.nodes[top].level:][::-1]

    def leaves(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.is_leaf]

    @property
    def height(self) -> int:
        return self.nodes[self.root].height

    def edge_cut(self) -> int:
        """Edges crossing sibling boundaries, summed over every split."""
        total = 0
        for node in self.nodes:
            if node.parent is not None:
                total += sum(len(e) for e in node.external_edges.values())
        return total // 2


def leaf_of(tree: PartitionTree, v: int) -> int:
    return tree.leaf_of(v)


# -- single split -----------------------------------------------------------


def _balance_bounds(n: int, m: int, eps: float) -> tuple[int, int]:
    target = n / m
    hi = max(math.ceil(target), math.floor(target * eps))
    lo = max(1, min(math.floor(target), math.ceil(target / eps)))
    return lo, hi


def _coarsen(adj: list[dict[int, int]], vw: list[int], rng: random.Random, cap: int):
    n = len(adj)
    match = [-1] * n
    order = list(range(n))
    rng.shuffle(order)
    for u in order:
        if match[u] >= 0:
            continue
        best, best_w = u, -1
        for v, w in adj[u].items():
            if match[v] < 0 and v != u and vw[u] + vw[v] <= cap:
                if w > best_w or (w == best_w and vw[v] < vw[best]):
                    best, best_w = v, w
        match[u] = best
        match[best] = u
    cmap = [-1] * n
    nc = 0
    for u in range(n):
        if cmap[u] < 0:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    cadj: list[dict[int, int]] = [{} for _ in range(nc)]
    cvw = [0] * nc
    for u in range(n):
        cu = cmap[u]
        cvw[cu] += vw[u]
        for v, w in adj[u].items():
            cv = cmap[v]
            if cu != cv:
                cadj[cu][cv] = cadj[cu].get(cv, 0) + w
    return cmap, cadj, cvw


def _peripheral(adj, free: set[int], start: int) -> int:
    seen = {start}
    queue = deque([start])
    last = start
    while queue:
        last = queue.popleft()
        for v in adj[last]:
            if v in free and v not in seen:
                seen.add(v)
                queue.append(v)
    return last


def _grow(adj, vw, m: int, rng: random.Random) -> list[int]:
    n = len(adj)
    total = sum(vw)
    part = [-1] * n
    free = set(range(n))
    remaining = total
    for p in range(m - 1):
        if not free:
            break
        target = remaining / (m - p)
        seed = _peripheral(adj, free, min(free))
        weight = 0
        heap = [(0, seed)]
        conn: dict[int, int] = {seed: 0}
        while weight < target and free:
            while heap and (heap[0][1] not in free or -heap[0][0] != conn.get(heap[0][1])):
                heapq.heappop(heap)
            if not heap:
                s = _peripheral(adj, free, min(free))
                conn[s] = 0
                heap.append((0, s))
            _, u = heapq.heappop(heap)
            if weight + vw[u] > target and weight > 0 and weight + vw[u] - target > target - weight:
                break
            part[u] = p
            free.discard(u)
            weight += vw[u]
            for v, w in adj[u].items():
                if v in free:
                    conn[v] = conn.get(v, 0) + w
                    heapq.heappush(heap, (-conn[v], v))
        remaining -= weight
    for u in free:
        part[u] = m - 1
    return part


def _refine(adj, vw, part: list[int], m: int, lo: int, hi: int, passes: int = 6) -> None:
    size = [0] * m
    for u, p in enumerate(part):
        size[p] += vw[u]
    for _ in range(passes):
        moved = 0
        for u in range(len(adj)):
            a = part[u]
            conn: dict[int, int] = {}
            for v, w in adj[u].items():
                conn[part[v]] = conn.get(part[v], 0) + w
            if len(conn) <= 1 and a in conn:
                continue
            here = conn.get(a, 0)
            best, best_gain = a, 0
            for b, c in conn.items():
                if b == a or size[b] + vw[u] > hi or size[a] - vw[u] < lo:
                    continue
                gain = c - here
                if gain > best_gain or (gain == best_gain == 0 and b != a and size[b] + vw[u] < size[a]):
                    best, best_gain = b, gain
            if best != a:
                part[u] = best
                size[a] -= vw[u]
                size[best] += vw[u]
                moved += 1
        if not moved:
            break


def _enforce_balance(adj, part: list[int], m: int, lo: int, hi: int) -> None:
    n = len(part)
    size = [0] * m
    for p in part:
        size[p] += 1

    def gain(u: int, b: int) -> int:
        return sum(w if part[v] == b else -w if part[v] == part[u] else 0 for v, w in adj[u].items())

    def move_one(src_ok, dst_ok) -> bool:
        best = None
        for u in range(n):
            a = part[u]
            if not src_ok(a):
                continue
            for b in {part[v] for v in adj[u]} - {a}:
                if dst_ok(b):
                    g = gain(u, b)
                    if best is None or g > best[0]:
                        best = (g, u, b)
        if best is None:
            for u in range(n):
                if src_ok(part[u]):
                    for b in range(m):
                        if b != part[u] and dst_ok(b):
                            best = (0, u, b)
                            break
                if best:
                    break
        if best is None:
            return False
        _, u, b = best
        size[part[u]] -= 1
        size[b] += 1
        part[u] = b
        return True

    guard = 4 * n
    while guard > 0 and any(s > hi for s in size):
        guard -= 1
        if not move_one(lambda a: size[a] > hi, lambda b: size[b] < hi):
            break
    while guard > 0 and any(s < lo for s in size):
        guard -= 1
        if not move_one(lambda a: size[a] > lo, lambda b: size[b] < lo):
            break


def split_vertices(
    graph: RoadGraph, vertices: list[int], m: int, eps: float, rng: random.Random
) -> list[list[int]]:
    """Split ``vertices`` into ``m`` balanced, low-cut parts.

    Fewer than ``m`` vertices cannot be split evenly; each vertex then becomes
    its own part (the degenerate singleton mode).
    """
    n = len(vertices)
    if n <= m:
        return [[v] for v in vertices]
    local = {v: i for i, v in enumerate(vertices)}
    adj: list[dict[int, int]] = [{} for _ in range(n)]
    for v, i in local.items():
        for u in graph.adj[v]:
            j = local.get(u)
            if j is not None:
                adj[i][j] = 1
    lo, hi = _balance_bounds(n, m, eps)

    levels = []
    cur_adj, cur_vw = adj, [1] * n
    cap = max(1, math.ceil(n / (4 * m)))
    while len(cur_adj) > max(10 * m, 40):
        cmap, cadj, cvw = _coarsen(cur_adj, cur_vw, rng, cap)
        if len(cadj) > 0.92 * len(cur_adj):
            break
        levels.append((cur_adj, cur_vw, cmap))
        cur_adj, cur_vw = cadj, cvw

    part = _grow(cur_adj, cur_vw, m, rng)
    total = sum(cur_vw)
    _refine(cur_adj, cur_vw, part, m, math.floor(total / m / eps), math.ceil(total / m * eps))
    for fine_adj, fine_vw, cmap in reversed(levels):
        part = [part[cmap[u]] for u in range(len(fine_adj))]
        total = sum(fine_vw)
        _refine(fine_adj, fine_vw, part, m, math.floor(total / m / eps), math.ceil(total / m * eps))
    _enforce_balance(adj, part, m, lo, hi)
    _refine(adj, [1] * n, part, m, lo, hi)

    groups: list[list[int]] = [[] for _ in range(m)]
    for i, p in enumerate(part):
        groups[p].append(vertices[i])
    return [g for g in groups if g]


# -- tree construction --------------------------------------------------------


def _annotate_borders(tree: PartitionTree, graph: RoadGraph) -> None:
    borders: list[set[int]] = [set() for _ in tree.nodes]
    ext: list[dict[int, list[tuple[int, int]]]] = [{} for _ in tree.nodes]
    for v in range(graph.vertex_count):
        path = tree.ancestors[tree.leaf_index[v]]
        for u, w in graph.adj[v].items():
            # every node on v's path that does not also hold u sees an external edge
            for nid in reversed(path):
                if tree.contains(nid, u):
                    break
                borders[nid].add(v)
                ext[nid].setdefault(v, []).append((u, w))
    for node in tree.nodes:
        node.borders = frozenset(borders[node.node_id])
        node.external_edges = {b: sorted(e) for b, e in ext[node.node_id].items()}


def hierarchical_partition(
    graph: RoadGraph, m: int = 4, z: int = 300, eps: float = 1.10, seed: int = 0
) -> PartitionTree:
    """Recursively split until no subgraph has more than ``z`` vertices."""
    if m < 2:
        raise ValueError("m must be at least 2")
    if z < 2:
        raise ValueError("z must be at least 2")
    if graph.vertex_count == 0:
        raise ValueError("graph is empty")
    rng = random.Random(seed)
    nodes = [PartitionNode(0, 0, frozenset(range(graph.vertex_count)))]
    queue = deque([0])
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        if len(node.vertices) <= z:
            continue
        for part in split_vertices(graph, sorted(node.vertices), m, eps, rng):
            child = PartitionNode(len(nodes), node.level + 1, frozenset(part), parent=nid)
            nodes.append(child)
            node.children.append(child.node_id)
            queue.append(child.node_id)
    tree = PartitionTree(nodes, 0, graph.vertex_count, m, z)
    _annotate_borders(tree, graph)
    return tree


def _tree_from_parents(
    graph: RoadGraph, entries: list[tuple[int, int | None, list[int]]], m: int, z: int
) -> PartitionTree:
    nodes = [PartitionNode(nid, 0, frozenset(vs), parent=p) for nid, p, vs in entries]
    if [n.node_id for n in nodes] != list(range(len(nodes))):
        raise ValueError("node ids must be dense and in order")
    roots = [n.node_id for n in nodes if n.parent is None]
    if len(roots) != 1:
        raise ValueError("tree needs exactly one root")
    for n in nodes:
        if n.parent is not None:
            nodes[n.parent].children.append(n.node_id)
    for n in nodes:
        if n.children:
            union = set().union(*(nodes[c].vertices for c in n.children))
            if union != set(n.vertices) or sum(len(nodes[c].vertices) for c in n.children) != len(union):
                raise ValueError(f"children of node {n.node_id} do not partition it")
    tree = PartitionTree(nodes, roots[0], graph.vertex_count, m, z)
    _annotate_borders(tree, graph)
    return tree


def import_partition(graph: RoadGraph, source: str | TextIO, m: int = 4, z: int = 300) -> PartitionTree:
    """Build a tree from ``vertex node_path`` lines.

    ``node_path`` is a dotted path below the root (``2`` or ``0.3.1``); a
    flat METIS part id is a one-component path. Vertex ids are 0-based.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    paths: dict[int, tuple[int, ...]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            v_txt, path_txt = line.split()
            v = int(v_txt)
            path = tuple(int(x) for x in path_txt.split("."))
        except ValueError:
            raise ValueError(f"malformed partition line {lineno}: {raw!r}") from None
        if not 0 <= v < graph.vertex_count:
            raise ValueError(f"vertex {v} out of range at line {lineno}")
        paths[v] = path
    if len(paths) != graph.vertex_count:
        raise ValueError("partition file does not assign every vertex")
    prefixes: dict[tuple[int, ...], set[int]] = {(): set(range(graph.vertex_count))}
    for v, path in paths.items():
        for i in range(1, len(path) + 1):
            prefixes.setdefault(path[:i], set()).add(v)
    ordered = sorted(prefixes, key=lambda p: (len(p), p))
    ids = {p: i for i, p in enumerate(ordered)}
    entries = [(ids[p], ids[p[:-1]] if p else None, sorted(prefixes[p])) for p in ordered]
    return _tree_from_parents(graph, entries, m, z)


def dump_tree(tree: PartitionTree, out: TextIO) -> None:
    out.write(f"{TREE_DUMP_VERSION}\n")
    out.write(f"params m={tree.m} z={tree.z}\n")
    for node in tree.nodes:
        parent = -1 if node.parent is None else node.parent
        verts = " ".join(map(str, sorted(node.vertices)))
        out.write(f"node {node.node_id} {parent} {node.level} {verts}\n")


def load_tree(graph: RoadGraph, source: str | TextIO) -> PartitionTree:
    lines = iter(source.splitlines() if isinstance(source, str) else source)
    header = next(lines, "").strip()
    if header != TREE_DUMP_VERSION:
        raise ValueError(f"unsupported tree dump header {header!r}")
    params = dict(kv.split("=") for kv in next(lines).split()[1:])
    entries = []
    for raw in lines:
        parts = raw.split()
        if not parts:
            continue
        nid, parent = int(parts[1]), int(parts[2])
        entries.append((nid, None if parent < 0 else parent, [int(x) for x in parts[4:]]))
    return _tree_from_parents(graph, entries, int(params["m"]), int(params["z"]))


# -- leaf all-pairs distances ---------------------------------------------------


class LeafDistanceTable:
    """Per-leaf dense shortest-distance matrices over internal edges only."""

    def __init__(self) -> None:
        self.order: dict[int, list[int]] = {}
        self.index: dict[int, dict[int, int]] = {}
        self.matrix: dict[int, list[list[float]]] = {}

    def distance(self, leaf: int, u: int, v: int) -> float:
        idx = self.index[leaf]
        return self.matrix[leaf][idx[u]][idx[v]]

    def row(self, leaf: int, u: int, targets: Iterable[int]) -> dict[int, float]:
        idx = self.index[leaf]
        r = self.matrix[leaf][idx[u]]
        return {t: r[idx[t]] for t in targets}


def precompute_leaf_apsp(tree: PartitionTree, graph: RoadGraph) -> LeafDistanceTable:
    table = LeafDistanceTable()
    for leaf in tree.leaves():
        sub, order = graph.induced(tree[leaf].vertices)
        n = len(order)
        rows, cols, data = [], [], []
        for u, nbrs in enumerate(sub.adj):
            for v, w in nbrs.items():
                rows.append(u)
                cols.append(v)
                data.append(w)
        mat = csr_matrix((np.array(data, dtype=np.float64), (rows, cols)), shape=(n, n))
        dist = csgraph_dijkstra(mat, directed=False)
        table.order[leaf] = order
        table.index[leaf] = {v: i for i, v in enumerate(order)}
        table.matrix[leaf] = [[INF if math.isinf(x) else int(x) for x in row] for row in dist.tolist()]
    return table
