import io
import random

import pytest

from odin.graph import RoadGraph, dijkstra, synthetic_graph
from odin.partition import (
    _balance_bounds,
    dump_tree,
    hierarchical_partition,
    import_partition,
    leaf_of,
    load_tree,
    precompute_leaf_apsp,
    split_vertices,
)


@pytest.fixture(scope="module")
def graph():
    return synthetic_graph(600, seed=9)


@pytest.fixture(scope="module")
def tree(graph):
    return hierarchical_partition(graph, m=4, z=40, seed=1)


def test_children_partition_parent(tree, graph):
    root = tree[tree.root]
    assert root.vertices == frozenset(range(graph.vertex_count))
    for node in tree.nodes:
        if node.is_leaf:
            assert len(node.vertices) <= tree.z
            continue
        kids = [tree[c].vertices for c in node.children]
        assert frozenset().union(*kids) == node.vertices
        assert sum(map(len, kids)) == len(node.vertices)
        assert 2 <= len(kids) <= tree.m


def test_children_are_balanced(tree):
    for node in tree.nodes:
        if node.is_leaf or len(node.vertices) <= tree.m:
            continue
        lo, hi = _balance_bounds(len(node.vertices), tree.m, 1.10)
        for c in node.children:
            assert lo <= len(tree[c].vertices) <= hi


def test_leaf_of_and_branch(tree, graph):
    for v in random.Random(0).sample(range(graph.vertex_count), 50):
        leaf = leaf_of(tree, v)
        assert tree[leaf].is_leaf and v in tree[leaf].vertices
        path = tree.branch(leaf, tree.root)
        assert path[0] == leaf and path[-1] == tree.root
        for x in path:
            assert tree.contains(x, v)
        for x in tree.nodes:
            if x.node_id not in path:
                assert not tree.contains(x.node_id, v)


def test_borders_match_brute_force(tree, graph):
    for node in tree.nodes:
        brute = {v for v in node.vertices if any(u not in node.vertices for u in graph.adj[v])}
        assert node.borders == brute
        for b, edges in node.external_edges.items():
            assert b in node.borders
            assert edges == sorted((u, w) for u, w in graph.adj[b].items() if u not in node.vertices)


def test_every_edge_is_inside_a_leaf_or_crosses_recorded_borders(tree, graph):
    for u, v, w in graph.edges():
        lu, lv = leaf_of(tree, u), leaf_of(tree, v)
        if lu == lv:
            continue
        assert (v, w) in tree[lu].external_edges[u]
        assert (u, w) in tree[lv].external_edges[v]


def test_small_graph_is_single_leaf():
    g = synthetic_graph(50, seed=1)
    t = hierarchical_partition(g, m=4, z=50)
    assert len(t) == 1 and t[t.root].is_leaf and t.height == 0
    assert t[t.root].borders == frozenset()


def test_split_degenerates_to_singletons():
    g = RoadGraph.from_edges(3, [(0, 1, 1), (1, 2, 1)])
    assert split_vertices(g, [0, 1, 2], 4, 1.1, random.Random(0)) == [[0], [1], [2]]


def test_bad_parameters():
    g = synthetic_graph(20)
    with pytest.raises(ValueError):
        hierarchical_partition(g, m=1)
    with pytest.raises(ValueError):
        hierarchical_partition(g, z=1)


def test_leaf_table_matches_induced_dijkstra(tree, graph):
    tables = precompute_leaf_apsp(tree, graph)
    for leaf in tree.leaves()[:6]:
        sub, order = graph.induced(tree[leaf].vertices)
        for i, u in enumerate(order):
            d = dijkstra(sub, i)
            for j, v in enumerate(order):
                assert tables.distance(leaf, u, v) == d[j]


def test_triangle_leaf_by_hand(triangle):
    t = hierarchical_partition(triangle, z=3)
    tables = precompute_leaf_apsp(t, triangle)
    assert tables.distance(t.root, 0, 2) == 3
    assert tables.distance(t.root, 2, 0) == 3
    assert tables.distance(t.root, 1, 1) == 0


def test_dump_load_round_trip(tree, graph):
    buf = io.StringIO()
    dump_tree(tree, buf)
    again = load_tree(graph, buf.getvalue())
    assert [n.vertices for n in again.nodes] == [n.vertices for n in tree.nodes]
    assert [n.borders for n in again.nodes] == [n.borders for n in tree.nodes]
    assert (again.m, again.z) == (tree.m, tree.z)


def test_import_dotted_paths():
    g = synthetic_graph(40, seed=3)
    lines = [f"{v} {v % 2}.{v % 3}" for v in range(g.vertex_count)]
    t = import_partition(g, "\n".join(lines), m=3, z=10)
    assert len(t[t.root].children) == 2
    for v in range(g.vertex_count):
        leaf = t[leaf_of(t, v)]
        assert leaf.vertices == frozenset(u for u in range(40) if (u % 2, u % 3) == (v % 2, v % 3))


def test_import_rejects_bad_files():
    g = synthetic_graph(10, seed=3)
    with pytest.raises(ValueError, match="out of range at line 1"):
        import_partition(g, "10 0\n")
    with pytest.raises(ValueError, match="every vertex"):
        import_partition(g, "0 0\n")
    with pytest.raises(ValueError, match="malformed"):
        import_partition(g, "zero 0\n")
