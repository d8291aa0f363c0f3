"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import heapq
import io
import random
import statistics
import time

import pytest

from odin.bench import RunConfig, run, write_csv
from odin.graph import INF, synthetic_graph
from odin.index import Delta, ObjectUpdate, build, check_invariants
from odin.knn import Query, knn_inc, knn_init, skeleton_distances, view_vertices
from odin.mobsim import WorkloadSpec, derive_live, generate, step
from odin.mpbs import CombinedGraph, combine_skeletons, mpbs
from odin.oracle import brute_sd, ine_knn
from odin.partition import hierarchical_partition, precompute_leaf_apsp

from test_index import skeleton_mismatches

pytestmark = pytest.mark.slow

KS = (1, 5, 10, 50)
MOVER_RATES = (0.0, 0.25, 1.0)


def fixture(seed: int, n_range=(100, 1000), objects_range=(20, 200), mu=5):
    """Random graph, tree, mobile population and index, all derived from ``seed``."""
    rng = random.Random(seed)
    g = synthetic_graph(rng.randint(*n_range), seed=seed)
    tree = hierarchical_partition(g, m=rng.choice([2, 3, 4]), z=rng.choice([20, 40, 80]), seed=seed)
    tables = precompute_leaf_apsp(tree, g)
    movers = MOVER_RATES[seed % 3]
    pop, _ = generate(g, WorkloadSpec(objects=rng.randint(*objects_range), movers=movers, seed=seed))
    index = build(g, tree, tables, derive_live(pop, g), mu=mu)
    return index, pop, rng


def test_oracle_equivalence(criterion):
    started = time.perf_counter()
    rounds = mismatches = 0
    for seed in range(50):
        index, pop, rng = fixture(seed)
        g = index.graph
        states = [knn_init(index, Query(rng.randrange(g.vertex_count), KS[i % 4], i)) for i in range(20)]
        for epoch in range(10):
            if epoch:
                index.maintain(step(pop)[1])
            for st in states:
                if epoch:
                    knn_inc(index, st)
                fresh = knn_init(index, st.query)
                expected = ine_knn(g, index.assignments, st.query.query_vertex, st.query.k).neighbors
                rounds += 1
                mismatches += (st.result != expected) + (fresh.result != expected)
    elapsed = time.perf_counter() - started
    ok = mismatches == 0 and rounds >= 10_000 and elapsed < 300
    assert criterion(1, "oracle equivalence", ok, f"{rounds} query-rounds, {mismatches} mismatches, {elapsed:.0f}s")


def test_skeleton_weights_equal_subgraph_distances(criterion):
    nodes = edges = bad = 0
    for seed in range(10):
        index, pop, _ = fixture(100 + seed, n_range=(200, 800), mu=5 + seed)
        for epoch in range(6):
            if epoch:
                index.maintain(step(pop)[1])
            bad += len(skeleton_mismatches(index))
        for node in index.nodes:
            if node.materialized and not index.tree[node.node_id].is_leaf:
                nodes += 1
                edges += node.skeleton.edge_count()
    ok = bad == 0 and nodes > 0
    assert criterion(2, "skeleton weights", ok, f"{nodes} internal skeletons, {edges} edges at end, {bad} wrong weights")


def test_view_distances(criterion):
    pairs = bad = through_live = 0
    for seed in range(10):
        index, _, rng = fixture(200 + seed, n_range=(300, 1000))
        view = sorted(view_vertices(index))
        for _ in range(20):
            v = rng.randrange(index.graph.vertex_count)
            targets = rng.sample(view, 5)
            dists, counters = skeleton_distances(index, v, targets)
            through_live += counters.pure_live_relaxations
            for t in targets:
                pairs += 1
                bad += dists[t] != brute_sd(index.graph, v, t)
    ok = pairs == 1000 and bad == 0 and through_live == 0
    assert criterion(3, "view distances", ok, f"{pairs} pairs, {bad} wrong, {through_live} relaxations through pure lives")


def combined_graphs(limit: int = 300):
    """Combined children skeletons of internal nodes, drawn from random indices."""
    seed = 300
    while True:
        index, _, _ = fixture(seed, n_range=(200, 1200), mu=(5, 20, 60)[seed % 3])
        seed += 1
        tree = index.tree
        for node in index.nodes:
            tn = tree[node.node_id]
            if tn.is_leaf or not all(index.nodes[c].materialized for c in tn.children):
                continue
            kids = [index.nodes[c].skeleton for c in tn.children]
            ext = [
                (b, r, w)
                for c in tn.children
                for b, es in tree[c].external_edges.items()
                for r, w in es
                if tree.contains(node.node_id, r)
            ]
            cg = combine_skeletons(kids, ext)
            if cg.vertex_count > limit:
                continue
            borders = set(tn.borders) or {min(cg.adj)}
            lives = set().union(*(k.lives for k in kids))
            yield cg, borders, lives


def per_source(cg: CombinedGraph, sources, columns):
    out = {}
    for s in sources:
        dist = {s: 0}
        done = set()
        frontier = [(0, s)]
        while frontier:
            d, u = heapq.heappop(frontier)
            if u in done:
                continue
            done.add(u)
            for v, w in cg.adj[u].items():
                if d + w < dist.get(v, INF):
                    dist[v] = d + w
                    heapq.heappush(frontier, (d + w, v))
        for c in columns:
            out[s, c] = dist.get(c, INF)
    return out


def test_mpbs_exact_and_sound(criterion):
    graphs = wrong = unsound = divergent = events = 0
    for cg, borders, lives in combined_graphs():
        m = mpbs(cg, borders, lives, record=True)
        expected = per_source(cg, borders, borders | lives)
        wrong += sum(m[k] != d for k, d in expected.items())
        events += len(m.stats.settle_events)
        unsound += sum(dm > a + b for dm, a, b in m.stats.settle_events)
        base = m.as_dict()
        for mode in ("serial", "threaded"):
            divergent += mpbs(cg, borders, lives, mode=mode).as_dict() != base
        graphs += 1
        if graphs == 100:
            break
    ok = graphs == 100 and wrong == unsound == divergent == 0
    detail = f"{graphs} graphs, {wrong} wrong entries, {events} early settles, {unsound} unsound, {divergent} mode mismatches"
    assert criterion(4, "mpbs exactness and soundness", ok, detail)


def test_elasticity_invariants(criterion):
    checks = violations = 0
    for seed in range(12):
        index, pop, rng = fixture(400 + seed, mu=(3, 5, 8)[seed % 3])
        extra = range(10**6, 10**6 + 150)
        for epoch in range(10):
            delta = step(pop)[1]
            # density shock on top of the simulated movement: a burst of parked objects, later withdrawn
            if epoch == 4:
                delta.updates += [ObjectUpdate(o, None, rng.randrange(index.graph.vertex_count)) for o in extra]
            elif epoch == 7:
                delta.updates += [ObjectUpdate(o, index.object_at[o], None) for o in extra]
            delta.became_live, delta.became_obsolete = set(), set()
            index.maintain(delta)
            problems = check_invariants(index)
            checks += 1
            violations += len(problems)
    boundary_ok = _boundaries_hold()
    ok = violations == 0 and boundary_ok
    assert criterion(5, "elasticity invariants", ok, f"{checks} post-maintain sweeps, {violations} violations, boundaries {'hold' if boundary_ok else 'broken'}")


def _boundaries_hold() -> bool:
    g = synthetic_graph(500, seed=21)
    tree = hierarchical_partition(g, m=4, z=30, seed=21)
    tables = precompute_leaf_apsp(tree, g)
    p = next(n.node_id for n in tree.nodes if n.height == 1 and n.parent is not None and len(n.vertices) >= 20)
    verts = sorted(tree[p].vertices)
    exactly_mu = build(g, tree, tables, {v: [(i, 0)] for i, v in enumerate(verts[:5])}, mu=5)
    no_fold = not exactly_mu.nodes[p].active and all(exactly_mu.nodes[c].active for c in tree[p].children)
    index = build(g, tree, tables, {}, mu=3)
    host = index.active_node_of(verts[0])
    limit = index.m * index.mu
    rep = index.maintain(Delta([ObjectUpdate(i, None, v) for i, v in enumerate(verts[:limit])]))
    no_unfold = rep.unfolds == 0 and index.nodes[host].active and index.nodes[host].live_count == limit
    return no_fold and no_unfold


def test_incremental_reuse(criterion):
    static_pairs = static_worse = 0
    static_init, static_inc, dyn_init, dyn_inc = [], [], [], []
    for seed in range(4):
        index, pop, rng = fixture(500 + seed, n_range=(800, 1000), objects_range=(150, 200))
        g = index.graph
        states = [knn_init(index, Query(rng.randrange(g.vertex_count), 10, i)) for i in range(25)]
        # static round: no movement, so no fold/unfold either
        rep = index.maintain(Delta())
        assert rep.folds == rep.unfolds == 0
        for st in states:
            t0 = time.perf_counter()
            fresh = knn_init(index, st.query)
            static_init.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            knn_inc(index, st)
            static_inc.append(time.perf_counter() - t0)
            static_pairs += 1
            static_worse += st.counters.settled > fresh.counters.settled
        pop.spec = WorkloadSpec(objects=len(pop.objects), movers=0.25, seed=seed)
        for _ in range(5):
            index.maintain(step(pop)[1])
            for st in states:
                t0 = time.perf_counter()
                knn_init(index, st.query)
                dyn_init.append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                knn_inc(index, st)
                dyn_inc.append(time.perf_counter() - t0)
    si, sn = statistics.mean(static_init) * 1e6, statistics.mean(static_inc) * 1e6
    di, dn = statistics.mean(dyn_init) * 1e6, statistics.mean(dyn_inc) * 1e6
    ok = static_worse == 0 and sn <= si and dn < di and static_pairs == 100
    detail = (f"static {static_pairs} queries, {static_worse} with more settles, inc {sn:.0f}us vs init {si:.0f}us; "
              f"dynamic inc {dn:.0f}us vs init {di:.0f}us")
    assert criterion(6, "incremental reuse", ok, detail)


DENSITIES = (10, 20, 40, 80, 160, 320)


def test_density_trend(criterion):
    vertices = 2000
    times = []
    for ratio in DENSITIES:
        per_seed = []
        for seed in range(3):
            cfg = RunConfig(graph=f"synthetic:{vertices}:7", objects=vertices // ratio, k=5, z=40,
                            queries=50, rounds=10, serial=True, seed=seed)
            per_seed.append(run(cfg).summary()["mean_query_us"])
        times.append(statistics.median(per_seed))
    growth = max(times) / times[0]

    g = synthetic_graph(vertices, seed=7)
    tree = hierarchical_partition(g, z=40, seed=0)
    tables = precompute_leaf_apsp(tree, g)
    folds = [0.0] * (len(DENSITIES) - 1)
    samples = 4
    for seed in range(samples):
        pop, _ = generate(g, WorkloadSpec(objects=vertices // DENSITIES[0], seed=seed))
        index = build(g, tree, tables, derive_live(pop, g))
        rng = random.Random(seed)
        alive = sorted(index.object_at)
        for i in range(len(folds)):
            gone = set(rng.sample(alive, len(alive) // 2))
            rep = index.maintain(Delta([ObjectUpdate(o, index.object_at[o], None) for o in sorted(gone)]))
            alive = [o for o in alive if o not in gone]
            folds[i] += rep.folds / samples
    peak = max(range(len(folds)), key=folds.__getitem__)
    spike = (
        0 < peak < len(folds) - 1
        and all(f < folds[peak] for i, f in enumerate(folds) if i != peak)
        and all(f <= folds[peak] / 2 for f in folds[peak + 1:])
    )
    ok = growth <= 5 and spike
    detail = (f"mean query us {[round(t) for t in times]}, growth {growth:.2f}x over 32x density drop; "
              f"folds per halving {[round(f, 2) for f in folds]}")
    assert criterion(7, "density trend", ok, detail)


def test_maintenance_locality(criterion):
    ops = off = 0
    for seed in range(8):
        index, pop, _ = fixture(600 + seed)
        tree = index.tree
        for _ in range(8):
            _, delta = step(pop)
            obsolete = sorted(delta.became_obsolete)
            fresh = sorted(delta.became_live)
            expected = [len(tree.branch(tree.leaf_of(v), index.active_node_of(v))) for v in obsolete + fresh]
            rep = index.maintain(delta)
            ops += len(expected)
            off += sum(a != b for a, b in zip(expected, rep.branch_lengths, strict=True))
            off += rep.nodes_touched != sum(expected)
        for v in random.Random(seed).sample(range(index.graph.vertex_count), 20):
            versions = [n.version for n in index.nodes]
            touched = index.remove_live(v) if index.is_live(v) else index.insert_live(v, [(10**6 + v, 0)])
            changed = sorted(i for i, n in enumerate(index.nodes) if n.version != versions[i])
            ops += 1
            off += changed != sorted(touched) or touched != tree.branch(tree.leaf_of(v), index.active_node_of(v))
    ok = off == 0 and ops > 0
    assert criterion(8, "maintenance locality", ok, f"{ops} insert/remove operations, {off} off-branch")


def test_determinism(criterion):
    cfg = RunConfig(graph="synthetic:600", objects=120, queries=20, rounds=6, z=60, serial=True, seed=5, verify=True)
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        write_csv(run(cfg), buf)
        texts.append(buf.getvalue())
    ok = texts[0] == texts[1] and texts[0].count("\n") == 1 + 20 * 6
    assert criterion(9, "determinism", ok, f"{len(texts[0])} bytes per CSV, identical={texts[0] == texts[1]}")
