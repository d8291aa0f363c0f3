"""Synthetic moving objects on road edges, stepped in fixed-interval snapshots."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, fields
from itertools import accumulate
from typing import Iterable, TextIO

from .graph import RoadGraph
from .index import Delta, ObjectUpdate

DISTRIBUTIONS = ("uniform", "gaussian", "zipfian")


@dataclass(frozen=True)
class WorkloadSpec:
    distribution: str = "uniform"
    objects: int = 30000
    movers: float = 0.25
    dt: int = 10
    speed_min: int = 5
    speed_max: int = 20
    seed: int = 0
    sticky: bool = False

    def __post_init__(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.objects < 0:
            raise ValueError("object count must be nonnegative")
        if not 0 <= self.movers <= 1:
            raise ValueError("mover fraction must lie in [0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.speed_min <= self.speed_max:
            raise ValueError("speed range must satisfy 0 < min <= max")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "WorkloadSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"expected key=value at line {lineno}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ValueError(f"unknown workload key {key!r} at line {lineno}")
            values[key] = _coerce(kinds[key], val)
        return cls(**values)


def _coerce(kind: str, val: str):
    if kind == "bool":
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    if kind == "int":
        return int(val)
    if kind == "float":
        return float(val)
    return val


@dataclass
class MovingObject:
    obj_id: int
    u: int
    v: int
    offset: int  # from u, in [0, w(u, v)]
    toward_v: bool
    speed: int

    def weight(self, graph: RoadGraph) -> int:
        return graph.adj[self.u][self.v]

    def live(self, graph: RoadGraph) -> tuple[int, int]:
        """(live vertex, residual distance) for this object."""
        w = self.weight(graph)
        if self.offset == 0:
            return self.u, 0
        if self.offset == w:
            return self.v, 0
        return (self.v, w - self.offset) if self.toward_v else (self.u, self.offset)


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    timestamp: int
    # (obj_id, u, v, offset, heading endpoint)
    entries: tuple[tuple[int, int, int, int, int], ...]


@dataclass
class Population:
    graph: RoadGraph
    spec: WorkloadSpec
    objects: list[MovingObject]
    epoch: int = 0
    rng: random.Random = field(default_factory=random.Random, repr=False)
    sticky_movers: list[int] | None = None

    def snapshot(self) -> Snapshot:
        return Snapshot(
            self.epoch,
            self.epoch * self.spec.dt,
            tuple((o.obj_id, o.u, o.v, o.offset, o.v if o.toward_v else o.u) for o in self.objects),
        )


def _embedding(graph: RoadGraph) -> list[tuple[float, float]]:
    if graph.coords is not None:
        return graph.coords
    side = max(1, math.ceil(math.sqrt(graph.vertex_count)))
    return [(i % side, i // side) for i in range(graph.vertex_count)]


def _pick_edges(graph: RoadGraph, spec: WorkloadSpec, rng: random.Random) -> list[tuple[int, int]]:
    edges = [(u, v) for u, v, _ in graph.edges()]
    if not edges:
        raise ValueError("graph has no edges to place objects on")
    n = spec.objects
    if spec.distribution == "uniform":
        cum = list(accumulate(graph.adj[u][v] for u, v in edges))
        return rng.choices(edges, cum_weights=cum, k=n)
    if spec.distribution == "zipfian":
        ranked = edges[:]
        rng.shuffle(ranked)
        cum = list(accumulate(1.0 / r for r in range(1, len(ranked) + 1)))
        return rng.choices(ranked, cum_weights=cum, k=n)
    from scipy.spatial import cKDTree

    coords = _embedding(graph)
    xs = [c[0] for c in coords]
    ys = [c[1] for c in coords]
    cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
    sigma = 0.15 * max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    kd = cKDTree(coords)
    out = []
    while len(out) < n:
        px, py = rng.gauss(cx, sigma), rng.gauss(cy, sigma)
        _, u = kd.query((px, py))
        u = int(u)
        nbrs = sorted(graph.adj[u])
        if not nbrs:
            continue
        out.append((u, rng.choice(nbrs)))
    return out


def generate(graph: RoadGraph, spec: WorkloadSpec) -> tuple[Population, Snapshot]:
    rng = random.Random(spec.seed)
    objects = []
    if spec.objects:
        for i, (u, v) in enumerate(_pick_edges(graph, spec, rng)):
            w = graph.adj[u][v]
            objects.append(
                MovingObject(i, u, v, rng.randint(0, w), rng.random() < 0.5, rng.randint(spec.speed_min, spec.speed_max))
            )
    pop = Population(graph, spec, objects, 0, rng)
    if spec.sticky:
        pop.sticky_movers = sorted(rng.sample(range(len(objects)), round(spec.movers * len(objects))))
    return pop, pop.snapshot()


def derive_live(population_or_snapshot, graph: RoadGraph) -> dict[int, list[tuple[int, int]]]:
    """Live vertex -> [(object id, residual distance)] sorted by object id."""
    out: dict[int, list[tuple[int, int]]] = {}
    for obj in _as_objects(population_or_snapshot):
        v, d = obj.live(graph)
        out.setdefault(v, []).append((obj.obj_id, d))
    for bucket in out.values():
        bucket.sort()
    return out


def _as_objects(src) -> Iterable[MovingObject]:
    if isinstance(src, Population):
        return src.objects
    if isinstance(src, Snapshot):
        return (MovingObject(o, u, v, off, head == v, 1) for o, u, v, off, head in src.entries)
    return src


def _advance(obj: MovingObject, graph: RoadGraph, budget: int, rng: random.Random) -> None:
    while budget > 0:
        w = graph.adj[obj.u][obj.v]
        left = w - obj.offset if obj.toward_v else obj.offset
        if budget <= left:
            obj.offset += budget if obj.toward_v else -budget
            return
        budget -= left
        at, came = (obj.v, obj.u) if obj.toward_v else (obj.u, obj.v)
        nbrs = sorted(graph.adj[at])
        choices = [x for x in nbrs if x != came] or nbrs
        nxt = rng.choice(choices)
        obj.u, obj.v, obj.offset, obj.toward_v = at, nxt, 0, True


def step(population: Population, graph: RoadGraph | None = None, spec: WorkloadSpec | None = None) -> tuple[Snapshot, Delta]:
    """Advance one interval; returns the new snapshot and the delta for index maintenance."""
    graph = graph or population.graph
    spec = spec or population.spec
    rng = population.rng
    objs = population.objects
    before = {o.obj_id: o.live(graph) for o in objs}
    if population.sticky_movers is not None:
        movers = population.sticky_movers
    else:
        movers = sorted(rng.sample(range(len(objs)), round(spec.movers * len(objs))))
    for i in movers:
        _advance(objs[i], graph, objs[i].speed * spec.dt, rng)
    population.epoch += 1
    delta = Delta()
    counts: dict[int, int] = {}
    for (v, _) in before.values():
        counts[v] = counts.get(v, 0) + 1
    after_counts = dict(counts)
    for i in movers:
        o = objs[i]
        old_v, old_d = before[o.obj_id]
        new_v, new_d = o.live(graph)
        if (old_v, old_d) == (new_v, new_d):
            continue
        delta.updates.append(ObjectUpdate(o.obj_id, old_v, new_v, new_d))
        after_counts[old_v] -= 1
        after_counts[new_v] = after_counts.get(new_v, 0) + 1
    for v, c in after_counts.items():
        was = counts.get(v, 0)
        if was and not c:
            delta.became_obsolete.add(v)
        elif c and not was:
            delta.became_live.add(v)
    return population.snapshot(), delta


def dump_snapshot(snap: Snapshot, out: TextIO) -> None:
    for obj, u, v, off, head in snap.entries:
        out.write(f"{snap.epoch} {obj} {u} {v} {off} {head}\n")


def load_snapshots(source: str | TextIO, dt: int = 10) -> list[Snapshot]:
    lines = source.splitlines() if isinstance(source, str) else source
    rows: dict[int, list[tuple[int, int, int, int, int]]] = {}
    for lineno, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise ValueError(f"expected 6 fields at line {lineno}")
        e, *rest = (int(x) for x in parts)
        rows.setdefault(e, []).append(tuple(rest))  # type: ignore[arg-type]
    return [Snapshot(e, e * dt, tuple(sorted(r))) for e, r in sorted(rows.items())]
