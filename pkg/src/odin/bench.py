"""Workload runner: build, step, maintain, query, verify; emits deterministic CSV rows."""

from __future__ import annotations

import csv
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import pairwise
from pathlib import Path
from statistics import mean
from typing import Callable, Sequence, TextIO

from .graph import RoadGraph, load_dimacs, load_dimacs_coords, synthetic_graph
from .index import OdinIndex, build
from .knn import Query, QueryState, knn_inc, knn_init
from .mobsim import WorkloadSpec, derive_live, generate, step
from .oracle import ine_knn
from .partition import hierarchical_partition, import_partition, precompute_leaf_apsp

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "k": "k",
    "m": "m",
    "z": "z",
    "mu": "mu",
    "objects": "objects",
    "movers": "movers",
    "density": "objects",
}

CSV_COLUMNS = [
    "run", "round", "query_id", "query_vertex", "k", "phase", "result",
    "borders_settled", "lives_settled", "heap_ops", "expansion_settles",
    "folds", "unfolds", "partial",
]
TIMING_COLUMNS = ["run", "round", "query_id", "phase", "elapsed_us"]


class ConfigError(ValueError):
    pass


class VerifyError(RuntimeError):
    def __init__(self, message: str, dump: str):
        super().__init__(message)
        self.dump = dump


@dataclass
class RunConfig:
    graph: str = "synthetic:10000"
    partition: str | None = None
    distribution: str = "uniform"
    objects: int = 30000
    movers: float = 0.25
    dt: int = 10
    speed_min: int = 5
    speed_max: int = 20
    sticky: bool = False
    m: int = 4
    z: int = 300
    mu: int = 5
    k: int = 10
    queries: int = 100
    rounds: int = 10
    runs: int = 1
    seed: int = 0
    verify: bool = False
    serial: bool = False
    workers: int = 4
    output: str | None = None

    def validate(self) -> None:
        if self.k <= 0:
            raise ConfigError("k must be positive")
        if self.m < 2:
            raise ConfigError("m must be at least 2")
        if self.z < 2:
            raise ConfigError("z must be at least 2")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.queries < 0 or self.rounds < 1 or self.runs < 1:
            raise ConfigError("queries must be >= 0, rounds and runs >= 1")
        try:
            self.workload(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def workload(self, run: int) -> WorkloadSpec:
        return WorkloadSpec(
            distribution=self.distribution, objects=self.objects, movers=self.movers, dt=self.dt,
            speed_min=self.speed_min, speed_max=self.speed_max, seed=self.seed + 1000 * run,
            sticky=self.sticky,
        )

    def echo(self) -> str:
        return (
            f"config: k={self.k} m={self.m} z={self.z} mu={self.mu} P_o={self.movers} "
            f"objects={self.objects} queries={self.queries} rounds={self.rounds} runs={self.runs} "
            f"graph={self.graph} distribution={self.distribution} seed={self.seed} "
            f"verify={'on' if self.verify else 'off'}"
        )


def _coerce(kind: str, raw: str):
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad {kind} value {raw!r}") from None
    return raw.strip()


def _field_kinds() -> dict[str, str]:
    return {f.name: str(f.type).split(" ")[0] for f in fields(RunConfig)}


def parse_config_text(text: str) -> dict[str, object]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    kinds = _field_kinds()
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value at line {lineno}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r} at line {lineno}")
        out[key] = _coerce(kinds[key], val)
    return out


def load_graph(spec: str, seed: int = 0) -> RoadGraph:
    if spec.startswith("synthetic:"):
        parts = spec.split(":")[1:]
        try:
            n = int(parts[0])
            gseed = int(parts[1]) if len(parts) > 1 else seed
        except (ValueError, IndexError):
            raise ConfigError(f"bad synthetic graph spec {spec!r}; use synthetic:N[:SEED]") from None
        if n <= 0:
            raise ConfigError("synthetic graph size must be positive")
        return synthetic_graph(n, seed=gseed)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"graph file {spec} not found")
    with path.open() as fh:
        g = load_dimacs(fh)
    co = path.with_suffix(".co")
    if co.is_file():
        with co.open() as fh:
            g.coords = load_dimacs_coords(fh, g.vertex_count)
    return g


@dataclass
class MetricsRow:
    run: int
    round: int
    query_id: int
    query_vertex: int
    k: int
    phase: str
    result: str
    borders_settled: int
    lives_settled: int
    heap_ops: int
    expansion_settles: int
    folds: int
    unfolds: int
    partial: bool
    elapsed_us: float = 0.0
    verify: str = ""


@dataclass
class RunResult:
    config: RunConfig
    rows: list[MetricsRow] = field(default_factory=list)
    # (run, round, folds, unfolds) per round; round 1 holds construction
    maintenance: list[tuple[int, int, int, int]] = field(default_factory=list)
    mismatches: int = 0

    def summary(self) -> dict[str, float | int | None]:
        init = [r.elapsed_us for r in self.rows if r.phase == "init"]
        inc = [r.elapsed_us for r in self.rows if r.phase == "inc"]
        return {
            "rows": len(self.rows),
            "mean_init_us": mean(init) if init else None,
            "mean_inc_us": mean(inc) if inc else None,
            "mean_query_us": mean(init + inc) if init or inc else None,
            "folds": sum(m[2] for m in self.maintenance),
            "unfolds": sum(m[3] for m in self.maintenance),
            "mismatches": self.mismatches,
        }


def _format_result(res: Sequence[tuple[int, float]]) -> str:
    return ";".join(f"{o}:{int(d) if d == int(d) else d}" for o, d in res)


def _build_index(cfg: RunConfig, graph: RoadGraph, assignments) -> OdinIndex:
    if cfg.partition:
        with open(cfg.partition) as fh:
            tree = import_partition(graph, fh, m=cfg.m, z=cfg.z)
    else:
        tree = hierarchical_partition(graph, m=cfg.m, z=cfg.z, seed=cfg.seed)
    tables = precompute_leaf_apsp(tree, graph)
    return build(graph, tree, tables, assignments, mu=cfg.mu, m=cfg.m)


def run(cfg: RunConfig, progress: Callable[[str], None] | None = None) -> RunResult:
    """Execute ``cfg.runs`` independent runs; raises VerifyError on the first mismatch."""
    cfg.validate()
    graph = load_graph(cfg.graph, cfg.seed)
    result = RunResult(cfg)
    for run_no in range(cfg.runs):
        _one_run(cfg, graph, run_no, result, progress)
    return result


def _one_run(cfg, graph, run_no, result, progress) -> None:
    spec = cfg.workload(run_no)
    pop, _ = generate(graph, spec)
    index = _build_index(cfg, graph, derive_live(pop, graph))
    rng = random.Random(cfg.seed * 7919 + run_no)
    queries = [Query(rng.randrange(graph.vertex_count), cfg.k, i) for i in range(cfg.queries)]
    states: list[QueryState | None] = [None] * len(queries)
    pool = None if cfg.serial or cfg.workers <= 1 else ThreadPoolExecutor(cfg.workers)

    def answer(i: int) -> tuple[QueryState, float, str]:
        t0 = time.perf_counter()
        if states[i] is None:
            st, phase = knn_init(index, queries[i]), "init"
        else:
            st, phase = knn_inc(index, states[i]), "inc"
        return st, (time.perf_counter() - t0) * 1e6, phase

    try:
        for rnd in range(1, cfg.rounds + 1):
            if rnd == 1:
                # round 1 carries the folds performed while building the index
                folds, unfolds = index.totals.folds, index.totals.unfolds
            else:
                _, delta = step(pop)
                rep = index.maintain(delta)
                folds, unfolds = rep.folds, rep.unfolds
            result.maintenance.append((run_no, rnd, folds, unfolds))
            if pool is None:
                answers = [answer(i) for i in range(len(queries))]
            else:
                answers = list(pool.map(answer, range(len(queries))))
            for i, (st, elapsed, phase) in enumerate(answers):
                states[i] = st
                c = st.counters
                row = MetricsRow(
                    run_no, rnd, i, queries[i].query_vertex, cfg.k, phase, _format_result(st.result),
                    c.borders_settled, c.lives_settled, c.heap_ops, c.expansion_settles,
                    folds, unfolds, st.partial, elapsed,
                )
                if cfg.verify:
                    orc = ine_knn(graph, index.assignments, queries[i].query_vertex, cfg.k)
                    if orc.neighbors != st.result:
                        result.mismatches += 1
                        row.verify = "fail"
                        result.rows.append(row)
                        raise VerifyError(
                            f"run {run_no} round {rnd} query {i} diverges from the oracle",
                            f"query_vertex={queries[i].query_vertex} k={cfg.k}\n"
                            f"index:  {_format_result(st.result)}\n"
                            f"oracle: {_format_result(orc.neighbors)}\n",
                        )
                    row.verify = "pass"
                result.rows.append(row)
            if progress:
                progress(f"run {run_no} round {rnd}: folds={folds} unfolds={unfolds}")
    finally:
        if pool is not None:
            pool.shutdown()


def write_csv(result: RunResult, out: TextIO) -> None:
    cols = CSV_COLUMNS + (["verify"] if result.config.verify else [])
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in result.rows:
        rec = asdict(r)
        rec["partial"] = int(r.partial)
        w.writerow([rec[c] for c in cols])


def write_timing(result: RunResult, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for r in result.rows:
        w.writerow([r.run, r.round, r.query_id, r.phase, f"{r.elapsed_us:.1f}"])


def timing_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".timing.csv")


def save(result: RunResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(result, fh)
    with open(timing_path(path), "w", newline="") as fh:
        write_timing(result, fh)


def parse_axis_value(axis: str, raw: str, vertices: int | None = None):
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if axis == "density":
        try:
            if ":" in raw:
                a, b = raw.split(":")
                frac = int(a) / int(b)
            else:
                frac = float(raw)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad density {raw!r}; use 1:N or a fraction") from None
        if vertices is None:
            raise ConfigError("density sweep needs the graph size")
        return max(1, round(vertices * frac))
    return _coerce(_field_kinds()[SWEEP_AXES[axis]], raw)


@dataclass
class SweepPoint:
    axis: str
    value: str
    result: RunResult


def sweep(
    cfg: RunConfig, axis: str, values: Sequence[str], progress: Callable[[str], None] | None = None
) -> list[SweepPoint]:
    """One run per axis value, other parameters held at ``cfg``."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    graph = load_graph(cfg.graph, cfg.seed) if axis == "density" else None
    points = []
    for raw in values:
        val = parse_axis_value(axis, raw, graph.vertex_count if graph else None)
        point_cfg = replace(cfg, **{SWEEP_AXES[axis]: val})
        points.append(SweepPoint(axis, raw, run(point_cfg, progress)))
    if axis == "k":
        times = [p.result.summary()["mean_query_us"] or 0 for p in points]
        if any(b < a for a, b in pairwise(times)):
            log.warning("mean query time is not nondecreasing in k: %s", times)
    return points


SUMMARY_COLUMNS = ["axis", "value", "rows", "mean_init_us", "mean_inc_us", "mean_query_us", "folds", "unfolds", "mismatches"]


def write_summary(points: Sequence[SweepPoint], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for p in points:
        s = p.result.summary()
        w.writerow([p.axis, p.value] + [_fmt(s[c]) for c in SUMMARY_COLUMNS[2:]])


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.1f}" if isinstance(x, float) else str(x)
