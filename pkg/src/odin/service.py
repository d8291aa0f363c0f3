"""HTTP front end: simulation sessions holding an index, a workload and registered queries."""

from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .bench import ConfigError, load_graph
from .index import OdinIndex, build, dump_index
from .knn import Query, QueryState, knn_inc, knn_init
from .mobsim import Population, WorkloadSpec, derive_live, generate, step
from .oracle import ine_knn
from .partition import hierarchical_partition, precompute_leaf_apsp
from .schemas import (
    Health,
    Neighbor,
    QueryCounters,
    QueryCreate,
    QueryResult,
    SessionCreate,
    SessionInfo,
    StepReport,
    StepRequest,
)


@dataclass
class Session:
    session_id: str
    index: OdinIndex
    population: Population
    queries: dict[int, QueryState] = field(default_factory=dict)
    verified: dict[int, bool] = field(default_factory=dict)
    # maintenance is exclusive; queries of one session are serialized with it
    lock: threading.Lock = field(default_factory=threading.Lock)

    def info(self) -> SessionInfo:
        g = self.index.graph
        tree = self.index.tree
        return SessionInfo(
            session_id=self.session_id,
            vertices=g.vertex_count,
            edges=g.edge_count,
            leaves=len(tree.leaves()),
            height=tree.height,
            active_nodes=len(self.index.active_nodes()),
            live_vertices=len(self.index.assignments),
            objects=self.index.object_count,
            epoch=self.population.epoch,
            queries=len(self.queries),
        )

    def result(self, qid: int) -> QueryResult:
        st = self.queries[qid]
        c = st.counters
        return QueryResult(
            query_id=qid,
            query_vertex=st.query.query_vertex,
            k=st.query.k,
            round=st.round,
            neighbors=[Neighbor(object_id=o, distance=d) for o, d in st.result],
            partial=st.partial,
            counters=QueryCounters(
                borders_settled=c.borders_settled,
                lives_settled=c.lives_settled,
                heap_ops=c.heap_ops,
                expansion_settles=c.expansion_settles,
            ),
            verified=self.verified.get(qid),
        )

    def verify(self, qid: int) -> None:
        st = self.queries[qid]
        orc = ine_knn(self.index.graph, self.index.assignments, st.query.query_vertex, st.query.k)
        self.verified[qid] = orc.neighbors == st.result


def create_app() -> FastAPI:
    app = FastAPI(title="odin", version="0.1.0")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return s

    @app.get("/healthz", response_model=Health)
    def healthz() -> Health:
        return Health(sessions=len(sessions))

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: SessionCreate) -> SessionInfo:
        try:
            graph = load_graph(req.graph, req.seed)
            spec = WorkloadSpec(
                distribution=req.distribution, objects=req.objects, movers=req.movers, dt=req.dt,
                speed_min=req.speed_min, speed_max=req.speed_max, seed=req.seed,
            )
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        pop, _ = generate(graph, spec)
        tree = hierarchical_partition(graph, m=req.m, z=req.z, seed=req.seed)
        tables = precompute_leaf_apsp(tree, graph)
        index = build(graph, tree, tables, derive_live(pop, graph), mu=req.mu, m=req.m)
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, index, pop)
        with registry_lock:
            sessions[sid] = session
        return session.info()

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        return get(session_id).info()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> None:
        with registry_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions/{session_id}/queries", response_model=QueryResult, status_code=201)
    def register_query(session_id: str, req: QueryCreate) -> QueryResult:
        s = get(session_id)
        if req.query_vertex >= s.index.graph.vertex_count:
            raise HTTPException(status_code=422, detail="query vertex out of range")
        with s.lock:
            qid = len(s.queries)
            s.queries[qid] = knn_init(s.index, Query(req.query_vertex, req.k, qid))
            return s.result(qid)

    @app.get("/sessions/{session_id}/queries/{query_id}", response_model=QueryResult)
    def query_result(session_id: str, query_id: int) -> QueryResult:
        s = get(session_id)
        with s.lock:
            if query_id not in s.queries:
                raise HTTPException(status_code=404, detail=f"unknown query {query_id}")
            return s.result(query_id)

    @app.post("/sessions/{session_id}/step", response_model=StepReport)
    def step_session(session_id: str, req: StepRequest) -> StepReport:
        s = get(session_id)
        with s.lock:
            totals = dict(inserted=0, removed=0, folds=0, unfolds=0, nodes_touched=0)
            for _ in range(req.epochs):
                _, delta = step(s.population)
                rep = s.index.maintain(delta)
                for key in totals:
                    totals[key] += getattr(rep, key)
                for st in s.queries.values():
                    knn_inc(s.index, st)
            if req.verify:
                for qid in s.queries:
                    s.verify(qid)
            return StepReport(
                epoch=s.population.epoch,
                results=[s.result(q) for q in s.queries],
                **totals,
            )

    @app.get("/sessions/{session_id}/index/dump", response_class=PlainTextResponse)
    def index_dump(session_id: str) -> str:
        s = get(session_id)
        with s.lock:
            buf = io.StringIO()
            dump_index(s.index, buf)
            return buf.getvalue()

    return app


app = create_app()
