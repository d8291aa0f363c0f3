from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class SessionCreate(BaseModel):
    graph: str = Field("synthetic:500", description="synthetic:N[:SEED] or a DIMACS .gr path")
    distribution: Literal["uniform", "gaussian", "zipfian"] = "uniform"
    objects: int = Field(50, ge=0)
    movers: float = Field(0.25, ge=0, le=1)
    dt: int = Field(10, gt=0)
    speed_min: int = Field(5, gt=0)
    speed_max: int = Field(20, gt=0)
    m: int = Field(4, ge=2)
    z: int = Field(300, ge=2)
    mu: int = Field(5, gt=0)
    seed: int = 0


class SessionInfo(BaseModel):
    session_id: str
    vertices: int
    edges: int
    leaves: int
    height: int
    active_nodes: int
    live_vertices: int
    objects: int
    epoch: int
    queries: int


class QueryCreate(BaseModel):
    query_vertex: int = Field(..., ge=0)
    k: int = Field(10, gt=0)


class Neighbor(BaseModel):
    object_id: int
    distance: float


class QueryCounters(BaseModel):
    borders_settled: int
    lives_settled: int
    heap_ops: int
    expansion_settles: int


class QueryResult(BaseModel):
    query_id: int
    query_vertex: int
    k: int
    round: int
    neighbors: list[Neighbor]
    partial: bool
    counters: QueryCounters
    verified: bool | None = None


class StepRequest(BaseModel):
    epochs: int = Field(1, ge=1, le=1000)
    verify: bool = False


class StepReport(BaseModel):
    epoch: int
    inserted: int
    removed: int
    folds: int
    unfolds: int
    nodes_touched: int
    results: list[QueryResult]


class Health(BaseModel):
    status: Literal["ok"] = "ok"
    sessions: int
