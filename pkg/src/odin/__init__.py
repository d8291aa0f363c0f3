"""Elastic tree index for continuous k-nearest-neighbour queries over moving objects on road networks."""

from .graph import INF, DimacsParseError, RoadGraph, dijkstra, load_dimacs, synthetic_graph
from .index import Delta, ObjectUpdate, OdinIndex, build, check_invariants
from .knn import Query, QueryState, knn_inc, knn_init, preprocess_query
from .mobsim import WorkloadSpec, derive_live, generate, step
from .mpbs import mpbs
from .oracle import brute_sd, ine_knn
from .partition import hierarchical_partition, precompute_leaf_apsp

__version__ = "0.1.0"

__all__ = [
    "INF", "DimacsParseError", "RoadGraph", "dijkstra", "load_dimacs", "synthetic_graph",
    "Delta", "ObjectUpdate", "OdinIndex", "build", "check_invariants",
    "Query", "QueryState", "knn_inc", "knn_init", "preprocess_query",
    "WorkloadSpec", "derive_live", "generate", "step", "mpbs",
    "brute_sd", "ine_knn", "hierarchical_partition", "precompute_leaf_apsp",
]
