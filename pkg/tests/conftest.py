import random

import pytest

from odin.graph import RoadGraph, synthetic_graph
from odin.index import build
from odin.partition import hierarchical_partition, precompute_leaf_apsp


def random_assignments(graph: RoadGraph, count: int, rng: random.Random, max_residual: int = 30):
    out: dict[int, list[tuple[int, int]]] = {}
    for obj in range(count):
        out.setdefault(rng.randrange(graph.vertex_count), []).append((obj, rng.randint(0, max_residual)))
    return out


def make_index(n=300, seed=0, m=4, z=30, objects=60, mu=5, mpbs_mode="sequential"):
    rng = random.Random(seed)
    graph = synthetic_graph(n, seed=seed)
    tree = hierarchical_partition(graph, m=m, z=z, seed=seed)
    tables = precompute_leaf_apsp(tree, graph)
    assignments = random_assignments(graph, objects, rng)
    return build(graph, tree, tables, assignments, mu=mu, mpbs_mode=mpbs_mode), rng


@pytest.fixture
def triangle() -> RoadGraph:
    return RoadGraph.from_edges(3, [(0, 1, 1), (1, 2, 2), (0, 2, 5)])


@pytest.fixture(scope="session")
def small_graph() -> RoadGraph:
    return synthetic_graph(200, seed=11)


_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion for the end-of-run report."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (title, passed, detail)
        print(f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} ({detail})")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} ({detail})")
