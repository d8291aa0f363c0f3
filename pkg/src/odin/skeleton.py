"""Per-node shortcut graph over border and live vertices."""

from __future__ import annotations

from itertools import chain
from typing import Iterator, Mapping


class SkeletonGraph:
    """Edges join every border to every other border and to every live vertex.

    Weights are in-subgraph shortest distances. A vertex that is both border
    and live is stored once, as a border, and also listed in ``lives``.
    Live-to-live edges never exist.
    """

    __slots__ = ("borders", "lives", "bb", "bl", "lb")

    def __init__(self, borders):
        self.borders: frozenset[int] = frozenset(borders)
        self.lives: set[int] = set()
        self.bb: dict[int, dict[int, float]] = {b: {} for b in self.borders}
        # pure live -> border -> w, mirrored as border -> pure live -> w
        self.bl: dict[int, dict[int, float]] = {}
        self.lb: dict[int, dict[int, float]] = {b: {} for b in self.borders}

    def set_border_weight(self, a: int, b: int, w: float) -> None:
        self.bb[a][b] = w
        self.bb[b][a] = w

    def add_live(self, v: int, row: Mapping[int, float] | None = None) -> None:
        """Register ``v`` as live; ``row`` maps every border to its distance from ``v``."""
        self.lives.add(v)
        if v in self.borders:
            return
        if row is None:
            raise ValueError(f"live vertex {v} needs border distances")
        r = {b: row[b] for b in self.borders}
        self.bl[v] = r
        for b, w in r.items():
            self.lb[b][v] = w

    def remove_live(self, v: int) -> None:
        self.lives.discard(v)
        r = self.bl.pop(v, None)
        if r is not None:
            for b in r:
                del self.lb[b][v]

    @property
    def pure_lives(self) -> Iterator[int]:
        return iter(self.bl)

    def vertices(self) -> set[int]:
        return set(self.borders) | self.lives

    def weight(self, u: int, v: int) -> float | None:
        if u in self.borders:
            return self.bb[u].get(v, self.lb[u].get(v))
        if v in self.borders:
            return self.weight(v, u)
        return None

    def neighbors(self, u: int) -> Iterator[tuple[int, float]]:
        if u in self.borders:
            return chain(self.bb[u].items(), self.lb[u].items())
        return iter(self.bl[u].items())

    def edges(self) -> list[tuple[int, int, float]]:
        """Canonical ``(min, max, w)`` edge list, sorted for byte-stable dumps."""
        out = []
        for a, row in self.bb.items():
            out.extend((a, b, w) for b, w in row.items() if a < b)
        for v, row in self.bl.items():
            out.extend((min(v, b), max(v, b), w) for b, w in row.items())
        out.sort()
        return out

    def edge_count(self) -> int:
        nb = len(self.borders)
        return nb * (nb - 1) // 2 + nb * len(self.bl)

    def __repr__(self) -> str:
        return f"SkeletonGraph(borders={len(self.borders)}, lives={len(self.lives)})"
