"""Directed acyclic graphs over nodes ``1..d`` with reachability and path queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable
import heapq

import numpy as np

DEFAULT_MAX_PATHS = 10**6


class CycleError(ValueError):
    """Raised when an edge set contains a directed cycle."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__("graph contains the cycle " + " -> ".join(map(str, cycle)))


class PathLimitError(RuntimeError):
    """Raised when path enumeration would exceed its cap."""


@dataclass(frozen=True)
class Dag:
    """Immutable DAG on nodes ``1..node_count``; an edge ``(j, i)`` means ``j -> i``."""

    node_count: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 1:
            raise ValueError(f"node_count must be a positive integer, got {self.node_count!r}")
        edges = []
        for e in self.edges:
            j, i = (int(v) for v in e)
            for v in (j, i):
                if not 1 <= v <= self.node_count:
                    raise ValueError(f"edge {e} references node {v} outside 1..{self.node_count}")
            if j == i:
                raise ValueError(f"self-loop on node {j}")
            edges.append((j, i))
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", frozenset(edges))
        # fail fast on cycles
        self.order

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        return cls(d, tuple(tuple(e) for e in edges))

    @property
    def nodes(self) -> range:
        return range(1, self.node_count + 1)

    @cached_property
    def _parents(self) -> dict[int, tuple[int, ...]]:
        pa: dict[int, list[int]] = {v: [] for v in self.nodes}
        for j, i in self.edges:
            pa[i].append(j)
        return {v: tuple(sorted(ps)) for v, ps in pa.items()}

    @cached_property
    def _children(self) -> dict[int, tuple[int, ...]]:
        ch: dict[int, list[int]] = {v: [] for v in self.nodes}
        for j, i in self.edges:
            ch[j].append(i)
        return {v: tuple(sorted(cs)) for v, cs in ch.items()}

    def parents(self, i: int) -> tuple[int, ...]:
        self._check(i)
        return self._parents[i]

    def children(self, j: int) -> tuple[int, ...]:
        self._check(j)
        return self._children[j]

    @cached_property
    def order(self) -> tuple[int, ...]:
        return tuple(_kahn(self.node_count, self._children, self._parents))

    @cached_property
    def reach(self) -> np.ndarray:
        """Boolean ``d x d`` matrix, ``reach[h-1, i-1]`` true iff ``h`` is in ``An(i)`` (reflexive)."""
        d = self.node_count
        r = np.eye(d, dtype=bool)
        for i in self.order:
            for j in self._parents[i]:
                r[:, i - 1] |= r[:, j - 1]
        r.setflags(write=False)
        return r

    def _check(self, v: int) -> None:
        if not 1 <= v <= self.node_count:
            raise IndexError(f"node {v} outside 1..{self.node_count}")

    def __repr__(self):
        return f"Dag(d={self.node_count}, edges={sorted(self.edges)})"


def _kahn(d: int, children, parents) -> list[int]:
    indeg = {v: len(parents[v]) for v in range(1, d + 1)}
    ready = [v for v, k in indeg.items() if k == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        v = heapq.heappop(ready)
        out.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(out) < d:
        raise CycleError(_find_cycle({v for v, k in indeg.items() if k > 0}, children))
    return out


def _find_cycle(remaining: set[int], children) -> list[int]:
    # every node left over after Kahn has a predecessor that is also left over,
    # so walking parents-in-remaining backwards must revisit a node
    preds = {v: [u for u in remaining if v in children[u]] for v in remaining}
    v = min(remaining)
    seen: dict[int, int] = {}
    walk = []
    while v not in seen:
        seen[v] = len(walk)
        walk.append(v)
        v = min(preds[v])
    cycle = walk[seen[v]:][::-1]
    return cycle + [cycle[0]]


def topological_order(dag: Dag) -> list[int]:
    """Topological order with ties broken by ascending node id."""
    return list(dag.order)


def check_acyclic(d: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Topologically sort a raw edge set, raising :class:`CycleError` with a witness cycle."""
    pa: dict[int, list[int]] = {v: [] for v in range(1, d + 1)}
    ch: dict[int, list[int]] = {v: [] for v in range(1, d + 1)}
    for j, i in edges:
        pa[i].append(j)
        ch[j].append(i)
    return _kahn(d, {k: sorted(v) for k, v in ch.items()}, pa)


def ancestors(dag: Dag, i: int) -> set[int]:
    """Strict ancestors ``an(i)``."""
    dag._check(i)
    col = dag.reach[:, i - 1]
    return {h + 1 for h in np.flatnonzero(col) if h + 1 != i}


def descendants(dag: Dag, j: int) -> set[int]:
    """Strict descendants ``de(j)``."""
    dag._check(j)
    row = dag.reach[j - 1, :]
    return {i + 1 for i in np.flatnonzero(row) if i + 1 != j}


def enumerate_paths(dag: Dag, h: int, i: int, max_paths: int = DEFAULT_MAX_PATHS) -> list[list[int]]:
    """All directed paths from ``h`` to ``i`` in lexicographic order.

    Raises PathLimitError once more than ``max_paths`` paths are found.
    """
    dag._check(h)
    dag._check(i)
    if h == i:
        raise ValueError("enumerate_paths requires h != i")
    reach = dag.reach
    if not reach[h - 1, i - 1]:
        return []
    out: list[list[int]] = []
    stack = [h]

    def walk(v: int) -> None:
        for c in dag._children[v]:
            if not reach[c - 1, i - 1]:
                continue
            stack.append(c)
            if c == i:
                out.append(list(stack))
                if len(out) > max_paths:
                    raise PathLimitError(f"more than {max_paths} paths from {h} to {i}")
            else:
                walk(c)
            stack.pop()

    walk(h)
    return out


def random_dag(d: int, edge_prob: float, seed: int) -> Dag:
    """Random DAG: uniform latent order, each forward edge kept with probability ``edge_prob``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d) + 1
    keep = rng.random((d, d)) < edge_prob
    edges = {
        (int(perm[a]), int(perm[b]))
        for a in range(d)
        for b in range(a + 1, d)
        if keep[a, b]
    }
    return Dag(d, frozenset(edges))


def read_edge_list(path: str | Path, d: int | None = None) -> Dag:
    """Read ``j i`` pairs, one per line; ``#`` starts a comment."""
    edges = []
    top = 0
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'j i', got {line!r}")
        j, i = int(parts[0]), int(parts[1])
        edges.append((j, i))
        top = max(top, j, i)
    return Dag(d if d is not None else max(top, 1), frozenset(edges))


def format_edge_list(dag: Dag) -> str:
    return "".join(f"{j} {i}\n" for j, i in sorted(dag.edges))
