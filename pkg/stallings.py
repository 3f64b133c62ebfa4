"""
Folded subgroup graphs for finitely generated subgroups of a free group.

A tuple of reduced words is spelled as a wedge of loops at a base vertex,
folded until no vertex has two equally labeled edges leaving (or entering)
it, and trimmed to its core. The folded core graph has rank E - V + 1,
which decides whether the tuple freely generates a free subgroup.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from errors import RankMismatchError
from freeword import ReducedWord


Edge = tuple[int, int, int]  # (source, generator index, target)


@dataclass(frozen=True)
class SubgroupGraph:
    """
    Folded core graph in canonical numbering: vertex 0 is the base and the
    other vertices are numbered in breadth-first order, visiting edges by
    (label, outgoing before incoming).
    """
    rank: int
    vertex_count: int
    edges: tuple[Edge, ...]
    _out: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)
    _in: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        out, inn = {}, {}
        for s, label, d in self.edges:
            out[(s, label)] = d
            inn[(d, label)] = s
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inn)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def step(self, vertex: int, index: int, sign: int) -> int | None:
        if sign > 0:
            return self._out.get((vertex, index))
        return self._in.get((vertex, index))

    def is_folded(self) -> bool:
        return len(self._out) == len(self.edges) == len(self._in)


class _Folder:
    """Union-find over vertices with per-label adjacency sets."""

    def __init__(self, vertex_count: int, edges: Sequence[Edge]):
        self.parent = list(range(vertex_count))
        self.out = [defaultdict(set) for _ in range(vertex_count)]
        self.inn = [defaultdict(set) for _ in range(vertex_count)]
        for s, label, d in edges:
            self.out[s][label].add(d)
            self.inn[d][label].add(s)

    def find(self, v: int) -> int:
        while self.parent[v] != v:
            self.parent[v] = self.parent[self.parent[v]]
            v = self.parent[v]
        return v

    def union(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        keep, gone = min(a, b), max(a, b)
        self.parent[gone] = keep
        for table in (self.out, self.inn):
            for label, ends in table[gone].items():
                table[keep][label] |= ends
            table[gone].clear()
        return keep

    def fold(self, order: Sequence[int]):
        work = deque(order)
        while work:
            v = self.find(work.popleft())
            for table in (self.out, self.inn):
                collided = False
                for label, ends in list(table[v].items()):
                    reps = sorted({self.find(x) for x in ends})
                    table[v][label] = set(reps)
                    if len(reps) > 1:
                        keep = reps[0]
                        for other in reps[1:]:
                            keep = self.union(keep, other)
                        work.append(keep)
                        work.append(v)
                        collided = True
                        break
                if collided:
                    break


def _spell_loops(words: Sequence[ReducedWord]) -> tuple[int, list[Edge]]:
    edges: list[Edge] = []
    next_vertex = 1
    for w in words:
        n = len(w.letters)
        if n == 0:
            continue
        path = [0] + list(range(next_vertex, next_vertex + n - 1)) + [0]
        next_vertex += n - 1
        for t, s in enumerate(w.letters):
            if s.sign > 0:
                edges.append((path[t], s.index, path[t + 1]))
            else:
                edges.append((path[t + 1], s.index, path[t]))
    return next_vertex, edges


def _trim(vertices: set[int], edges: set[Edge]) -> tuple[set[int], set[Edge]]:
    while True:
        degree = {v: 0 for v in vertices}
        for s, _, d in edges:
            degree[s] += 1
            degree[d] += 1
        hanging = {v for v, k in degree.items() if v != 0 and k <= 1}
        if not hanging:
            return vertices, edges
        vertices -= hanging
        edges = {e for e in edges if e[0] not in hanging and e[2] not in hanging}


def canonical_form(rank: int, vertices: set[int], edges: set[Edge], base: int = 0) -> tuple[int, tuple[Edge, ...]]:
    """Breadth-first relabeling from the base, edges ordered by (label, direction)."""
    out, inn = {}, {}
    for s, label, d in edges:
        out[(s, label)] = d
        inn[(d, label)] = s
    number = {base: 0}
    queue = deque([base])
    while queue:
        v = queue.popleft()
        for label in range(rank):
            for table in (out, inn):
                u = table.get((v, label))
                if u is not None and u not in number:
                    number[u] = len(number)
                    queue.append(u)
    renamed = tuple(sorted((number[s], label, number[d]) for s, label, d in edges))
    return len(number), renamed


def build_graph(words: Sequence[ReducedWord], rank: int | None = None,
                fold_schedule: int | None = None) -> SubgroupGraph:
    """
    Folded core graph of the subgroup generated by words.

    Args:
        words: generators of the subgroup.
        rank: ambient rank (defaults to the words' rank).
        fold_schedule: seed for a shuffled folding order; the folded result
            does not depend on it.
    """
    if rank is None:
        rank = words[0].rank if words else 1
    for w in words:
        if w.rank != rank:
            raise RankMismatchError(w.rank, rank)

    vertex_count, raw_edges = _spell_loops(words)
    folder = _Folder(vertex_count, raw_edges)
    order = list(range(vertex_count))
    if fold_schedule is not None:
        np.random.default_rng(fold_schedule).shuffle(order)
    folder.fold(order)

    edges = {(folder.find(s), label, folder.find(d)) for s, label, d in raw_edges}
    vertices = {folder.find(v) for v in range(vertex_count)}
    vertices, edges = _trim(vertices, edges)
    count, canonical = canonical_form(rank, vertices, edges)
    return SubgroupGraph(rank=rank, vertex_count=count, edges=canonical)


def graph_rank(g: SubgroupGraph) -> int:
    return g.edge_count - g.vertex_count + 1


def is_free_basis(words: Sequence[ReducedWord], rank: int | None = None) -> bool:
    """
    True iff the words freely generate a free subgroup (as a basis of it).

    Trivial or repeated words short-circuit to False before any folding.
    """
    if any(w.is_identity() for w in words):
        return False
    if len(set(words)) != len(words):
        return False
    return graph_rank(build_graph(words, rank)) == len(words)


def contains(g: SubgroupGraph, w: ReducedWord) -> bool:
    """True iff w spells a closed path at the base vertex."""
    if w.rank != g.rank:
        raise RankMismatchError(w.rank, g.rank)
    v: int | None = 0
    for s in w.letters:
        v = g.step(v, s.index, s.sign)
        if v is None:
            return False
    return v == 0


def to_networkx(g: SubgroupGraph) -> nx.MultiDiGraph:
    """The graph as a networkx multigraph with a `label` edge attribute."""
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(range(g.vertex_count))
    graph.nodes[0]["base"] = True
    for s, label, d in g.edges:
        graph.add_edge(s, d, label=label)
    return graph
