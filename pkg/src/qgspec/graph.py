"""Compact metric graphs: topology, edge lengths and the built-in test library."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int  # vertex at coordinate 0
    head: int  # vertex at coordinate length
    length: float


@dataclass(frozen=True)
class GraphPoint:
    edge: int
    x: float


@dataclass(frozen=True)
class MetricGraph:
    """Connected finite metric graph with explicitly oriented edges.

    Vertex ids are ``0..n_vertices-1`` and edge ids ``0..n_edges-1``. Loops and
    parallel edges are allowed. Instances are validated on construction and
    never mutated afterwards.
    """

    n_vertices: int
    edges: tuple[Edge, ...]
    name: str = ""
    _incidence: tuple[tuple[tuple[int, int], ...], ...] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if self.n_vertices < 1:
            raise GraphError("graph needs at least one vertex")
        if not self.edges:
            raise GraphError("graph needs at least one edge")
        for k, e in enumerate(self.edges):
            if e.id != k:
                raise GraphError(f"edge ids must be dense and ordered, got {e.id} at {k}")
            if not (math.isfinite(e.length) and e.length > 0):
                raise GraphError(f"edge {e.id} has invalid length {e.length!r}")
            for v in (e.tail, e.head):
                if not 0 <= v < self.n_vertices:
                    raise GraphError(f"edge {e.id} references unknown vertex {v}")
        inc: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for e in self.edges:
            inc[e.tail].append((e.id, 0))
            inc[e.head].append((e.id, 1))
        if any(not lst for lst in inc):
            raise GraphError("isolated vertex")
        object.__setattr__(self, "_incidence", tuple(tuple(lst) for lst in inc))
        if not _connected(self):
            raise GraphError("graph is not connected")

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence], n_vertices: int | None = None, name: str = ""):
        """Build from ``(tail, head, length)`` triples; ids follow input order."""
        triples = [(int(a), int(b), float(l)) for a, b, l in edges]
        if n_vertices is None:
            n_vertices = 1 + max(max(a, b) for a, b, _ in triples) if triples else 0
        return cls(n_vertices, tuple(Edge(k, a, b, l) for k, (a, b, l) in enumerate(triples)), name)

    @property
    def vertices(self) -> range:
        return range(self.n_vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    def incidences(self, v: int) -> tuple[tuple[int, int], ...]:
        """Ordered ``(edge id, end)`` pairs at ``v``; end 0 is coordinate 0, end 1 is coordinate length."""
        self._check_vertex(v)
        return self._incidence[v]

    def endpoint_vertex(self, edge: int, end: int) -> int:
        e = self.edges[edge]
        return e.tail if end == 0 else e.head

    def slot(self, edge: int, end: int) -> int:
        """Index of an edge endpoint in the global ``2|E|`` trace vector."""
        return 2 * edge + end

    def _check_vertex(self, v):
        if not (isinstance(v, (int, np.integer)) and 0 <= v < self.n_vertices):
            raise GraphError(f"unknown vertex {v!r}")

    def check_point(self, p: GraphPoint):
        if not 0 <= p.edge < self.n_edges:
            raise GraphError(f"unknown edge {p.edge}")
        if not 0.0 <= p.x <= self.edges[p.edge].length:
            raise GraphError(f"coordinate {p.x} outside edge {p.edge}")


def _connected(g: MetricGraph) -> bool:
    seen = {0}
    todo = deque([0])
    while todo:
        v = todo.popleft()
        for eid, end in g._incidence[v]:
            w = g.endpoint_vertex(eid, 1 - end)
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return len(seen) == g.n_vertices


def degree(g: MetricGraph, v: int) -> int:
    return len(g.incidences(v))


def total_length(g: MetricGraph) -> float:
    return math.fsum(e.length for e in g.edges)


def betti_number(g: MetricGraph) -> int:
    return g.n_edges - g.n_vertices + 1


def is_bipartite(g: MetricGraph) -> tuple[bool, tuple[list[int], list[int]] | None]:
    color = [-1] * g.n_vertices
    color[0] = 0
    todo = deque([0])
    while todo:
        v = todo.popleft()
        for eid, end in g.incidences(v):
            w = g.endpoint_vertex(eid, 1 - end)
            if color[w] == -1:
                color[w] = 1 - color[v]
                todo.append(w)
            elif color[w] == color[v]:
                return False, None
    return True, ([v for v in g.vertices if color[v] == 0], [v for v in g.vertices if color[v] == 1])


def insert_dummy_vertex(g: MetricGraph, p: GraphPoint) -> tuple[MetricGraph, int]:
    """Split edge ``p.edge`` at interior coordinate ``p.x`` by a new degree-2 vertex.

    The first half keeps the edge id; the second half is appended as a new edge
    with the same orientation. Returns the new graph and the new vertex id.
    """
    g.check_point(p)
    e = g.edges[p.edge]
    if not 0.0 < p.x < e.length:
        raise GraphError("dummy vertex must sit at an interior point")
    new_v = g.n_vertices
    edges = list(g.edges)
    edges[p.edge] = Edge(e.id, e.tail, new_v, p.x)
    edges.append(Edge(g.n_edges, new_v, e.head, e.length - p.x))
    return MetricGraph(g.n_vertices + 1, tuple(edges), g.name + "+dummy"), new_v


# -- built-in library -------------------------------------------------------

def _positive(*ls):
    for l in ls:
        if not (math.isfinite(l) and l > 0):
            raise GraphError(f"nonpositive length {l!r}")


def interval(length: float = 1.0) -> MetricGraph:
    _positive(length)
    return MetricGraph.from_edges([(0, 1, length)], 2, name=f"interval({length:g})")


def star(m: int = 3, length: float | Sequence[float] = 1.0) -> MetricGraph:
    """Star with center vertex 0 and tips ``1..m``; edges oriented center -> tip."""
    if m < 1:
        raise GraphError("star needs m >= 1")
    ls = [float(length)] * m if np.isscalar(length) else [float(x) for x in length]
    if len(ls) != m:
        raise GraphError("star: number of lengths must equal m")
    _positive(*ls)
    return MetricGraph.from_edges([(0, k + 1, l) for k, l in enumerate(ls)], m + 1, name=f"star({m})")


def cycle(m: int = 4, lengths: float | Sequence[float] = 1.0) -> MetricGraph:
    """Cycle on m vertices; m = 1 is a loop and m = 2 a pair of parallel edges."""
    if m < 1:
        raise GraphError("cycle needs m >= 1")
    ls = [float(lengths)] * m if np.isscalar(lengths) else [float(x) for x in lengths]
    if len(ls) != m:
        raise GraphError("cycle: number of lengths must equal m")
    _positive(*ls)
    return MetricGraph.from_edges([(k, (k + 1) % m, l) for k, l in enumerate(ls)], m, name=f"cycle({m})")


def lasso(loop_length: float = 1.0, tail_length: float = 1.0) -> MetricGraph:
    _positive(loop_length, tail_length)
    return MetricGraph.from_edges([(0, 0, loop_length), (0, 1, tail_length)], 2, name="lasso")


FIGURE1_EDGES = ((0, 4), (0, 5), (1, 4), (1, 6), (2, 4), (2, 5), (3, 5))


def figure1(lengths: float | Sequence[float] = 1.0) -> MetricGraph:
    """Bipartite graph with classes {0,1,2,3} and {4,5,6}, seven edges, one cycle."""
    ls = [float(lengths)] * 7 if np.isscalar(lengths) else [float(x) for x in lengths]
    if len(ls) != 7:
        raise GraphError("figure1 needs 7 lengths")
    _positive(*ls)
    return MetricGraph.from_edges([(a, b, l) for (a, b), l in zip(FIGURE1_EDGES, ls)], 7, name="figure1")


BUILTINS = {
    "interval": (interval, "interval(length=1): one edge 0->1"),
    "star": (star, "star(m=3, length=1): center 0, tips 1..m, lengths scalar or list"),
    "cycle": (cycle, "cycle(m=4, lengths=1): vertices 0..m-1, edge k joins k->k+1 mod m"),
    "lasso": (lasso, "lasso(loop_length=1, tail_length=1): loop at 0 plus edge 0->1"),
    "figure1": (figure1, "figure1(lengths=1): bipartite, 7 vertices, 7 edges, Betti number 1"),
}


def builtin_graph(name: str, **params) -> MetricGraph:
    try:
        factory = BUILTINS[name][0]
    except KeyError:
        raise GraphError(f"unknown builtin graph {name!r}") from None
    return factory(**params)
