"""Bounded edgewise potentials.

Every representation reduces to a list of linear pieces ``(x0, x1, q0, q1)`` on an
edge; constant pieces are propagated exactly, linear ones by a Magnus stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graph import GraphPoint, MetricGraph


class PotentialError(ValueError):
    pass


Piece = tuple[float, float, float, float]


class EdgePotential:
    def pieces(self, length: float) -> list[Piece]:
        raise NotImplementedError

    def sup_norm(self) -> float:
        raise NotImplementedError

    def scaled(self, t: float) -> "EdgePotential":
        raise NotImplementedError

    def validate(self, length: float):
        pass

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def is_constant(self) -> bool:
        return False

    def integral(self, length: float) -> float:
        return math.fsum(0.5 * (q0 + q1) * (x1 - x0) for x0, x1, q0, q1 in self.pieces(length))

    def evaluate(self, x, length: float):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for x0, x1, q0, q1 in self.pieces(length):
            m = (x >= x0) & (x <= x1)
            w = (x[m] - x0) / (x1 - x0)
            out[m] = q0 + (q1 - q0) * w
        return out


@dataclass(frozen=True)
class Zero(EdgePotential):
    def pieces(self, length):
        return [(0.0, length, 0.0, 0.0)]

    def sup_norm(self):
        return 0.0

    def scaled(self, t):
        return self

    @property
    def is_zero(self):
        return True

    @property
    def is_constant(self):
        return True


@dataclass(frozen=True)
class Constant(EdgePotential):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise PotentialError("potential must be bounded")

    def pieces(self, length):
        return [(0.0, length, self.value, self.value)]

    def sup_norm(self):
        return abs(self.value)

    def scaled(self, t):
        return Constant(t * self.value)

    @property
    def is_zero(self):
        return self.value == 0.0

    @property
    def is_constant(self):
        return True


@dataclass(frozen=True)
class PiecewiseConstant(EdgePotential):
    """``values[i]`` holds on ``(b[i-1], b[i])`` with ``b[-1] = 0`` and ``b[len] = length``."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.breakpoints) + 1:
            raise PotentialError("piecewise potential needs len(values) == len(breakpoints) + 1")
        if any(not math.isfinite(v) for v in self.values):
            raise PotentialError("potential must be bounded")
        b = self.breakpoints
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])) or (b and b[0] <= 0):
            raise PotentialError("breakpoints must be strictly increasing inside the edge")

    def validate(self, length):
        if self.breakpoints and self.breakpoints[-1] >= length:
            raise PotentialError(f"breakpoint {self.breakpoints[-1]} not inside (0, {length})")

    def pieces(self, length):
        self.validate(length)
        xs = (0.0, *self.breakpoints, length)
        return [(xs[i], xs[i + 1], v, v) for i, v in enumerate(self.values)]

    def sup_norm(self):
        return max(abs(v) for v in self.values)

    def scaled(self, t):
        return PiecewiseConstant(self.breakpoints, tuple(t * v for v in self.values))

    @property
    def is_zero(self):
        return all(v == 0 for v in self.values)


@dataclass(frozen=True)
class Sampled(EdgePotential):
    """Uniform samples. Order 0: one value per cell; order 1: nodal values, linear interpolation."""

    values: tuple[float, ...]
    order: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.order not in (0, 1):
            raise PotentialError("interpolation order must be 0 or 1")
        if len(self.values) < (1 if self.order == 0 else 2):
            raise PotentialError("too few samples")
        if any(not math.isfinite(v) for v in self.values):
            raise PotentialError("potential must be bounded")

    def pieces(self, length):
        v = self.values
        if self.order == 0:
            n = len(v)
            return [(length * i / n, length * (i + 1) / n, v[i], v[i]) for i in range(n)]
        n = len(v) - 1
        return [(length * i / n, length * (i + 1) / n, v[i], v[i + 1]) for i in range(n)]

    def sup_norm(self):
        return max(abs(x) for x in self.values)

    def scaled(self, t):
        return Sampled(tuple(t * x for x in self.values), self.order)

    @property
    def is_zero(self):
        return all(x == 0 for x in self.values)


@dataclass(frozen=True)
class Explicit(EdgePotential):
    """Explicit linear pieces covering ``[0, length]`` of one particular edge."""

    segments: tuple[Piece, ...]

    def __post_init__(self):
        segs = tuple(tuple(float(v) for v in s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0.0:
            raise PotentialError("pieces must start at 0")
        for a, b in zip(segs, segs[1:]):
            if a[1] != b[0]:
                raise PotentialError("pieces must be contiguous")
        if any(s[1] <= s[0] for s in segs) or any(not math.isfinite(v) for s in segs for v in s):
            raise PotentialError("invalid piece")

    def validate(self, length):
        if not math.isclose(self.segments[-1][1], length, rel_tol=1e-12):
            raise PotentialError(f"pieces end at {self.segments[-1][1]}, edge length is {length}")

    def pieces(self, length):
        self.validate(length)
        segs = list(self.segments)
        segs[-1] = (*segs[-1][:1], length, *segs[-1][2:])
        return segs

    def sup_norm(self):
        return max(max(abs(s[2]), abs(s[3])) for s in self.segments)

    def scaled(self, t):
        return Explicit(tuple((a, b, t * c, t * d) for a, b, c, d in self.segments))

    @property
    def is_zero(self):
        return all(s[2] == 0 and s[3] == 0 for s in self.segments)


def split_edge_potential(p: EdgePotential, length: float, x: float) -> tuple[EdgePotential, EdgePotential]:
    """Restrictions of ``p`` to ``[0, x]`` and to ``[x, length]`` (shifted to start at 0)."""
    if isinstance(p, (Zero, Constant)):
        return p, p
    left, right = [], []
    for x0, x1, q0, q1 in p.pieces(length):
        def at(y):
            return q0 + (q1 - q0) * (y - x0) / (x1 - x0)
        if x1 <= x:
            left.append((x0, x1, q0, q1))
        elif x0 >= x:
            right.append((x0 - x, x1 - x, q0, q1))
        else:
            left.append((x0, x, q0, at(x)))
            right.append((0.0, x1 - x, at(x), q1))
    return Explicit(tuple(left)), Explicit(tuple(right))


@dataclass(frozen=True)
class Potential:
    """Potential on a whole graph: per-edge overrides plus a default."""

    default: EdgePotential = field(default_factory=Zero)
    per_edge: Mapping[int, EdgePotential] = field(default_factory=dict)

    @classmethod
    def constant(cls, c: float) -> "Potential":
        return cls(Constant(float(c)))

    def on(self, edge: int) -> EdgePotential:
        return self.per_edge.get(edge, self.default)

    def parts(self) -> list[EdgePotential]:
        return [self.default, *self.per_edge.values()]

    def validate(self, g: MetricGraph):
        bad = [e for e in self.per_edge if not 0 <= e < g.n_edges]
        if bad:
            raise PotentialError(f"potential given for unknown edges {bad}")
        for e in g.edges:
            self.on(e.id).validate(e.length)

    @property
    def is_zero(self) -> bool:
        return all(p.is_zero for p in self.parts())

    @property
    def is_constant(self) -> bool:
        vals = set()
        for p in self.parts():
            if not p.is_constant:
                return False
            vals.add(0.0 if p.is_zero else p.value)
        return len(vals) == 1

    def evaluate(self, g: MetricGraph, p: GraphPoint) -> float:
        g.check_point(p)
        return float(self.on(p.edge).evaluate(np.array([p.x]), g.edges[p.edge].length)[0])

    def describe(self) -> str:
        if self.is_zero:
            return "zero"
        if not self.per_edge:
            return repr(self.default)
        return f"default={self.default!r}, " + ", ".join(f"{k}: {v!r}" for k, v in sorted(self.per_edge.items()))


def sup_norm(q: Potential, g: MetricGraph | None = None) -> float:
    if g is None:
        return max(p.sup_norm() for p in q.parts())
    return max(q.on(e.id).sup_norm() for e in g.edges)


def bracket(q: Potential, g: MetricGraph | None = None) -> tuple[Potential, Potential]:
    s = sup_norm(q, g)
    return Potential.constant(-s), Potential.constant(s)


def integral(q: Potential, g: MetricGraph) -> float:
    q.validate(g)
    return math.fsum(q.on(e.id).integral(e.length) for e in g.edges)


def scale(q: Potential, t: float) -> Potential:
    return Potential(q.default.scaled(t), {k: v.scaled(t) for k, v in q.per_edge.items()})


def as_potential(q) -> Potential:
    if q is None:
        return Potential()
    if isinstance(q, Potential):
        return q
    if isinstance(q, EdgePotential):
        return Potential(q)
    if isinstance(q, (int, float, np.number)) and not isinstance(q, bool):
        return Potential.constant(float(q))
    raise PotentialError(f"cannot interpret {q!r} as a potential")


def piecewise_on_halves(length: float, left: float, right: float) -> PiecewiseConstant:
    return PiecewiseConstant((length / 2,), (left, right))
