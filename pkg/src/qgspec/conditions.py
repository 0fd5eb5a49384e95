"""Vertex coupling conditions and their (A, B) matrix realisations.

Convention: ``dF`` collects *inward* derivatives, i.e. ``f'(0)`` at the tail of
an edge and ``-f'(length)`` at its head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.linalg import null_space

from .graph import MetricGraph, degree


class ConditionError(ValueError):
    pass


@dataclass(frozen=True)
class DeltaPrime:
    """Continuous inward derivative and ``sum F = beta * dF``; beta = 0 is anti-Kirchhoff."""

    beta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise ConditionError("beta must be finite")


@dataclass(frozen=True)
class Delta:
    """Continuity and ``sum dF = sigma * f(v)``; sigma = 0 is Kirchhoff."""

    sigma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.sigma):
            raise ConditionError("sigma must be finite")


@dataclass(frozen=True)
class Dirichlet:
    pass


Condition = Union[DeltaPrime, Delta, Dirichlet]


def anti_kirchhoff() -> DeltaPrime:
    return DeltaPrime(0.0)


def kirchhoff() -> Delta:
    return Delta(0.0)


@dataclass(frozen=True)
class VertexConditionSet:
    conditions: tuple[Condition, ...]

    @classmethod
    def uniform(cls, g: MetricGraph, cond: Condition) -> "VertexConditionSet":
        return cls(tuple(cond for _ in g.vertices))

    @classmethod
    def from_mapping(cls, g: MetricGraph, conds: Mapping[int, Condition], default: Condition | None = None):
        out = []
        for v in g.vertices:
            if v in conds:
                out.append(conds[v])
            elif default is not None:
                out.append(default)
            else:
                raise ConditionError(f"missing condition for vertex {v}")
        extra = set(conds) - set(g.vertices)
        if extra:
            raise ConditionError(f"conditions given for unknown vertices {sorted(extra)}")
        return cls(tuple(out))

    @classmethod
    def delta_prime(cls, g: MetricGraph, beta: float | Sequence[float]):
        betas = [beta] * g.n_vertices if np.isscalar(beta) else list(beta)
        return cls(tuple(DeltaPrime(float(b)) for b in betas))

    @classmethod
    def delta(cls, g: MetricGraph, sigma: float | Sequence[float]):
        sigmas = [sigma] * g.n_vertices if np.isscalar(sigma) else list(sigma)
        return cls(tuple(Delta(float(s)) for s in sigmas))

    @classmethod
    def dirichlet(cls, g: MetricGraph):
        return cls.uniform(g, Dirichlet())

    def __getitem__(self, v: int) -> Condition:
        return self.conditions[v]

    def __len__(self):
        return len(self.conditions)

    def validate(self, g: MetricGraph):
        if len(self.conditions) != g.n_vertices:
            raise ConditionError(
                f"condition set covers {len(self.conditions)} vertices, graph has {g.n_vertices}"
            )

    def betas(self) -> np.ndarray:
        """delta' strengths per vertex (nan where the vertex is not delta')."""
        return np.array([c.beta if isinstance(c, DeltaPrime) else np.nan for c in self.conditions])

    def with_vertex(self, v: int, cond: Condition) -> "VertexConditionSet":
        c = list(self.conditions)
        if v == len(c):
            c.append(cond)
        else:
            c[v] = cond
        return VertexConditionSet(tuple(c))

    def describe(self) -> str:
        uniq = set(self.conditions)
        if len(uniq) == 1:
            return _describe(self.conditions[0]) + " (all vertices)"
        return "; ".join(f"{v}: {_describe(c)}" for v, c in enumerate(self.conditions))


def _describe(c: Condition) -> str:
    if isinstance(c, DeltaPrime):
        return "anti_kirchhoff" if c.beta == 0 else f"delta_prime beta={c.beta:g}"
    if isinstance(c, Delta):
        return "kirchhoff" if c.sigma == 0 else f"delta sigma={c.sigma:g}"
    return "dirichlet"


@dataclass(frozen=True)
class ABPair:
    """Rows of ``A @ F(v) + B @ dF(v) = 0``."""

    A: np.ndarray
    B: np.ndarray


def ab_pair(cond: Condition, deg: int) -> ABPair:
    A = np.zeros((deg, deg))
    B = np.zeros((deg, deg))
    if isinstance(cond, Dirichlet):
        A[:] = np.eye(deg)
    elif isinstance(cond, DeltaPrime):
        for i in range(deg - 1):
            B[i, i], B[i, i + 1] = 1.0, -1.0
        A[-1, :] = 1.0
        B[-1, 0] = -cond.beta
    elif isinstance(cond, Delta):
        for i in range(deg - 1):
            A[i, i], A[i, i + 1] = 1.0, -1.0
        B[-1, :] = 1.0
        A[-1, 0] = -cond.sigma
    else:
        raise ConditionError(f"unsupported condition {cond!r}")
    return ABPair(A, B)


def to_ab_pairs(g: MetricGraph, c: VertexConditionSet) -> dict[int, ABPair]:
    c.validate(g)
    return {v: ab_pair(c[v], degree(g, v)) for v in g.vertices}


def check_self_adjoint(p: ABPair, tol: float = 1e-12) -> bool:
    A, B = np.asarray(p.A, float), np.asarray(p.B, float)
    if A.ndim != 2 or A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ConditionError(f"dimension mismatch: A{A.shape} B{B.shape}")
    d = A.shape[0]
    if np.linalg.matrix_rank(np.hstack([A, B])) != d:
        return False
    ABt = A @ B.T
    return bool(np.allclose(ABt, ABt.T, atol=tol * max(1.0, np.abs(ABt).max())))


# -- projections ------------------------------------------------------------

def projection_dirichlet_part(deg: int) -> np.ndarray:
    """Matrix with all entries 1/deg (constraint projection of anti-Kirchhoff)."""
    return np.full((deg, deg), 1.0 / deg)


def projection_delta_prime(deg: int) -> np.ndarray:
    return np.zeros((deg, deg))


def projection_delta(deg: int) -> np.ndarray:
    return np.eye(deg) - projection_dirichlet_part(deg)


def scattering_limit(deg: int, kind: str) -> np.ndarray:
    """High-energy vertex scattering matrix ``Id - 2P``."""
    if kind == "delta_prime":
        P = projection_delta_prime(deg)
    elif kind == "delta":
        P = projection_delta(deg)
    else:
        raise ConditionError(f"unknown kind {kind!r}")
    return np.eye(deg) - 2.0 * P


# -- form-level data --------------------------------------------------------

def trace_parametrization(cond: Condition, deg: int) -> tuple[np.ndarray, np.ndarray]:
    """Admissible boundary-value subspace of the quadratic form and its vertex term.

    Returns ``(T, W)``: traces in the form domain are ``F = T @ a`` and the vertex
    contribution to the form is ``a @ W @ a``.
    """
    if isinstance(cond, Dirichlet):
        return np.zeros((deg, 0)), np.zeros((0, 0))
    if isinstance(cond, Delta):
        return np.ones((deg, 1)), np.array([[cond.sigma]])
    if cond.beta == 0.0:
        T = null_space(np.ones((1, deg)))
        return T, np.zeros((deg - 1, deg - 1))
    return np.eye(deg), np.full((deg, deg), 1.0 / cond.beta)
