"""Piecewise-linear finite elements for the quadratic forms of the vertex conditions.

This is the independent oracle for the secular solver. The delta' form lives on
the fully broken space (no inter-edge continuity) plus the penalty
``sum_v |sum_e f_e(v)|^2 / beta_v``; anti-Kirchhoff eliminates one endpoint value
per vertex through ``sum_e f_e(v) = 0``; delta/Kirchhoff identifies the endpoint
values and adds ``sigma_v |f(v)|^2``; Dirichlet drops them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conditions import Delta, DeltaPrime, Dirichlet, VertexConditionSet
from .graph import MetricGraph, degree
from .potential import Potential, as_potential


class FEMError(ValueError):
    pass


class SingularShift(FEMError):
    """The shift hits a discrete eigenvalue; perturb it and retry."""


@dataclass(frozen=True)
class EdgeMesh:
    length: float
    n: int  # number of elements
    qmid: np.ndarray  # potential at element midpoints

    @property
    def h(self) -> float:
        return self.length / self.n


class FormDiscretization:
    """Uniform P1 mesh of every edge together with the vertex constraint data."""

    def __init__(self, g: MetricGraph, conditions: VertexConditionSet, q=None, h: float | None = None):
        conditions.validate(g)
        self.graph = g
        self.conditions = conditions
        self.potential = as_potential(q)
        lmin = float(g.lengths.min())
        if h is None:
            h = lmin / 512
        if h > lmin / 4 * (1 + 1e-12):
            raise FEMError(f"mesh width {h} too coarse; need h <= {lmin / 4}")
        self.h = float(h)
        meshes = []
        for e in g.edges:
            n = max(4, int(math.ceil(e.length / h - 1e-9)))
            mids = (np.arange(n) + 0.5) * (e.length / n)
            meshes.append(EdgeMesh(e.length, n, self.potential.on(e.id).evaluate(mids, e.length)))
        self.meshes = meshes
        self.offsets = np.cumsum([0] + [m.n + 1 for m in meshes])
        self._build_vertex_maps()

    # -- vertex reduction ----------------------------------------------------

    def _build_vertex_maps(self):
        """Columns of the reduction ``f_full = P f_red`` for endpoint dofs, plus vertex terms."""
        g = self.graph
        self.n_interior = sum(m.n - 1 for m in self.meshes)
        cols: list[dict[int, float]] = []  # per reduced vertex-dof: {slot: coeff}
        penalties = []  # (slots, weight): weight * (sum of slot values)^2
        for v in g.vertices:
            slots = [2 * e + end for e, end in g.incidences(v)]
            cond = self.conditions[v]
            if isinstance(cond, Dirichlet):
                continue
            if isinstance(cond, Delta):
                cols.append({s: 1.0 for s in slots})
                if cond.sigma != 0.0:
                    penalties.append(([slots[0]], cond.sigma))
            elif isinstance(cond, DeltaPrime):
                if cond.beta == 0.0:
                    last = slots[-1]
                    for s in slots[:-1]:
                        cols.append({s: 1.0, last: -1.0})
                else:
                    for s in slots:
                        cols.append({s: 1.0})
                    penalties.append((slots, 1.0 / cond.beta))
            else:
                raise FEMError(f"unsupported condition {cond!r}")
        self.vertex_cols = cols
        self.penalties = penalties
        T = np.zeros((2 * g.n_edges, len(cols)))
        for j, col in enumerate(cols):
            for s, w in col.items():
                T[s, j] += w
        self.slot_map = T
        Wfull = np.zeros((2 * g.n_edges, 2 * g.n_edges))
        for slots, w in penalties:
            for a in slots:
                for b in slots:
                    Wfull[a, b] += w
        self.slot_penalty = Wfull

    def _full_index(self, e: int, node: int) -> int:
        return int(self.offsets[e] + node)

    @cached_property
    def reduction(self) -> sp.csr_matrix:
        """Sparse ``P`` mapping reduced dofs (interior first, then vertex dofs) to full nodal values."""
        rows, colsi, vals = [], [], []
        j = 0
        for e, m in enumerate(self.meshes):
            for i in range(1, m.n):
                rows.append(self._full_index(e, i))
                colsi.append(j)
                vals.append(1.0)
                j += 1
        for col in self.vertex_cols:
            for s, w in col.items():
                e, end = divmod(s, 2)
                rows.append(self._full_index(e, 0 if end == 0 else self.meshes[e].n))
                colsi.append(j)
                vals.append(w)
            j += 1
        n_full = int(self.offsets[-1])
        return sp.csr_matrix((vals, (rows, colsi)), shape=(n_full, j))

    # -- assembly -------------------------------------------------------------

    def _assemble_full(self):
        Ki, Kj, Kv, Mv = [], [], [], []
        for e, m in enumerate(self.meshes):
            h = m.h
            base = self.offsets[e]
            idx = base + np.arange(m.n)
            for a, b, kab, mab in ((0, 0, 1, 2), (0, 1, -1, 1), (1, 0, -1, 1), (1, 1, 1, 2)):
                Ki.append(idx + a)
                Kj.append(idx + b)
                Kv.append(kab / h + m.qmid * mab * h / 6.0)
                Mv.append(np.full(m.n, mab * h / 6.0))
        Ki, Kj = np.concatenate(Ki), np.concatenate(Kj)
        n = int(self.offsets[-1])
        K = sp.coo_matrix((np.concatenate(Kv), (Ki, Kj)), shape=(n, n)).tocsr()
        M = sp.coo_matrix((np.concatenate(Mv), (Ki, Kj)), shape=(n, n)).tocsr()
        pr, pc, pv = [], [], []
        for slots, w in self.penalties:
            for a in slots:
                for b in slots:
                    ea, enda = divmod(a, 2)
                    eb, endb = divmod(b, 2)
                    pr.append(self._full_index(ea, 0 if enda == 0 else self.meshes[ea].n))
                    pc.append(self._full_index(eb, 0 if endb == 0 else self.meshes[eb].n))
                    pv.append(w)
        if pv:
            K = K + sp.coo_matrix((pv, (pr, pc)), shape=(n, n)).tocsr()
        return K, M

    @cached_property
    def matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Reduced stiffness (incl. potential and vertex terms) and mass matrices."""
        K, M = self._assemble_full()
        P = self.reduction
        return (P.T @ K @ P).tocsr(), (P.T @ M @ P).tocsr()

    @property
    def n_dofs(self) -> int:
        return self.reduction.shape[1]

    def lower_bound(self) -> float:
        """A value below the whole discrete spectrum (crude, from the form)."""
        qmin = min(float(m.qmid.min()) for m in self.meshes)
        neg = 0.0
        for v in self.graph.vertices:
            c = self.conditions[v]
            d = degree(self.graph, v)
            if isinstance(c, Delta) and c.sigma < 0:
                neg = max(neg, (c.sigma / 1.0) ** 2 + 2 * abs(c.sigma) / min(m.length for m in self.meshes))
            if isinstance(c, DeltaPrime) and c.beta < 0:
                neg = max(neg, (d / c.beta) ** 2 + 2 * d / abs(c.beta) / min(m.length for m in self.meshes))
        return min(qmin, 0.0) - neg - 1.0


def discretize(g: MetricGraph, conditions: VertexConditionSet, q=None, h: float | None = None) -> FormDiscretization:
    return FormDiscretization(g, conditions, q, h)


def lowest_eigenvalues(d: FormDiscretization, m: int) -> np.ndarray:
    K, M = d.matrices
    n = K.shape[0]
    if m > n:
        raise FEMError(f"requested {m} eigenvalues from a {n}-dimensional discretization")
    if n <= 1500:
        w = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, m - 1])
        return np.sort(w)
    sigma = d.lower_bound()
    w = spla.eigsh(K.tocsc(), k=m, M=M.tocsc(), sigma=sigma, which="LM", return_eigenvectors=False)
    return np.sort(w)


@dataclass(frozen=True)
class Extrapolated:
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    h: float


def extrapolated_eigenvalues(g, conditions, q=None, m: int = 10, h: float | None = None) -> Extrapolated:
    """Eigenvalues at mesh h and h/2 and the order-2 Richardson combination."""
    d1 = discretize(g, conditions, q, h)
    d2 = discretize(g, conditions, q, d1.h / 2)
    a = lowest_eigenvalues(d1, m)
    b = lowest_eigenvalues(d2, m)
    return Extrapolated(a, b, (4.0 * b - a) / 3.0, d1.h)


# -- inertia counting ---------------------------------------------------------

BLOCK = 256


def _eliminate_blocks(D: np.ndarray, O: np.ndarray, left: np.ndarray, right: np.ndarray):
    """Eliminate a batch of independent tridiagonal blocks.

    ``D`` (B, m) holds block diagonals, ``O`` (B, m-1) the inner couplings and
    ``left``/``right`` the couplings to the separators on either side. Returns the
    number of negative pivots and the three Schur corrections per block:
    diagonal at the left separator, diagonal at the right one, and the new
    coupling between them.
    """
    B, m = D.shape
    if m == 0:
        z = np.zeros(B)
        return 0, z, z, left.copy()
    p = D[:, 0].copy()
    if np.any(p == 0.0):
        raise SingularShift("zero pivot")
    neg = int((p < 0).sum())
    prod = np.ones(B)
    for i in range(1, m):
        prod *= -O[:, i - 1] / p
        p = D[:, i] - O[:, i - 1] ** 2 / p
        if np.any(p == 0.0):
            raise SingularShift("zero pivot")
        neg += int((p < 0).sum())
    inv_last = 1.0 / p
    corner = prod * inv_last
    e = D[:, m - 1].copy()
    for i in range(m - 2, -1, -1):
        e = D[:, i] - O[:, i] ** 2 / e
        if np.any(e == 0.0):
            raise SingularShift("zero pivot")
    inv_first = 1.0 / e
    return neg, -left ** 2 * inv_first, -right ** 2 * inv_last, -left * right * corner


def _eliminate_chain(d: np.ndarray, o: np.ndarray) -> tuple[int, np.ndarray]:
    """Eliminate nodes ``1..n-2`` of a tridiagonal chain, keeping both ends.

    ``d`` is the diagonal and ``o[i]`` couples nodes i and i+1. Interior nodes
    are split into blocks by separators; block interiors are eliminated in one
    vectorised sweep and the separator chain is reduced recursively. Returns the
    number of negative pivots and the 2x2 Schur complement on the end nodes.
    """
    n = len(d)
    seps = np.arange(0, n, BLOCK)
    if seps[-1] != n - 1:
        seps = np.append(seps, n - 1)
    nb = len(seps) - 1
    dd = d[seps].copy()
    oo = np.empty(nb)
    neg = 0
    sizes = seps[1:] - seps[:-1] - 1
    for m in np.unique(sizes):
        js = np.flatnonzero(sizes == m)
        idx = seps[js, None] + 1 + np.arange(m)[None, :]
        k, cl, cr, co = _eliminate_blocks(d[idx], o[idx[:, :-1]], o[seps[js]], o[seps[js + 1] - 1])
        neg += k
        dd[js] += cl
        dd[js + 1] += cr
        oo[js] = co
    if nb == 1:
        return neg, np.array([[dd[0], oo[0]], [oo[0], dd[1]]])
    k, S = _eliminate_chain(dd, oo)
    return neg + k, S


def _chain_schur(m: EdgeMesh, shift: float) -> tuple[int, np.ndarray]:
    """Eliminate interior nodes of one edge from ``K - shift*M``.

    Returns the number of negative pivots and the 2x2 Schur complement on the
    two endpoint nodes.
    """
    h = m.h
    qm = m.qmid - shift
    kd = 1.0 / h + qm * h / 3.0  # element diagonal
    od = -1.0 / h + qm * h / 6.0  # element coupling of nodes i, i+1
    d = np.empty(m.n + 1)
    d[0] = kd[0]
    d[-1] = kd[-1]
    d[1:-1] = kd[:-1] + kd[1:]
    return _eliminate_chain(d, od)


def count_below(d: FormDiscretization, shift: float) -> int:
    """Number of discrete eigenvalues strictly below ``shift`` (Sylvester inertia of K - shift*M)."""
    g = d.graph
    neg = 0
    S = np.zeros((2 * g.n_edges, 2 * g.n_edges))
    for e, m in enumerate(d.meshes):
        k, Se = _chain_schur(m, float(shift))
        neg += k
        S[2 * e:2 * e + 2, 2 * e:2 * e + 2] += Se
    S += d.slot_penalty
    T = d.slot_map
    if T.shape[1]:
        R = T.T @ S @ T
        w = np.linalg.eigvalsh(R)
        tol = 1e-13 * max(1.0, np.abs(w).max())
        if np.any(np.abs(w) < tol):
            raise SingularShift("shift at a discrete eigenvalue")
        neg += int((w < 0).sum())
    return neg
