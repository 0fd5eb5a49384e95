"""L²-normalised eigenfunctions rebuilt from secular coefficients."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .graph import GraphPoint
from .secular import SecularSystem, Spectrum


@dataclass(frozen=True, eq=False)
class Eigenfunction:
    """Eigenfunction with per-edge initial data ``coeffs[e] = (u_e(0), u_e'(0))``.

    ``index`` is the 1-based position in the spectrum and ``multiplicity`` the
    size of its eigenvalue cluster.
    """

    lam: float
    coeffs: np.ndarray
    system: SecularSystem
    index: int = 1
    multiplicity: int = 1

    @property
    def graph(self):
        return self.system.graph

    @cached_property
    def _ends(self) -> np.ndarray:
        """``(E, 2, 2)``: rows ``(value, inward derivative)`` at tail and head."""
        out = np.empty((self.graph.n_edges, 2, 2))
        for e, s in enumerate(self.system.solvers):
            a, b = self.coeffs[e]
            M = s.matrix(self.lam)
            out[e, 0] = (a, b)
            out[e, 1] = (M[0, 0] * a + M[0, 1] * b, -(M[1, 0] * a + M[1, 1] * b))
        return out

    def edge_values(self, e: int, xs, derivative: bool = False):
        U, V = self.system.solvers[e].states(self.lam, self.coeffs[e], xs)
        return (U[0], V[0]) if derivative else U[0]

    def evaluate(self, p: GraphPoint) -> float:
        self.graph.check_point(p)
        length = self.graph.edges[p.edge].length
        if p.x == 0.0:
            return float(self._ends[p.edge, 0, 0])
        if p.x == length:
            return float(self._ends[p.edge, 1, 0])
        return float(self.edge_values(p.edge, [p.x])[0])

    def vertex_trace(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """``(F(v), dF(v))`` ordered like ``graph.incidences(v)``."""
        inc = self.graph.incidences(v)
        F = np.array([self._ends[e, end, 0] for e, end in inc])
        dF = np.array([self._ends[e, end, 1] for e, end in inc])
        return F, dF

    def vertex_sum_sq(self, v: int) -> float:
        F, _ = self.vertex_trace(v)
        return float(math.fsum(F) ** 2)

    def condition_residual(self, v: int) -> float:
        F, dF = self.vertex_trace(v)
        p = self.system.ab[v]
        return float(np.linalg.norm(p.A @ F + p.B @ dF))

    def sample_grid(self, e: int) -> np.ndarray:
        length = self.graph.edges[e].length
        k = math.sqrt(max(self.lam, 0.0))
        n = int(math.ceil(64 * (1 + k * length / math.pi)))
        return np.linspace(0.0, length, n + 1)

    def sup_norm(self) -> float:
        return max(float(np.abs(self.edge_values(e, self.sample_grid(e))).max()) for e in range(self.graph.n_edges))

    def norm(self) -> float:
        return math.sqrt(math.fsum(float(s.gram(self.lam, self.coeffs[e])[0, 0])
                                   for e, s in enumerate(self.system.solvers)))

    def potential_energy(self) -> float:
        """``int_G q |f|^2 dx``."""
        return math.fsum(float(s.gram(self.lam, self.coeffs[e], weighted=True)[0, 0])
                         for e, s in enumerate(self.system.solvers))

    def ode_residual(self, n_points: int = 16) -> float:
        """``max |-f'' + q f - lam f| / ((1 + |lam|) * sup|f|)`` at interior sample points.

        ``f''`` is a central difference of the propagated derivative ``f'``.
        """
        k = math.sqrt(abs(self.lam))
        h = 1e-3 / (1.0 + k)
        worst = 0.0
        q = self.system.potential
        for e, solver in enumerate(self.system.solvers):
            length = self.graph.edges[e].length
            breaks = np.array([p[0] for p in solver.pieces[1:]])
            xs = length * (np.arange(n_points) + 0.5 + 0.1234) / (n_points + 1)
            if breaks.size:
                xs = xs[np.min(np.abs(xs[:, None] - breaks[None, :]), axis=1) > 4 * h]
            xs = xs[(xs > 2 * h) & (xs < length - 2 * h)]
            if xs.size == 0:
                continue
            f = self.edge_values(e, xs)
            dp = self.edge_values(e, xs + h, derivative=True)[1]
            dm = self.edge_values(e, xs - h, derivative=True)[1]
            d2 = (dp - dm) / (2 * h)
            qv = q.on(e).evaluate(xs, length)
            worst = max(worst, float(np.abs(-d2 + (qv - self.lam) * f).max()))
        return worst / ((1.0 + abs(self.lam)) * self.sup_norm())


def _orthonormal_cluster(system: SecularSystem, lam: float, m: int) -> np.ndarray:
    """Coefficients ``(m, E, 2)`` whose eigenfunctions are L²-orthonormal."""
    C = system.eigenvector_coefficients(lam, m)
    G = np.zeros((m, m))
    for e, s in enumerate(system.solvers):
        G += s.gram(lam, C[:, e, :])
    w, U = np.linalg.eigh(G)
    if w.min() <= 0:
        raise ValueError(f"degenerate eigenvector basis at lam={lam}")
    Winv = U @ np.diag(w ** -0.5) @ U.T  # symmetric orthonormalisation
    C = np.einsum("ij,jek->iek", Winv, C)
    for i in range(m):
        flat = C[i].ravel()
        if flat[np.argmax(np.abs(flat))] < 0:
            C[i] = -C[i]
    return C


def eigenfunctions(system: SecularSystem, spectrum: Spectrum, upto: int | None = None) -> list[Eigenfunction]:
    """Eigenfunctions for the spectrum entries, completing the cluster containing ``upto``."""
    out: list[Eigenfunction] = []
    for start, m, lam in spectrum.clusters():
        if upto is not None and start >= upto:
            break
        C = _orthonormal_cluster(system, lam, m)
        for i in range(m):
            out.append(Eigenfunction(lam, C[i], system, spectrum.offset + start + i + 1, m))
    return out


def gram_matrix(funcs: list[Eigenfunction]) -> np.ndarray:
    """L² inner products by Gauss-Legendre panels dense enough for the highest mode."""
    if not funcs:
        return np.zeros((0, 0))
    g = funcs[0].graph
    k = math.sqrt(max(max(f.lam for f in funcs), 0.0))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    G = np.zeros((len(funcs), len(funcs)))
    for e in range(g.n_edges):
        length = g.edges[e].length
        panels = int(math.ceil(4 * (1 + k * length / math.pi)))
        bounds = np.linspace(0.0, length, panels + 1)
        solver = funcs[0].system.solvers[e]
        # split panels at potential breakpoints
        bounds = np.unique(np.concatenate([bounds, [p[0] for p in solver.pieces[1:]]]))
        a, b = bounds[:-1, None], bounds[1:, None]
        xs = (a + (b - a) * (nodes + 1) / 2).ravel()
        ws = ((b - a) / 2 * weights).ravel()
        F = np.array([f.edge_values(e, xs) for f in funcs])
        G += (F * ws) @ F.T
    return G


def write_samples(funcs: list[Eigenfunction], path: str | Path, points_per_edge: int = 201):
    """CSV dump with columns index, eigenvalue, edge, x, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "edge", "x", "value"])
        for f in funcs:
            for e in range(f.graph.n_edges):
                xs = np.linspace(0.0, f.graph.edges[e].length, points_per_edge)
                for x, y in zip(xs, f.edge_values(e, xs)):
                    w.writerow([f.index, f"{f.lam:.17g}", e, f"{x:.17g}", f"{y:.17g}"])
