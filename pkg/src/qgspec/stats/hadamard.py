"""Path-integral form of eigenvalue differences between two delta' couplings."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..conditions import VertexConditionSet
from ..eigenfunctions import eigenfunctions
from ..graph import MetricGraph
from ..potential import as_potential, scale
from ..secular import SecularSystem
from .common import PreconditionError

SIMPLE_GAP_RTOL = 1e-6


class CrossingError(RuntimeError):
    """The tracked eigenvalue is degenerate somewhere along the path."""


def quadrature(n: int, rule: str = "gauss") -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]; ``midpoint`` is the composite midpoint rule."""
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        return (x + 1.0) / 2.0, w / 2.0
    if rule == "midpoint":
        return (np.arange(n) + 0.5) / n, np.full(n, 1.0 / n)
    raise ValueError(f"unknown quadrature rule {rule!r}")


@dataclass
class HadamardReport:
    index: int
    direct: float
    quadrature: float
    nodes: int
    rule: str
    aborted: bool = False
    reason: str = ""
    integrand: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def residual(self) -> float:
        if self.aborted:
            return float("nan")
        if self.direct == 0.0:
            return abs(self.quadrature)
        return abs(self.direct - self.quadrature) / abs(self.direct)

    def summary(self) -> str:
        if self.aborted:
            return f"Hadamard n={self.index}: aborted ({self.reason})"
        return (f"Hadamard n={self.index} ({self.rule}, {self.nodes} nodes): direct {self.direct:.12g}, "
                f"quadrature {self.quadrature:.12g}, relative residual {self.residual:.3g}")


def _per_vertex(g, b):
    arr = np.full(g.n_vertices, float(b)) if np.isscalar(b) else np.asarray(b, float)
    if arr.shape != (g.n_vertices,):
        raise PreconditionError("need one coupling strength per vertex")
    return arr


def _integrand(g, beta, beta_p, q, n, tau, potential_variant):
    """Derivative in tau of the n-th eigenvalue along the interpolated path."""
    b_tau = beta_p + tau * (beta - beta_p)
    q_tau = scale(q, tau) if potential_variant else q
    system = SecularSystem(g, VertexConditionSet.delta_prime(g, b_tau), q_tau)
    spec = system.find_spectrum(n=n + 1, certify=False)
    vals = spec.values
    lam = vals[n - 1]
    tol = SIMPLE_GAP_RTOL * (1.0 + abs(lam))
    if (n >= 2 and lam - vals[n - 2] < tol) or vals[n] - lam < tol:
        raise CrossingError(f"eigenvalue {n} is not simple at tau={tau:.6g}")
    f = eigenfunctions(system, spec, upto=n)[n - 1]
    total = math.fsum((beta_p[v] - beta[v]) / b_tau[v] ** 2 * f.vertex_sum_sq(v) for v in g.vertices)
    if potential_variant:
        total += f.potential_energy()
    return total


def hadamard_identity_check(g: MetricGraph, beta, beta_prime, n: int, nodes: int = 64, q=None,
                            potential_variant: bool = False, rule: str = "gauss",
                            jobs: int = 1) -> HadamardReport:
    """Compare ``d_n(beta, beta')`` with its integral along ``beta' + tau (beta - beta')``.

    With ``potential_variant`` the comparison is ``lambda_n^q(beta) -
    lambda_n^0(beta')`` and the path also scales the potential by ``tau``; the
    integrand then gains ``int q |f|^2``. A degenerate eigenvalue anywhere on the
    quadrature nodes aborts the check.
    """
    if not 1 <= n <= 5:
        raise PreconditionError("index must be between 1 and 5")
    beta, beta_p = _per_vertex(g, beta), _per_vertex(g, beta_prime)
    if np.any(beta <= 0) or np.any(beta_p <= 0):
        raise PreconditionError("coupling strengths must be positive")
    q = as_potential(q)
    s_a = SecularSystem(g, VertexConditionSet.delta_prime(g, beta), q).find_spectrum(n=n)
    s_b = SecularSystem(g, VertexConditionSet.delta_prime(g, beta_p), None if potential_variant else q).find_spectrum(n=n)
    direct = float(s_a.values[n - 1] - s_b.values[n - 1])
    if np.array_equal(beta, beta_p) and (not potential_variant or q.is_zero):
        return HadamardReport(n, direct, 0.0, nodes, rule, integrand=np.zeros(nodes))
    taus, weights = quadrature(nodes, rule)

    def one(tau):
        return _integrand(g, beta, beta_p, q, n, float(tau), potential_variant)

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                vals = np.array(list(ex.map(one, taus)))
        else:
            vals = np.array([one(t) for t in taus])
    except CrossingError as exc:
        return HadamardReport(n, direct, float("nan"), nodes, rule, aborted=True, reason=str(exc))
    return HadamardReport(n, direct, float(np.dot(weights, vals)), nodes, rule, integrand=vals)
