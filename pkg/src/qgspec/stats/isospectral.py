"""Isospectral pairs of vertex conditions."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..conditions import VertexConditionSet
from ..graph import MetricGraph, betti_number, interval, is_bipartite
from ..potential import as_potential
from ..secular import Spectrum
from .common import PreconditionError, certificate_line, relative_deviation, solve

PAIRS = ("interval_delta_deltaprime", "bipartite_kirchhoff_antikirchhoff")


@dataclass
class IsospectralReport:
    pair: str
    n: int
    deviation: float
    certificates: list[str] = field(default_factory=list)
    spectra: dict[str, Spectrum] = field(default_factory=dict)

    def summary(self) -> str:
        return f"isospectrality {self.pair}, first {self.n}: max relative deviation {self.deviation:.3g}"


def isospectrality_check(pair: str, n: int, length: float = 1.0, beta: float = 1.0,
                         graph: MetricGraph | None = None, q=None, jobs: int = 1) -> IsospectralReport:
    """``max_{k<=n} |lam_k^A - lam_k^B| / (1 + |lam_k^A|)`` for a known isospectral pair.

    ``interval_delta_deltaprime``: delta'(beta) against delta(1/beta) on an interval.
    ``bipartite_kirchhoff_antikirchhoff``: anti-Kirchhoff against Kirchhoff on a
    bipartite graph with exactly one cycle and no potential.
    """
    if pair == "interval_delta_deltaprime":
        if not beta > 0:
            raise PreconditionError("beta must be positive")
        g = interval(length)
        a = VertexConditionSet.delta_prime(g, beta)
        b = VertexConditionSet.delta(g, 1.0 / beta)
    elif pair == "bipartite_kirchhoff_antikirchhoff":
        if graph is None:
            raise PreconditionError("a graph is required")
        g = graph
        ok, _ = is_bipartite(g)
        if not ok:
            raise PreconditionError("graph is not bipartite")
        if betti_number(g) != 1:
            raise PreconditionError("graph must have exactly one independent cycle")
        if not as_potential(q).is_zero:
            raise PreconditionError("the bipartite pair is isospectral only without potential")
        a = VertexConditionSet.delta_prime(g, 0.0)
        b = VertexConditionSet.delta(g, 0.0)
    else:
        raise PreconditionError(f"unknown pair {pair!r}; choose from {PAIRS}")
    _, sa = solve(g, a, q, n, jobs)
    _, sb = solve(g, b, q, n, jobs)
    rep = IsospectralReport(pair, n, relative_deviation(sa.values[:n], sb.values[:n]))
    rep.certificates = [certificate_line("A", sa), certificate_line("B", sb)]
    rep.spectra = {"A": sa, "B": sb}
    return rep
