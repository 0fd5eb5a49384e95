"""Heat kernel spectral sums and the potential bracketing inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..conditions import Delta, DeltaPrime, Dirichlet, VertexConditionSet
from ..eigenfunctions import Eigenfunction, eigenfunctions
from ..graph import GraphPoint, MetricGraph, degree
from ..potential import as_potential, bracket
from ..secular import SecularSystem
from .common import PreconditionError, certificate_line, weyl_tail

MIN_CUTOFF_TIME = 30.0


@dataclass
class HeatReport:
    target: str
    t: float
    cutoff: float
    value: float
    scaled: float  # sqrt(4 pi t) * value
    predicted: float | None
    tail_bound: float
    n_modes: int
    certificates: list[str] = field(default_factory=list)

    @property
    def relative_error(self) -> float:
        return abs(self.scaled - self.predicted) / abs(self.predicted) if self.predicted else float("nan")

    def rows(self):
        yield self.t, self.value, self.scaled, self.predicted if self.predicted is not None else float("nan")

    def summary(self) -> str:
        return (f"heat kernel at {self.target}, t={self.t:g}: sum={self.value:.10g}, "
                f"sqrt(4 pi t)*sum={self.scaled:.10g}, predicted {self.predicted}, "
                f"{self.n_modes} modes below {self.cutoff:.6g}, tail bound {self.tail_bound:.3g}")


def modes_below(system: SecularSystem, cutoff: float, jobs: int = 1):
    """Eigenfunctions with eigenvalue at most ``cutoff`` and the certified spectrum they come from."""
    floor = system.lower_bound()
    spec = system.find_spectrum(window=(floor, cutoff), jobs=jobs)
    return eigenfunctions(system, spec), spec


def heat_kernel_diag(system: SecularSystem, target: int | GraphPoint, t: float, cutoff: float | None = None,
                     jobs: int = 1, modes=None) -> HeatReport:
    """``sum exp(-lam t) |f(p)|^2`` at a point, or ``sum exp(-lam t) |sum_e f_e(v)|^2`` at a vertex.

    The scaled sum ``sqrt(4 pi t) * value`` is compared with ``2/deg`` at a point
    (deg 2 in the interior) and with ``2 deg(v)`` for the vertex sum at a delta or
    delta' vertex.
    """
    if not t > 0:
        raise PreconditionError("t must be positive")
    cutoff = MIN_CUTOFF_TIME / t if cutoff is None else float(cutoff)
    if cutoff * t < MIN_CUTOFF_TIME * (1.0 - 1e-12):
        raise PreconditionError(f"truncation too small: cutoff*t = {cutoff * t:g} < {MIN_CUTOFF_TIME}")
    g: MetricGraph = system.graph
    funcs, spec = modes if modes is not None else modes_below(system, cutoff, jobs)
    lam = np.array([f.lam for f in funcs])
    if isinstance(target, GraphPoint):
        g.check_point(target)
        w = np.array([f.evaluate(target) ** 2 for f in funcs])
        inner = 0.0 < target.x < g.edges[target.edge].length
        v = None if inner else g.endpoint_vertex(target.edge, 0 if target.x == 0 else 1)
        deg = 2 if inner else degree(g, v)
        predicted = 2.0 / deg if inner or isinstance(system.conditions[v], Delta) else None
        label = f"edge {target.edge} x={target.x:g}"
        weight_factor = 1.0
    else:
        w = np.array([f.vertex_sum_sq(target) for f in funcs])
        cond = system.conditions[target]
        deg = degree(g, target)
        if isinstance(cond, DeltaPrime) and cond.beta != 0:
            predicted = 2.0 * deg
        elif isinstance(cond, Delta):
            predicted = 2.0 * deg  # |sum F|^2 = deg^2 |f(v)|^2 and the diagonal tends to 2/deg
        elif isinstance(cond, Dirichlet):
            predicted = 0.0
        else:
            predicted = None
        label = f"vertex {target}"
        weight_factor = float(deg) ** 2
    value = math.fsum(np.exp(-lam * t) * w)
    sup = max((f.sup_norm() for f in funcs), default=1.0)
    tail = weyl_tail(weight_factor * sup ** 2, system.total_length, t, cutoff)
    rep = HeatReport(label, t, cutoff, value, math.sqrt(4 * math.pi * t) * value, predicted, tail, len(funcs))
    rep.certificates.append(certificate_line("spectrum below cutoff", spec))
    return rep


def kernel(funcs: list[Eigenfunction], t: float, x: GraphPoint, y: GraphPoint) -> float:
    return math.fsum(math.exp(-f.lam * t) * f.evaluate(x) * f.evaluate(y) for f in funcs)


@dataclass
class BracketingReport:
    samples: list[tuple[float, GraphPoint, GraphPoint, float, float, float]]  # t, x, y, p+, p, p-
    slack: float
    violations: int
    certificates: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def summary(self) -> str:
        return f"bracketing: {len(self.samples)} samples, {self.violations} violations (slack {self.slack:g})"


def bracketing_check(g: MetricGraph, conditions: VertexConditionSet, q, samples, slack: float = 1e-8,
                     jobs: int = 1) -> BracketingReport:
    """Check ``p^{q+} <= p^q <= p^{q-}`` (up to ``slack``) at samples ``(t, x, y)``.

    ``q-`` and ``q+`` are the constants ``-|q|_inf`` and ``+|q|_inf``.
    """
    if any(isinstance(c, DeltaPrime) for c in conditions.conditions):
        raise PreconditionError("bracketing is checked for the delta family only")
    q = as_potential(q)
    q_minus, q_plus = bracket(q, g)
    t_min = min(s[0] for s in samples)
    cutoff = MIN_CUTOFF_TIME / t_min
    sets = {}
    certs = []
    for name, pot in (("q+", q_plus), ("q", q), ("q-", q_minus)):
        funcs, spec = modes_below(SecularSystem(g, conditions, pot), cutoff, jobs)
        sets[name] = funcs
        certs.append(certificate_line(name, spec))
    rows, bad = [], 0
    for t, x, y in samples:
        pp = kernel(sets["q+"], t, x, y)
        p = kernel(sets["q"], t, x, y)
        pm = kernel(sets["q-"], t, x, y)
        if not (pp <= p + slack and p <= pm + slack):
            bad += 1
        rows.append((t, x, y, pp, p, pm))
    return BracketingReport(rows, slack, bad, certs)
