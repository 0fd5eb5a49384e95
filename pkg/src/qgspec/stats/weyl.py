"""Local Weyl law statistics at vertices and interior points."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..conditions import Delta, DeltaPrime, VertexConditionSet
from ..eigenfunctions import eigenfunctions
from ..graph import GraphPoint, MetricGraph, degree, insert_dummy_vertex, total_length
from ..potential import Potential, split_edge_potential
from ..secular import SecularSystem, Spectrum
from .common import PreconditionError, certificate_line, cluster_even, relative_deviation, running_mean


@dataclass
class WeylReport:
    target: str
    n: np.ndarray
    cesaro: np.ndarray
    predicted: float
    dummy_cesaro: np.ndarray | None = None
    dummy_spectrum_deviation: float | None = None
    sup_norm_max: float | None = None
    certificates: list[str] = field(default_factory=list)

    @property
    def relative_error(self) -> float:
        return abs(self.cesaro[-1] - self.predicted) / abs(self.predicted)

    @property
    def dummy_agreement(self) -> float | None:
        if self.dummy_cesaro is None:
            return None
        return float(np.max(np.abs(self.dummy_cesaro - self.cesaro)))

    def rows(self):
        for n, c in zip(self.n, self.cesaro):
            yield int(n), float(c), self.predicted

    def summary(self) -> str:
        s = [f"local Weyl at {self.target}: C({int(self.n[-1])}) = {self.cesaro[-1]:.10g}, "
             f"predicted {self.predicted:.10g} (relative error {self.relative_error:.3g})"]
        if self.dummy_cesaro is not None:
            s.append(f"  dummy-vertex path: max |difference| {self.dummy_agreement:.3g}, "
                     f"spectrum deviation {self.dummy_spectrum_deviation:.3g}")
        return "\n".join(s)


def dummy_vertex_system(system: SecularSystem, p: GraphPoint) -> tuple[SecularSystem, int]:
    """Same operator with a degree-2 vertex carrying continuity and Kirchhoff at ``p``."""
    g = system.graph
    g2, v = insert_dummy_vertex(g, p)
    q = system.potential
    per_edge = {e.id: q.on(e.id) for e in g.edges}
    left, right = split_edge_potential(q.on(p.edge), g.edges[p.edge].length, p.x)
    per_edge[p.edge] = left
    per_edge[g.n_edges] = right
    conds = system.conditions.with_vertex(v, Delta(0.0))
    return SecularSystem(g2, conds, Potential(q.default, per_edge)), v


def local_weyl(system: SecularSystem, spectrum: Spectrum, target: int | GraphPoint, n_max: int,
               check_dummy: bool = True) -> WeylReport:
    """Cesàro means of ``|sum_e f_e(v)|^2`` (vertex) or ``|f(x)|^2`` (interior point).

    Predicted limits are ``2 deg(v) / L`` and ``1 / L``. For an interior point
    the statistic is also computed through a dummy vertex inserted at the point.
    """
    g: MetricGraph = system.graph
    L = total_length(g)
    if spectrum.offset != 0 or len(spectrum) < n_max:
        raise PreconditionError(f"spectrum does not reach index {n_max}")
    funcs = eigenfunctions(system, spectrum, upto=n_max)
    if isinstance(target, GraphPoint):
        g.check_point(target)
        if not 0.0 < target.x < g.edges[target.edge].length:
            raise PreconditionError("interior statistic needs a point strictly inside an edge")
        values = np.array([f.evaluate(target) ** 2 for f in funcs])
        predicted = 1.0 / L
        label = f"edge {target.edge} x={target.x:g}"
    else:
        cond = system.conditions[target]
        if not isinstance(cond, DeltaPrime) or cond.beta == 0.0:
            raise PreconditionError("vertex statistic needs a delta' vertex with nonzero strength")
        values = np.array([f.vertex_sum_sq(target) for f in funcs])
        predicted = 2.0 * degree(g, target) / L
        label = f"vertex {target}"
    values = cluster_even(values, spectrum)[:n_max]
    rep = WeylReport(label, np.arange(1, n_max + 1), running_mean(values), predicted)
    rep.certificates.append(certificate_line("spectrum", spectrum))
    if isinstance(target, GraphPoint) and check_dummy:
        sys2, v = dummy_vertex_system(system, target)
        spec2 = sys2.find_spectrum(n=n_max, certify=False)
        rep.dummy_spectrum_deviation = relative_deviation(spectrum.values[:n_max], spec2.values[:n_max])
        funcs2 = eigenfunctions(sys2, spec2, upto=n_max)
        vals2 = np.array([f.vertex_trace(v)[0][0] ** 2 for f in funcs2])
        vals2 = cluster_even(vals2, spec2)[:n_max]
        rep.dummy_cesaro = running_mean(vals2)
    return rep
