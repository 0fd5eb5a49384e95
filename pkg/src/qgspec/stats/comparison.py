"""Mean eigenvalue differences between vertex conditions."""

from __future__ import annotations

import numpy as np

from ..conditions import VertexConditionSet
from ..graph import MetricGraph, betti_number, degree, is_bipartite, total_length
from ..potential import as_potential, integral, sup_norm
from ..secular import Spectrum
from .common import (
    ComparisonReport,
    PreconditionError,
    certificate_line,
    extrapolate,
    running_mean,
    solve,
    strictly_increasing,
)


def _per_vertex(g: MetricGraph, b) -> np.ndarray:
    arr = np.full(g.n_vertices, float(b)) if np.isscalar(b) else np.asarray(b, float)
    if arr.shape != (g.n_vertices,):
        raise PreconditionError("need one coupling strength per vertex")
    return arr


def mean_shift_limit(g: MetricGraph, beta, beta_prime, q=None) -> float:
    """Predicted mean shift ``(2/L) sum_v deg(v) (1/beta_v - 1/beta'_v)``, plus ``(1/L) int q``."""
    b, bp = _per_vertex(g, beta), _per_vertex(g, beta_prime)
    if np.any(b == 0) or np.any(bp == 0):
        raise PreconditionError("coupling strengths must be nonzero")
    L = total_length(g)
    deg = np.array([degree(g, v) for v in g.vertices], float)
    out = 2.0 / L * float(np.sum(deg * (1.0 / b - 1.0 / bp)))
    if q is not None:
        out += integral(as_potential(q), g) / L
    return out


def mean_difference(spec_a: Spectrum, spec_b: Spectrum, n_max: int, predicted: float | None = None,
                    labels: tuple[str, str] = ("A", "B")) -> ComparisonReport:
    """Running means of ``spec_a[n] - spec_b[n]`` (index-aligned) for N = 1..n_max."""
    for s in (spec_a, spec_b):
        if s.offset != 0 or len(s) < n_max:
            raise PreconditionError(f"spectrum does not reach index {n_max}")
        if s.certificate is not None and not s.certificate.passed:
            raise PreconditionError("spectrum certificate failed")
    d = spec_a.values[:n_max] - spec_b.values[:n_max]
    means = running_mean(d)
    rep = ComparisonReport(labels[0], labels[1], np.arange(1, n_max + 1), means, predicted,
                           extrapolate(means))
    rep.certificates = [certificate_line(labels[0], spec_a), certificate_line(labels[1], spec_b)]
    rep.spectra = {"A": spec_a, "B": spec_b}
    return rep


def divergence_experiment(g: MetricGraph, beta_prime: float, n_grid, q=None, mirrored: bool = False,
                          potential_variant: bool = False, gammas=(1.0, 0.5, 0.25),
                          jobs: int = 1) -> ComparisonReport:
    """Means of ``d_n(0, beta')`` (or ``d_n(beta', 0)`` when mirrored) on an N grid.

    Verdicts: monotone growth (decay when mirrored) across the grid and, at the
    largest N, exceeding the finite bound ``(4|E|/L)(1/gamma - 1/beta')`` for
    every gamma in the ladder (below ``(4|E|/L)(1/beta' - 1/gamma)`` when
    mirrored). With ``potential_variant`` the second operator carries no
    potential and the bounds move by ``(1/L) int q``.
    """
    if not beta_prime > 0:
        raise PreconditionError("beta' must be positive")
    n_grid = sorted(int(n) for n in n_grid)
    n_max = n_grid[-1]
    q_second = None if potential_variant else q
    L = total_length(g)
    shift = integral(as_potential(q), g) / L if (potential_variant and q is not None) else 0.0
    anti_q, dp_q = (q, q_second) if not mirrored else (q_second, q)
    _, anti = solve(g, VertexConditionSet.delta_prime(g, 0.0), anti_q, n_max, jobs)
    _, dp = solve(g, VertexConditionSet.delta_prime(g, beta_prime), dp_q, n_max, jobs)
    a, b, la, lb = anti, dp, "anti-Kirchhoff", f"delta' beta={beta_prime:g}"
    if mirrored:
        a, b, la, lb = dp, anti, lb, la
    full = mean_difference(a, b, n_max, labels=(la, lb))
    idx = np.array(n_grid) - 1
    rep = ComparisonReport(la, lb, np.array(n_grid), full.cesaro[idx], None, full.extrapolation)
    rep.certificates = full.certificates
    rep.spectra = full.spectra
    c = 4 * g.n_edges / L
    if mirrored:
        bounds = {gm: c * (1.0 / beta_prime - 1.0 / gm) + shift for gm in gammas}
        rep.bound = np.full(len(n_grid), min(bounds.values()))
        rep.verdicts["strictly decreasing"] = strictly_increasing(-rep.cesaro)
        rep.verdicts["below bounds"] = all(rep.cesaro[-1] < v for v in bounds.values())
    else:
        bounds = {gm: c * (1.0 / gm - 1.0 / beta_prime) + shift for gm in gammas}
        rep.bound = np.full(len(n_grid), max(bounds.values()))
        rep.verdicts["strictly increasing"] = strictly_increasing(rep.cesaro)
        rep.verdicts["above bounds"] = all(rep.cesaro[-1] > v for v in bounds.values())
    rep.notes.append("gamma ladder bounds: " + ", ".join(f"gamma={k:g}: {v:.6g}" for k, v in bounds.items()))
    return rep


def bipartite_divergence(g: MetricGraph, sigma, beta, n_grid, q=None, jobs: int = 1) -> ComparisonReport:
    """Means of ``mu_n^q(sigma) - lambda_n^q(beta)`` on a bipartite graph with one cycle.

    The lower bound sequence is ``(1/N) sum (lambda_n^0(0) - lambda_n^0(beta'))
    - 2 |q|_inf`` with ``beta' = min beta``; verdicts ask for growth across the
    grid and for the means to stay above the bound at every grid point.
    """
    ok, _ = is_bipartite(g)
    if not ok:
        raise PreconditionError("graph is not bipartite")
    if betti_number(g) != 1:
        raise PreconditionError("graph must have exactly one independent cycle")
    sig = _per_vertex(g, sigma)
    bet = _per_vertex(g, beta)
    if np.any(sig < 0) or np.any(bet <= 0):
        raise PreconditionError("need sigma >= 0 and beta > 0")
    n_grid = sorted(int(n) for n in n_grid)
    n_max = n_grid[-1]
    q = as_potential(q)
    qn = sup_norm(q, g)
    _, mu = solve(g, VertexConditionSet.delta(g, sig), q, n_max, jobs)
    _, lam = solve(g, VertexConditionSet.delta_prime(g, bet), q, n_max, jobs)
    _, anti0 = solve(g, VertexConditionSet.delta_prime(g, 0.0), None, n_max, jobs)
    _, low0 = solve(g, VertexConditionSet.delta_prime(g, float(bet.min())), None, n_max, jobs)
    full = mean_difference(mu, lam, n_max, labels=("delta sigma", "delta' beta"))
    bound_full = running_mean(anti0.values[:n_max] - low0.values[:n_max]) - 2.0 * qn
    idx = np.array(n_grid) - 1
    rep = ComparisonReport("delta sigma", "delta' beta", np.array(n_grid), full.cesaro[idx], None,
                           full.extrapolation, bound_full[idx])
    rep.certificates = full.certificates + [
        certificate_line("anti-Kirchhoff q=0", anti0),
        certificate_line(f"delta' beta={bet.min():g} q=0", low0),
    ]
    rep.spectra = full.spectra
    rep.verdicts["strictly increasing"] = strictly_increasing(rep.cesaro)
    rep.verdicts["above lower bound"] = bool(np.all(rep.cesaro >= rep.bound))
    return rep
