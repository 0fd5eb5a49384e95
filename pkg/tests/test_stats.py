import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfcx

from qgspec.conditions import Delta, VertexConditionSet
from qgspec.graph import GraphPoint, cycle, figure1, interval, star
from qgspec.potential import Constant, Potential, piecewise_on_halves
from qgspec.secular import SecularSystem, SpectrumError, find_spectrum
from qgspec.stats import (
    PreconditionError,
    bracketing_check,
    bipartite_divergence,
    divergence_experiment,
    extrapolate,
    hadamard_identity_check,
    heat_kernel_diag,
    isospectrality_check,
    local_weyl,
    mean_difference,
    running_mean,
    mean_shift_limit,
)
from qgspec.stats.common import cluster_even
from qgspec.stats.heat import kernel, modes_below


def delta_prime_spec(g, beta, n, q=None):
    return find_spectrum(g, VertexConditionSet.delta_prime(g, beta), q, n=n)


# -- closed forms ---------------------------------------------------------------


def test_mean_shift_limit_star():
    assert mean_shift_limit(star(3), 1.0, 2.0) == pytest.approx(2.0, rel=1e-14)


def test_mean_shift_limit_diagonal_and_handshake():
    g = figure1([1.0, 0.8, 1.2, 0.9, 1.1, 0.7, 1.0])
    assert mean_shift_limit(g, 0.7, 0.7) == 0.0
    L = 6.7
    b, bp = 0.6, 2.5
    assert mean_shift_limit(g, b, bp) == pytest.approx(4 * g.n_edges / L * (1 / b - 1 / bp), rel=1e-13)


def test_mean_shift_limit_potential_term():
    g = star(3)
    assert mean_shift_limit(g, 1.0, 2.0, Potential(Constant(0.7))) == pytest.approx(2.7, rel=1e-14)


def test_mean_shift_limit_rejects_zero_strength():
    with pytest.raises(PreconditionError):
        mean_shift_limit(star(3), 0.0, 1.0)
    with pytest.raises(PreconditionError):
        mean_shift_limit(star(3), [1.0, 1.0, 0.0, 1.0], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4), st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4))
def test_mean_shift_limit_antisymmetric(b, bp):
    g = star(3, [1.0, 0.5, 2.0])
    assert mean_shift_limit(g, b, bp) == pytest.approx(-mean_shift_limit(g, bp, b), abs=1e-12)


# -- Cesàro means ----------------------------------------------------------------


def test_running_mean_matches_direct_sums():
    rng = np.random.default_rng(3)
    d = rng.normal(size=3000) * 50.0
    means = running_mean(d)
    for N in (1, 17, 999, 3000):
        assert abs(means[N - 1] - math.fsum(d[:N]) / N) <= 1e-12 * max(1.0, abs(means[N - 1]))


def test_extrapolation_recovers_model():
    N = np.arange(1, 401)
    ex = extrapolate(2.5 - 3.0 / N)
    assert ex.limit == pytest.approx(2.5, abs=1e-12)
    assert ex.slope == pytest.approx(-3.0, abs=1e-10)
    assert ex.n_range == (200, 400)


def test_identical_spectra_give_zero():
    s = delta_prime_spec(star(3), 1.0, 200)
    rep = mean_difference(s, s, 200)
    assert np.all(rep.cesaro == 0.0)


def test_mean_difference_antisymmetric():
    g = interval(1.0)
    a, b = delta_prime_spec(g, 1.0, 300), delta_prime_spec(g, 2.0, 300)
    assert np.array_equal(mean_difference(a, b, 300).cesaro, -mean_difference(b, a, 300).cesaro)


def test_mean_difference_interval_limit():
    g = interval(1.0)
    a, b = delta_prime_spec(g, 1.0, 2000), delta_prime_spec(g, 2.0, 2000)
    pred = mean_shift_limit(g, 1.0, 2.0)
    assert pred == pytest.approx(2.0)
    rep = mean_difference(a, b, 2000, predicted=pred)
    assert abs(rep.extrapolation.limit - 2.0) <= 0.1 * 2.0


def test_mean_difference_potential_shift():
    g = interval(1.0)
    c = 0.8
    a = delta_prime_spec(g, 1.0, 1000, Potential(Constant(c)))
    b = delta_prime_spec(g, 2.0, 1000)
    base = mean_difference(delta_prime_spec(g, 1.0, 1000), b, 1000)
    shifted = mean_difference(a, b, 1000)
    assert abs(shifted.extrapolation.limit - base.extrapolation.limit - c) <= 0.1 * c


def test_mean_difference_requires_reach():
    s = delta_prime_spec(interval(1.0), 1.0, 10)
    with pytest.raises(PreconditionError):
        mean_difference(s, s, 50)


def test_cluster_even_splits_degenerate_sums():
    g = cycle(4)
    spec = find_spectrum(g, VertexConditionSet.delta(g, 0.0), n=5)
    vals = cluster_even(np.array([1.0, 3.0, 5.0, 0.0, 2.0]), spec)
    assert np.allclose(vals, [1.0, 4.0, 4.0, 1.0, 1.0])
    with pytest.raises(SpectrumError):
        cluster_even(np.ones(2), spec)


# -- local Weyl law --------------------------------------------------------------


def test_local_weyl_endpoint_vertex():
    g = interval(1.0)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 1.0))
    rep = local_weyl(sys, sys.find_spectrum(n=2000), 0, 2000)
    assert rep.predicted == 2.0
    assert rep.relative_error <= 0.05


def test_local_weyl_star_centre():
    g = star(3)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 1.0))
    rep = local_weyl(sys, sys.find_spectrum(n=600), 0, 600)
    assert rep.predicted == pytest.approx(2.0)
    assert rep.relative_error <= 0.05


def test_local_weyl_interior_two_paths():
    g = interval(1.0)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 1.0))
    rep = local_weyl(sys, sys.find_spectrum(n=300), GraphPoint(0, 0.5), 300)
    assert rep.predicted == 1.0
    assert rep.dummy_spectrum_deviation <= 1e-9
    assert rep.dummy_agreement <= 1e-8
    assert rep.relative_error <= 0.05


def test_local_weyl_preconditions():
    g = star(3)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 0.0))
    spec = sys.find_spectrum(n=10)
    with pytest.raises(PreconditionError):
        local_weyl(sys, spec, 0, 10)  # anti-Kirchhoff vertex
    with pytest.raises(PreconditionError):
        local_weyl(sys, spec, GraphPoint(0, 0.0), 10)  # a vertex, not an interior point
    with pytest.raises(PreconditionError):
        local_weyl(sys, spec, GraphPoint(0, 0.5), 20)


# -- divergence experiments --------------------------------------------------------


def test_divergence_interval():
    rep = divergence_experiment(interval(1.0), 1.0, [250, 500, 1000, 2000], gammas=(1.0, 0.5, 0.25))
    assert rep.verdicts == {"strictly increasing": True, "above bounds": True}
    assert rep.cesaro[-1] > 12.0
    mirrored = divergence_experiment(interval(1.0), 1.0, [250, 500, 1000, 2000], mirrored=True)
    assert mirrored.passed
    assert np.allclose(mirrored.cesaro, -rep.cesaro, rtol=0, atol=1e-12)
    assert mirrored.cesaro[-1] < -12.0


def test_divergence_rejects_nonpositive_strength():
    with pytest.raises(PreconditionError):
        divergence_experiment(interval(1.0), 0.0, [10, 20])


def test_bipartite_divergence_and_bound_shift():
    g = figure1()
    base = bipartite_divergence(g, 0.0, 1.0, [100, 300])
    assert base.passed
    c = -0.4
    shifted = bipartite_divergence(g, 0.0, 1.0, [100, 300], Potential(Constant(c)))
    assert np.allclose(shifted.bound, base.bound - 2 * abs(c), rtol=0, atol=1e-12)


def test_bipartite_gates():
    with pytest.raises(PreconditionError):
        bipartite_divergence(cycle(3), 0.0, 1.0, [10])
    with pytest.raises(PreconditionError):
        bipartite_divergence(star(3), 0.0, 1.0, [10])  # a tree: no cycle


# -- interlacing -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["interval", "star"])
def test_delta_prime_below_anti_kirchhoff(name):
    g = interval(1.0) if name == "interval" else star(3)
    anti = delta_prime_spec(g, 0.0, 300).values[:300]
    for beta in (0.5, 1.0, 2.0):
        assert np.all(delta_prime_spec(g, beta, 300).values[:300] <= anti + 1e-9)


# -- Hadamard identity -------------------------------------------------------------


def test_hadamard_trivial_path():
    rep = hadamard_identity_check(interval(1.0), 1.0, 1.0, 2)
    assert rep.direct == 0.0 and rep.quadrature == 0.0 and rep.residual == 0.0


def test_hadamard_interval_32_nodes():
    rep = hadamard_identity_check(interval(1.0), 1.0, 2.0, 1, nodes=32)
    assert not rep.aborted
    assert rep.residual <= 1e-3


def test_hadamard_star_midpoint_rate():
    # a generic non-equilateral star keeps the second eigenvalue simple along the path
    g = star(3, [1.0, 0.8, 0.6])
    r64 = hadamard_identity_check(g, 1.0, 2.0, 2, nodes=64, rule="midpoint")
    r128 = hadamard_identity_check(g, 1.0, 2.0, 2, nodes=128, rule="midpoint")
    assert r64.residual / r128.residual == pytest.approx(4.0, rel=0.1)


def test_hadamard_aborts_on_degeneracy():
    rep = hadamard_identity_check(star(3), 1.0, 2.0, 2, nodes=4)
    assert rep.aborted and math.isnan(rep.residual)


def test_hadamard_preconditions():
    with pytest.raises(PreconditionError):
        hadamard_identity_check(interval(1.0), 1.0, 2.0, 6)
    with pytest.raises(PreconditionError):
        hadamard_identity_check(interval(1.0), 0.0, 2.0, 1)


# -- heat kernel ---------------------------------------------------------------------


def test_heat_interval_midpoint():
    g = interval(math.pi)
    sys = SecularSystem(g, VertexConditionSet.dirichlet(g))
    rep = heat_kernel_diag(sys, GraphPoint(0, math.pi / 2), 1e-3)
    assert rep.predicted == 1.0
    assert rep.relative_error <= 0.05
    assert rep.cutoff * rep.t >= 30.0


def robin_half_line_vertex_sum(deg, beta, t):
    """Scaled vertex sum of an equilateral star at times far below the edge travel time.

    Only the symmetric sector reaches the vertex statistic; it is a half-line
    with the Robin condition ``h'(0) = (deg / beta) h(0)``, whose diagonal heat
    kernel is ``1/sqrt(pi t) - k erfcx(k sqrt(t))``.
    """
    k = deg / beta
    return deg * (1.0 / math.sqrt(math.pi * t) - k * erfcx(k * math.sqrt(t))) * math.sqrt(4 * math.pi * t)


@pytest.mark.parametrize("t", [1e-3, 1e-4])
def test_heat_star_centre_against_half_line(t):
    g = star(3)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 1.0))
    rep = heat_kernel_diag(sys, 0, t)
    assert rep.predicted == 6.0
    assert rep.scaled == pytest.approx(robin_half_line_vertex_sum(3, 1.0, t), rel=1e-10)


def test_heat_star_centre_approaches_limit():
    g = star(3)
    sys = SecularSystem(g, VertexConditionSet.delta_prime(g, 1.0))
    errs = [heat_kernel_diag(sys, 0, t).relative_error for t in (1e-3, 1e-4, 1e-5)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 0.02


def test_heat_single_mode_at_large_time():
    g = interval(math.pi)
    sys = SecularSystem(g, VertexConditionSet.dirichlet(g))
    p = GraphPoint(0, math.pi / 2)
    rep = heat_kernel_diag(sys, p, 10.0)
    single = math.exp(-10.0) * 2 / math.pi
    assert rep.value == pytest.approx(single, rel=1e-10)


def test_heat_truncation_guard():
    g = interval(1.0)
    sys = SecularSystem(g, VertexConditionSet.dirichlet(g))
    with pytest.raises(PreconditionError):
        heat_kernel_diag(sys, GraphPoint(0, 0.5), 1e-2, cutoff=100.0)
    with pytest.raises(PreconditionError):
        heat_kernel_diag(sys, GraphPoint(0, 0.5), 0.0)


SAMPLES = [(t, GraphPoint(0, x), GraphPoint(0, y)) for t in (0.02, 0.1, 0.5) for x in (0.2, 0.5) for y in (0.5, 0.8)]


def test_bracketing_zero_potential_equalities():
    g = interval(1.0)
    rep = bracketing_check(g, VertexConditionSet.delta(g, 0.0), None, SAMPLES, slack=0.0)
    assert rep.passed
    for _, _, _, pp, p, pm in rep.samples:
        assert pp == p == pm


def test_bracketing_constant_shift_identity():
    g = interval(1.0)
    c = 0.6
    conds = VertexConditionSet.delta(g, 0.0)
    rep = bracketing_check(g, conds, Potential(Constant(c)), SAMPLES)
    assert rep.passed
    free, _ = modes_below(SecularSystem(g, conds), 30.0 / 0.02)
    for t, x, y, pp, p, pm in rep.samples:
        p0 = kernel(free, t, x, y)
        assert p == pytest.approx(math.exp(-c * t) * p0, rel=1e-9, abs=1e-12)
        assert pm == pytest.approx(math.exp(c * t) * p0, rel=1e-9, abs=1e-12)


def test_bracketing_piecewise_potential():
    g = interval(1.0)
    q = Potential(piecewise_on_halves(1.0, -1.0, 1.0))
    rep = bracketing_check(g, VertexConditionSet.delta(g, 0.0), q, SAMPLES)
    assert rep.passed


def test_bracketing_rejects_delta_prime():
    g = interval(1.0)
    with pytest.raises(PreconditionError):
        bracketing_check(g, VertexConditionSet.delta_prime(g, 1.0), None, SAMPLES)


# -- isospectral pairs --------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_isospectral_interval(beta):
    assert isospectrality_check("interval_delta_deltaprime", 50, beta=beta).deviation <= 1e-8


def test_isospectral_even_cycle():
    assert isospectrality_check("bipartite_kirchhoff_antikirchhoff", 30, graph=cycle(4)).deviation <= 1e-8


def test_isospectral_gates():
    with pytest.raises(PreconditionError):
        isospectrality_check("bipartite_kirchhoff_antikirchhoff", 10, graph=cycle(3))
    with pytest.raises(PreconditionError):
        isospectrality_check("bipartite_kirchhoff_antikirchhoff", 10, graph=cycle(4), q=Potential(Constant(1.0)))
    with pytest.raises(PreconditionError):
        isospectrality_check("interval_delta_deltaprime", 10, beta=-1.0)
    with pytest.raises(PreconditionError):
        isospectrality_check("no_such_pair", 10)


def test_dummy_vertex_is_invisible():
    g = star(3, [1.0, 0.7, 1.3])
    conds = VertexConditionSet.from_mapping(g, {0: Delta(0.4)}, default=Delta(1.0))
    sys = SecularSystem(g, conds)
    rep = local_weyl(sys, sys.find_spectrum(n=80), GraphPoint(2, 0.41), 80)
    assert rep.dummy_spectrum_deviation <= 1e-9
    assert rep.dummy_agreement <= 1e-8
