import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonflow.errors import ComplexityError, ConfigError, DomainError
from graphonflow.functionals import (Entropy, FunctionalSpec, Hom, Interaction, Term, boundary_mask,
                                     derivative, entropy_derivative, entropy_value, evaluate,
                                     hom_density, hom_derivative, interaction_value, local_slope,
                                     semiconvexity, semiconvexity_constant)
from graphonflow.kernel import Permutation, SimpleGraph, StepKernel, blow_up, permute, permute_matrix, random_kernel

MOTIFS = [SimpleGraph.edge(), SimpleGraph.path(3), SimpleGraph.triangle(),
          SimpleGraph.cycle(4), SimpleGraph.star(4), SimpleGraph.path(5)]


def brute_density(h, a):
    k = a.shape[0]
    total = 0.0
    for idx in np.ndindex(*([k] * h.n_vertices)):
        p = 1.0
        for i, j in h.edges:
            p *= a[idx[i], idx[j]]
        total += p
    return total / k ** h.n_vertices


def test_entropy_examples(frozen):
    assert entropy_value(StepKernel.constant(0.3, 4)) == pytest.approx(frozen["h_0.3"], rel=1e-14)
    assert entropy_value(StepKernel.constant(0.5, 3)) == pytest.approx(frozen["h_0.5"], rel=1e-14)
    phi = entropy_derivative(StepKernel.constant(0.3, 5))
    assert np.allclose(phi.values, frozen["logit_0.3"], rtol=1e-14)
    with pytest.raises(DomainError):
        entropy_value(StepKernel.constant(0.0, 2))


def test_hom_density_examples(rng):
    c = StepKernel.constant(0.4, 3)
    for h in MOTIFS:
        assert hom_density(h, c) == pytest.approx(0.4 ** h.m, rel=1e-14)
    assert hom_density(SimpleGraph.empty(3), c) == 1.0
    for _ in range(5):
        a = random_kernel(4, rng, -1, 1).values
        for h in MOTIFS[:5]:
            assert hom_density(h, a) == pytest.approx(brute_density(h, a), rel=1e-12, abs=1e-15)


def test_hom_derivative_closed_forms(rng):
    a = random_kernel(6, rng).values
    assert np.allclose(hom_derivative(SimpleGraph.edge(), a).values, 1.0)
    assert np.allclose(hom_derivative(SimpleGraph.triangle(), a).values, 3 * a @ a / 6, rtol=1e-13)
    deg = a.mean(axis=1)
    want = deg[:, None] + deg[None, :]
    assert np.allclose(hom_derivative(SimpleGraph.path(3), a).values, want, rtol=1e-13)


def test_density_is_blow_up_invariant(rng):
    w = random_kernel(3, rng)
    for h in MOTIFS:
        assert hom_density(h, blow_up(w, 3)) == pytest.approx(hom_density(h, w), rel=1e-12)


def test_motif_cap():
    with pytest.raises(ComplexityError):
        hom_density(SimpleGraph(7, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 6)]),
                    StepKernel.constant(0.5, 2))
    assert hom_density(SimpleGraph.path(9), StepKernel.constant(0.5, 2)) == pytest.approx(0.5 ** 8)


def test_evaluate_checks_box():
    spec = FunctionalSpec.hom(SimpleGraph.triangle(), box=(0.0, 1.0))
    with pytest.raises(DomainError) as info:
        evaluate(spec, StepKernel([[0.5, -0.2], [-0.2, 0.5]]))
    assert info.value.index == (0, 1)


def test_spec_validation():
    with pytest.raises(ConfigError):
        FunctionalSpec.entropy(box=(0.0, 1.0))
    with pytest.raises(ConfigError):
        FunctionalSpec((Term(float("nan"), Entropy()),), (0.1, 0.9))
    with pytest.raises(ConfigError):
        Interaction(SimpleGraph.edge(), SimpleGraph.edge(), SimpleGraph.path(3))
    s = FunctionalSpec.entropy() + FunctionalSpec.hom(SimpleGraph.triangle(), 0.2)
    assert len(s.terms) == 2 and s.box == (1e-9, 1 - 1e-9)


def test_linear_combination_derivative(rng):
    a = random_kernel(5, rng, 0.1, 0.9).values
    spec = FunctionalSpec.entropy(2.0) + FunctionalSpec.hom(SimpleGraph.triangle(), -0.5)
    want = 2 * entropy_derivative(a).values - 0.5 * hom_derivative(SimpleGraph.triangle(), a).values
    assert np.allclose(derivative(spec, a).values, want, rtol=1e-14)
    assert evaluate(spec, a) == pytest.approx(2 * entropy_value(a) - 0.5 * hom_density(SimpleGraph.triangle(), a))


def test_interaction_examples(rng):
    tri = SimpleGraph.triangle()
    h1 = SimpleGraph(3, [(0, 1), (1, 2)])
    h2 = SimpleGraph(3, [(0, 2)])
    inter = Interaction(h1, h2, tri)
    assert not inter.vertex_disjoint
    # constant kernels give (m1 + m2 - 2m) log p
    assert interaction_value(inter, StepKernel.constant(0.3, 4)) == pytest.approx(-3 * math.log(0.3), rel=1e-13)
    for _ in range(20):
        assert interaction_value(inter, random_kernel(5, rng, 0.05, 0.95)) >= -1e-12


def test_boundary_mask_rules():
    w = StepKernel([[0.0, 1.0], [1.0, 0.5]], box=(0.0, 1.0))
    phi = np.array([[1.0, 1.0], [1.0, 1.0]])
    m = boundary_mask(w, phi).active
    assert m.tolist() == [[False, True], [True, True]]
    m = boundary_mask(w, -phi).active
    assert m.tolist() == [[True, False], [False, True]]
    m = boundary_mask(w, np.zeros((2, 2))).active
    assert m.tolist() == [[False, False], [False, True]]


def test_local_slope():
    spec = FunctionalSpec.entropy()
    assert local_slope(spec, StepKernel.constant(0.5, 4)) == 0.0
    w = StepKernel.constant(0.3, 4)
    assert local_slope(spec, w) == pytest.approx(abs(math.log(0.3 / 0.7)), rel=1e-14)
    spec = FunctionalSpec.hom(SimpleGraph.edge(), box=(0.0, 1.0))
    assert local_slope(spec, StepKernel.constant(1.0, 3)) == pytest.approx(1.0)
    assert local_slope(spec, StepKernel.constant(0.0, 3)) == 0.0


def test_semiconvexity_constants():
    tri = SimpleGraph.triangle()
    assert semiconvexity_constant(FunctionalSpec.entropy()) == 4.0
    assert semiconvexity_constant(FunctionalSpec.hom(tri)) == -18.0
    mix = FunctionalSpec.entropy() + FunctionalSpec.hom(tri, 0.2)
    assert semiconvexity_constant(mix) == pytest.approx(0.4)
    assert semiconvexity(FunctionalSpec.hom(tri)).coarse == -18.0
    assert semiconvexity(FunctionalSpec.hom(SimpleGraph.cycle(4))).coarse == -72.0
    neg = FunctionalSpec.entropy(-1.0, box=(0.1, 0.9))
    assert semiconvexity_constant(neg) == pytest.approx(-1 / 0.09)
    inter = Interaction(SimpleGraph(3, [(0, 1), (1, 2)]), SimpleGraph(3, [(0, 2)]), tri)
    s = semiconvexity(FunctionalSpec((Term(1.0, inter),), (0.05, 0.95)))
    assert s.value is None and s.unknown
    inter = Interaction(inter.h1, inter.h2, tri, lam=-2.0)
    assert semiconvexity_constant(FunctionalSpec((Term(1.0, inter),), (0.05, 0.95))) == -2.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 10**6))
def test_values_invariant_under_relabeling(k, seed):
    r = np.random.default_rng(seed)
    w = random_kernel(k, r, 0.05, 0.95)
    p = Permutation.random(k, r)
    wp = permute(w, p)
    spec = FunctionalSpec.entropy() + FunctionalSpec.hom(SimpleGraph.cycle(4), 0.3)
    assert evaluate(spec, wp) == pytest.approx(evaluate(spec, w), rel=1e-12, abs=1e-15)
    assert np.allclose(derivative(spec, wp).values, permute_matrix(derivative(spec, w).values, p),
                       rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6))
def test_hom_derivative_matches_difference_quotient(k, seed):
    r = np.random.default_rng(seed)
    a = random_kernel(k, r, -0.9, 0.9).values
    d = r.uniform(-1, 1, (k, k))
    d = d + d.T
    h = 1e-6
    for g in MOTIFS[:5]:
        fd = (hom_density(g, a + h * d) - hom_density(g, a - h * d)) / (2 * h)
        an = float(np.sum(hom_derivative(g, a).values * d)) / k ** 2
        assert fd == pytest.approx(an, rel=1e-5, abs=1e-9)
