import numpy as np
import pytest

from graphonflow.errors import ConfigError
from graphonflow.functionals import FunctionalSpec, boundary_mask, derivative, hom_density
from graphonflow.kernel import Permutation, SimpleGraph, StepKernel, permute, permute_matrix, random_kernel
from graphonflow.sampling import (estimate_velocity, exact_velocity, latent_blocks, mc_hom_density,
                                  sample_graph)


def test_latent_blocks_edges():
    u = np.array([0.0, 0.2499, 0.25, 0.999999, 1.0])
    assert latent_blocks(u, 4).tolist() == [0, 0, 1, 3, 3]


def test_sample_graph_constant_and_deterministic(rng):
    g = sample_graph(StepKernel.constant(0.4, 3), 10, seed=5)
    assert np.all(g.weights == 0.4) and g.k == 10
    w = random_kernel(5, rng)
    a, b = sample_graph(w, 30, seed=9), sample_graph(w, 30, seed=9)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.latents, b.latents)
    assert np.array_equal(a.weights, w.values[np.ix_(a.blocks, a.blocks)])
    with pytest.raises(ConfigError):
        sample_graph(w, 0)


def test_block_occupancy():
    k, n = 4, 4000
    g = sample_graph(StepKernel.constant(0.5, k), n, seed=3)
    counts = np.bincount(g.blocks, minlength=k)
    sd = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) <= 4 * sd)


def test_mc_density_examples(rng):
    w = random_kernel(4, rng)
    assert mc_hom_density(SimpleGraph.empty(3), w, 100) == (1.0, 0.0)
    mean, se = mc_hom_density(SimpleGraph.triangle(), StepKernel.constant(0.3, 3), 1000)
    assert mean == 0.3 * 0.3 * 0.3 and se == 0.0
    with pytest.raises(ConfigError):
        mc_hom_density(SimpleGraph.edge(), w, 50)


def test_mc_density_deterministic_and_close(rng):
    w = random_kernel(4, rng)
    h = SimpleGraph.path(3)
    a = mc_hom_density(h, w, 50_000, seed=2)
    assert a == mc_hom_density(h, w, 50_000, seed=2)
    assert abs(a[0] - hom_density(h, w)) <= 5 * a[1]


def test_velocity_matches_enumeration(rng):
    w = random_kernel(3, rng, 0.1, 0.9)
    spec = FunctionalSpec.entropy()
    phi = derivative(spec, w)
    masked = np.where(boundary_mask(w, phi, spec.box).active, phi.values, 0.0)
    exact = exact_velocity(w, masked, 3)
    assert sum(p for _, p in exact.values()) == pytest.approx(1.0)
    est = estimate_velocity(w, masked, 3, 60_000, seed=4)
    for key, (vel, prob) in exact.items():
        got = est.get(key)
        assert got is not None
        assert np.all(np.diag(got) == 0)
        se = est.stderr[key]
        ok = np.abs(got - vel) <= 4 * se + 1e-12
        assert ok.all()
        assert est.sample_counts[key] / 60_000 == pytest.approx(prob, abs=0.02)


def test_velocity_martingale_consistency(rng):
    # the k = 2 velocity equals the k = 3 velocity averaged over patterns with the same first entry
    w = random_kernel(3, rng, 0.1, 0.9)
    phi = derivative(FunctionalSpec.entropy(), w).values
    v2 = exact_velocity(w, phi, 2)
    v3 = exact_velocity(w, phi, 3)
    for key, (vel, prob) in v2.items():
        num, den = 0.0, 0.0
        for key3, (vel3, p3) in v3.items():
            if key3[0] == key[0]:
                num += p3 * vel3[0, 1]
                den += p3
        assert den == pytest.approx(prob)
        assert num / den == pytest.approx(vel[0, 1], rel=1e-12)


def test_velocity_grouping_tolerance(rng):
    w = StepKernel([[0.3, 0.3 + 1e-9], [0.3 + 1e-9, 0.3]], box=(0, 1))
    phi = np.ones((2, 2))
    assert len(estimate_velocity(w, phi, 2, 1000).entries) == 2
    est = estimate_velocity(w, phi, 2, 1000, tol=1e-6)
    assert len(est.entries) == 1
    assert np.allclose(next(iter(est.entries.values())), [[0, -1], [-1, 0]])


def test_velocity_relabeling_invariant(rng):
    w = random_kernel(3, rng, 0.1, 0.9)
    phi = derivative(FunctionalSpec.entropy(), w).values
    p = Permutation.random(3, rng)
    a = exact_velocity(w, phi, 2)
    b = exact_velocity(permute(w, p), permute_matrix(phi, p), 2)
    assert a.keys() == b.keys()
    for key in a:
        assert np.allclose(a[key][0], b[key][0]) and a[key][1] == pytest.approx(b[key][1])


def test_velocity_errors(rng):
    w = random_kernel(3, rng)
    with pytest.raises(ConfigError):
        estimate_velocity(w, np.zeros((3, 3)), 1, 100)
    with pytest.raises(ConfigError):
        estimate_velocity(w, np.zeros((2, 2)), 2, 100)
