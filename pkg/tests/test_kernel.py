import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonflow.errors import ConfigError, SizeLimitError
from graphonflow.kernel import (Permutation, SimpleGraph, StepKernel, blow_up, common_size, disjoint_union,
                                edge_deleted, permute, random_kernel, resample, to_common_size)
from graphonflow.metrics import delta2_bruteforce


def kernels(max_k=8):
    @st.composite
    def build(draw):
        k = draw(st.integers(1, max_k))
        seed = draw(st.integers(0, 2**32 - 1))
        return random_kernel(k, np.random.default_rng(seed), -1.0, 1.0)
    return build()


def test_constructor_validates_symmetry_and_box():
    with pytest.raises(ConfigError, match="symmetric"):
        StepKernel(np.array([[0.0, 0.1], [0.2, 0.0]]))
    with pytest.raises(ConfigError, match="outside box"):
        StepKernel(np.array([[0.5, 1.5], [1.5, 0.5]]))
    with pytest.raises(ConfigError):
        StepKernel(np.zeros((2, 2)), (0.5, 0.2))
    with pytest.raises(ConfigError):
        StepKernel(np.array([[np.nan]]))


def test_values_are_read_only():
    w = StepKernel.constant(0.2, 3)
    with pytest.raises(ValueError):
        w.values[0, 0] = 1.0


def test_blow_up_examples():
    assert np.array_equal(blow_up(StepKernel.constant(0.4, 3), 3).values, np.full((9, 9), 0.4))
    assert np.array_equal(blow_up(StepKernel(np.array([[0.7]])), 2).values, np.full((2, 2), 0.7))
    with pytest.raises(SizeLimitError):
        blow_up(StepKernel.constant(0.1, 10), 300)
    with pytest.raises(ConfigError):
        blow_up(StepKernel.constant(0.1, 2), 0)


def test_blow_up_is_same_graphon(rng):
    w = random_kernel(3, rng)
    al = delta2_bruteforce(blow_up(w, 2), w)
    assert al.achieved_value == 0.0


@given(kernels(5), st.integers(1, 3), st.integers(1, 3))
def test_blow_up_composes(w, r1, r2):
    assert np.array_equal(blow_up(w, r1 * r2).values, blow_up(blow_up(w, r1), r2).values)


def test_permute_examples(rng):
    w = random_kernel(6, rng)
    p = Permutation.random(6, rng)
    assert np.array_equal(permute(w, Permutation.identity(6)).values, w.values)
    c = StepKernel.constant(0.3, 6)
    assert np.array_equal(permute(c, p).values, c.values)
    assert np.array_equal(permute(permute(w, p), p.inverse()).values, w.values)
    with pytest.raises(ConfigError):
        permute(w, Permutation.identity(5))


@settings(max_examples=50)
@given(kernels(9), st.data())
def test_permute_is_group_action(w, data):
    seed = data.draw(st.integers(0, 10**6))
    r = np.random.default_rng(seed)
    p, q = Permutation.random(w.k, r), Permutation.random(w.k, r)
    lhs = permute(permute(w, p), q)
    assert np.array_equal(lhs.values, permute(w, q.compose(p)).values)
    assert np.array_equal(lhs.values, lhs.values.T)


def test_permutation_validation():
    with pytest.raises(ConfigError):
        Permutation([0, 0, 1])
    p = Permutation([2, 0, 1])
    assert p.compose(p.inverse()) == Permutation.identity(3)


def test_resample_and_common_size(rng):
    w = random_kernel(6, rng)
    coarse = resample(w, 3)
    assert np.allclose(coarse.values, w.values.reshape(3, 2, 3, 2).mean(axis=(1, 3)))
    assert np.isclose(resample(w, 4).values.mean(), w.values.mean())
    assert common_size(4, 6) == 12
    u, v, exact = to_common_size(w, random_kernel(4, rng))
    assert (u.k, v.k, exact) == (12, 12, True)
    u, v, exact = to_common_size(w, random_kernel(7, rng), max_size=20, fallback=5)
    assert (u.k, v.k, exact) == (5, 5, False)


def test_from_function_block_averages():
    w = StepKernel.from_function(lambda x, y: 0.25 + 0.5 * x * y, 4, (0.0, 1.0))
    mids = (np.arange(4) + 0.5) / 4
    # product of block means is exact for the bilinear term
    assert np.allclose(w.values, 0.25 + 0.5 * np.outer(mids, mids), atol=1e-15)


def test_simple_graph_validation():
    with pytest.raises(ConfigError):
        SimpleGraph(2, ((0, 0),))
    with pytest.raises(ConfigError):
        SimpleGraph(2, ((0, 1), (1, 0)))
    with pytest.raises(ConfigError):
        SimpleGraph(2, ((0, 2),))
    assert SimpleGraph.star(4).m == 3
    assert SimpleGraph.cycle(4).is_connected()
    assert not SimpleGraph.empty(2).is_connected()


def test_edge_deleted_examples(rng):
    p = edge_deleted(SimpleGraph.triangle(), (0, 1))
    assert p.m == 2 and p.n_vertices == 3 and p.is_connected()
    e = edge_deleted(SimpleGraph.edge(), (1, 0))
    assert e.m == 0 and e.n_vertices == 2
    with pytest.raises(ConfigError):
        edge_deleted(SimpleGraph.path(3), (0, 2))
    for _ in range(20):
        h = SimpleGraph.complete(int(rng.integers(2, 6)))
        e = h.edges[int(rng.integers(h.m))]
        assert edge_deleted(h, e).m == h.m - 1


def test_disjoint_union():
    g = disjoint_union(SimpleGraph.edge(), SimpleGraph.triangle())
    assert g.n_vertices == 5 and g.m == 4 and not g.is_connected()
