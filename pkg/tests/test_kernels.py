import numpy as np
import pytest

from treegrowth import _pykernels as py
from treegrowth import kernels
from treegrowth.plane_tree import PlaneTree, in_class

compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")


def test_counter_uniform_range_and_determinism():
    us = [py.counter_uniform(7, s, d) for s in range(50) for d in range(4)]
    assert all(0.0 <= u < 1.0 for u in us)
    assert us == [py.counter_uniform(7, s, d) for s in range(50) for d in range(4)]
    assert py.counter_uniform(7, 0, 0) != py.counter_uniform(8, 0, 0)


def test_python_growth_exports_class_members():
    snaps = py.marchal_grow(40, 1.4, 3, [1, 10, 40])
    trees = [PlaneTree(d) for d in snaps]
    assert [t.n_leaves() for t in trees] == [1, 10, 40]
    assert all(in_class(t) for t in trees)


def test_mean_leaf_depth_of_a_cherry():
    # two leaves at graph distance 2 from the root
    assert py.mean_leaf_depth(np.array([1, 2, 0, 0])) == 2.0


@compiled
def test_backends_agree_on_uniforms():
    c = kernels.compiled_backend
    for seed in (0, 1, 2**64 - 1):
        for s in range(20):
            for d in range(4):
                assert c.counter_uniform(seed, s, d) == py.counter_uniform(seed, s, d)


@compiled
@pytest.mark.parametrize("alpha", [2.0, 1.5, 1.1])
def test_backends_agree_on_growth(alpha):
    c = kernels.compiled_backend
    for seed in range(5):
        a = c.marchal_grow(60, alpha, seed, [2, 30, 60])
        b = py.marchal_grow(60, alpha, seed, [2, 30, 60])
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert c.mean_leaf_depth(a[-1]) == py.mean_leaf_depth(b[-1])
