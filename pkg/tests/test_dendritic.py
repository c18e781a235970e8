import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treegrowth import dendritic, kernels
from treegrowth._pykernels import dendritic_from_tree as py_from_tree
from treegrowth._pykernels import dendritic_to_tree as py_to_tree
from treegrowth._pykernels import dendritic_violations as py_violations
from treegrowth.dendritic import (
    AxiomError,
    DendriticSystem,
    LeafIndex,
    check_axioms,
    check_ultrametric,
    coalescent_tree,
    from_labelled_tree,
    inverse_permutation,
    permute,
    restrict,
    to_labelled_tree,
    tree_clusters,
    ultrametric_estimate,
    ultrametric_exact,
    ultrametric_matrix,
)
from treegrowth.ip_tree import BoundaryMeasure, LazyWord, TreePoint, load_ip, parse_ip_config
from treegrowth.plane_tree import PlaneTree, leaf_labelled, star
from treegrowth.sampler import grow_chain, sample_tree

from test_plane_tree import random_class_tree

CHERRY = PlaneTree.from_words([(), (0,), (0, 0), (0, 1)])
CATERPILLAR = PlaneTree.from_words([(), (0,), (0, 0), (0, 1), (0, 1, 0), (0, 1, 1)])


def random_labelled(n, rnd):
    labels = list(range(1, n + 1))
    rnd.shuffle(labels)
    return leaf_labelled(random_class_tree(n, rnd), labels)


labelled_strategy = st.builds(
    lambda n, s: random_labelled(n, random.Random(s)), st.integers(1, 12), st.integers(0, 2**32))


def word_oracle(lt):
    """Classes, order and leaf planarity straight from Ulam-Harris words."""
    words = lt.tree.words()
    leaf = {l: words[v] for v, s in lt.labels.items() for l in s}
    n = len(leaf)

    def lcp(a, b):
        k = 0
        while k < min(len(a), len(b)) and a[k] == b[k]:
            k += 1
        return a[:k]

    cls = {(i, j): lcp(leaf[i], leaf[j]) for i in range(1, n + 1) for j in range(1, n + 1)}
    p = {(i, j): 0 if i == j else (1 if leaf[i] < leaf[j] else -1)
         for i in range(1, n + 1) for j in range(1, n + 1)}
    return cls, p


# from trees --------------------------------------------------------------------

def test_cherry_system():
    d = from_labelled_tree(leaf_labelled(CHERRY, [1, 2]))
    assert d.n_classes == 3
    assert d.p(1, 2) == 1 and d.p(2, 1) == -1
    assert d.precedes((1, 2), (1, 1)) and d.precedes((1, 2), (2, 2))
    assert not d.precedes((1, 1), (2, 2))


def test_star_has_one_branch_class():
    d = from_labelled_tree(leaf_labelled(star(3), [1, 2, 3]))
    assert d.equivalent((1, 2), (1, 3)) and d.equivalent((1, 3), (2, 3))
    assert d.n_classes == 4


def test_caterpillar_classes():
    d = from_labelled_tree(leaf_labelled(CATERPILLAR, [1, 2, 3]))
    assert d.equivalent((1, 2), (1, 3))
    assert d.precedes((1, 2), (2, 3)) and not d.precedes((2, 3), (1, 2))


@settings(max_examples=200, deadline=None)
@given(labelled_strategy)
def test_system_matches_word_oracle(lt):
    d = from_labelled_tree(lt)
    cls, p = word_oracle(lt)
    pairs = list(cls)
    for a in pairs:
        assert d.p(*a) == p[a]
        for b in pairs:
            assert d.equivalent(a, b) == (cls[a] == cls[b])
            assert d.precedes(a, b) == (cls[b][:len(cls[a])] == cls[a])
    assert check_axioms(d) == []


def test_from_tree_rejects_bad_labels():
    with pytest.raises(ValueError):
        from_labelled_tree(leaf_labelled(CHERRY, [1, 3]))
    from treegrowth.plane_tree import LabelledPlaneTree
    with pytest.raises(ValueError):
        from_labelled_tree(LabelledPlaneTree(CHERRY, {2: {1}}))


# back to trees ----------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(labelled_strategy)
def test_round_trip(lt):
    d = from_labelled_tree(lt)
    assert to_labelled_tree(d) == lt
    assert from_labelled_tree(to_labelled_tree(d)) == d


def test_single_label_system():
    d = from_labelled_tree(leaf_labelled(PlaneTree([1, 0]), [1]))
    assert to_labelled_tree(d).tree == PlaneTree([1, 0])


def test_intransitive_planarity_is_rejected_as_p3():
    d = from_labelled_tree(leaf_labelled(star(3), [1, 2, 3]))
    p = d.p_leaf.copy()
    p[0, 2], p[2, 0] = -1, 1
    bad = DendriticSystem(d.pair_class, d.order, p)
    problems = check_axioms(bad)
    assert problems and problems[0].startswith("P3")
    with pytest.raises(AxiomError, match="^P3"):
        to_labelled_tree(bad)


def test_other_violations_are_named():
    d = from_labelled_tree(leaf_labelled(CATERPILLAR, [1, 2, 3]))
    order = d.order.copy()
    order[:, :] = np.eye(d.n_classes, dtype=bool)
    assert any(m.startswith("C2") for m in check_axioms(DendriticSystem(d.pair_class, order, d.p_leaf)))
    pc = d.pair_class.copy()
    pc[0, 1] = pc[0, 0]
    assert any(m.startswith("C1") for m in check_axioms(DendriticSystem(pc, d.order, d.p_leaf)))
    p = d.p_leaf.copy()
    p[0, 1] = 0
    assert any(m.startswith("P") for m in check_axioms(DendriticSystem(d.pair_class, d.order, p)))


def test_json_round_trip():
    d = from_labelled_tree(random_labelled(9, random.Random(3)))
    assert DendriticSystem.from_json(d.to_json()) == d


# the compiled and pure kernels agree ---------------------------------------------

def perturb(d, rnd):
    pc, order, p = d.pair_class.copy(), d.order.copy(), d.p_leaf.copy()
    what = rnd.randrange(3)
    n, k = d.n, d.n_classes
    if what == 0:
        i, j = rnd.randrange(n), rnd.randrange(n)
        pc[i, j] = rnd.randrange(k)
    elif what == 1:
        a, b = rnd.randrange(k), rnd.randrange(k)
        order[a, b] = not order[a, b]
    else:
        i, j = rnd.randrange(n), rnd.randrange(n)
        p[i, j] = rnd.choice([-1, 0, 1])
    return DendriticSystem(pc, order, p)


@pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")
def test_backends_agree_on_valid_and_perturbed_systems():
    c = kernels.compiled_backend
    rnd = random.Random(12)
    for _ in range(400):
        lt = random_labelled(rnd.randint(1, 9), rnd)
        deg = list(lt.tree.degrees)
        leaf_label = [0] * len(deg)
        for v, s in lt.labels.items():
            (leaf_label[v],) = s
        a, b = c.dendritic_from_tree(deg, leaf_label), py_from_tree(deg, leaf_label)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
        d = perturb(from_labelled_tree(lt), rnd) if rnd.random() < 0.7 else from_labelled_tree(lt)
        args = (d.pair_class, d.order, d.p_leaf)
        assert list(c.dendritic_violations(*args)) == list(py_violations(*args))
        assert c.dendritic_to_tree(*args) == py_to_tree(*args)


# permutation and restriction ---------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(labelled_strategy, st.randoms(use_true_random=False))
def test_permutation_action(lt, rnd):
    d = from_labelled_tree(lt)
    sigma = list(range(1, d.n + 1))
    rnd.shuffle(sigma)
    assert permute(d, list(range(1, d.n + 1))) == d
    assert permute(permute(d, sigma), inverse_permutation(sigma)) == d
    moved = permute(d, sigma)
    assert check_axioms(moved) == []
    for i, j in itertools.product(range(1, d.n + 1), repeat=2):
        assert moved.p(i, j) == d.p(sigma[i - 1], sigma[j - 1])


def test_permutation_must_be_bijective():
    d = from_labelled_tree(leaf_labelled(star(3), [1, 2, 3]))
    with pytest.raises(ValueError):
        permute(d, [1, 1, 2])


@pytest.mark.parametrize("name", ["interval", "ell-ary", "atom-line"])
def test_restriction_of_sampled_system(name):
    chain = grow_chain(load_ip(name), 10, 31)
    d10 = from_labelled_tree(chain.labelled[-1])
    for m in range(1, 11):
        assert restrict(d10, m) == from_labelled_tree(chain.labelled[m - 1])


def test_restriction_range():
    d = from_labelled_tree(leaf_labelled(star(3), [1, 2, 3]))
    with pytest.raises(ValueError):
        restrict(d, 0)
    with pytest.raises(ValueError):
        restrict(d, 4)


# the descendant ultrametric ----------------------------------------------------------

def test_estimate_conventions():
    lt = sample_tree(parse_ip_config("root atom=1\n"), 30, 2)[0]
    assert ultrametric_estimate(lt, 4, 4) == 0.0
    assert ultrametric_estimate([lt], 3, 17) == 1.0
    with pytest.raises(IndexError):
        ultrametric_estimate(lt, 3, 31)


def test_estimate_counts_descendants():
    lt = leaf_labelled(CATERPILLAR, [1, 2, 3])
    idx = LeafIndex(lt)
    assert idx.estimate(2, 3) == 0.0
    assert idx.estimate(1, 2) == 1.0


def test_exact_at_an_atom():
    t = parse_ip_config("""\
root
vertex a parent=root length=0.4 profile=lebesgue atom=0.2 beta=1/2 lambda=1/2
vertex top parent=a length=0.6 profile=0:0,0.2:0,0.6:0.4 lambda=1/2
""")
    a = TreePoint(t.vertex_id("a"))
    assert ultrametric_exact(t, a, a) == pytest.approx(0.6)
    assert ultrametric_exact(t, a, a, same_label=True) == 0.0


def test_exact_on_the_interval_is_fringe_of_lower_point():
    t = load_ip("interval")
    x, y = t.point("top", 0.3), t.point("top", 0.8)
    # (i, j) sits at the lower point: every later label above 0.3 descends from it
    assert ultrametric_exact(t, x, y) == pytest.approx(0.7)


def test_exact_on_binary_words():
    t = load_ip("ell-ary")
    m = BoundaryMeasure.uniform(2)
    x = TreePoint(0, word=LazyWord(m, 1, prefix=(0, 0)))
    y = TreePoint(0, word=LazyWord(m, 2, prefix=(0, 1)))
    assert ultrametric_exact(t, x, y) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["interval", "ell-ary", "atom-line"])
def test_exact_matrices_are_ultrametric_and_give_the_tree(name):
    for seed in range(15):
        lt, state = sample_tree(load_ip(name), 12, seed)
        t = load_ip(name)
        t.separate(state.points)
        d = ultrametric_matrix(t, state.points)
        assert check_ultrametric(d) == []
        ct = coalescent_tree(d)
        assert ct.label_clusters() == tree_clusters(lt)
        assert np.allclose(ct.leaf_distances(), d)


def test_coalescent_two_points():
    ct = coalescent_tree([[0, 0.6], [0.6, 0]])
    assert ct.merge_height(0, 1) == 0.6
    assert ct.distance(0, 1) == pytest.approx(0.6)


def test_coalescent_three_points():
    d = [[0, 0.4, 0.8], [0.4, 0, 0.8], [0.8, 0.8, 0]]
    ct = coalescent_tree(d)
    assert ct.label_clusters() == {frozenset({1}), frozenset({2}), frozenset({3}),
                                   frozenset({1, 2}), frozenset({1, 2, 3})}
    assert np.allclose(ct.leaf_distances(), d)
    assert ct.leaf_space().weights.tolist() == pytest.approx([1 / 3] * 3)


def test_coalescent_rejects_violations():
    with pytest.raises(ValueError):
        coalescent_tree([[0, 0.2, 0.9], [0.2, 0, 0.3], [0.9, 0.3, 0]])
    assert check_ultrametric(np.array([[0, 0.0], [0.0, 0]]))
