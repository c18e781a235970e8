from collections import Counter
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treegrowth import growth
from treegrowth.ip_tree import BoundaryMeasure, SeparationBudgetError, parse_ip_config
from treegrowth.plane_tree import (
    PlaneTree,
    backward_step,
    enumerate_class,
    in_class,
    single_edge,
    star,
)
from treegrowth.rng import generator

CHERRY = PlaneTree.from_words([(), (0,), (0, 0), (0, 1)])


# independent oracle on Ulam-Harris word sets -----------------------------------

def _shift(words, at, by):
    """Shift the subtree roots at position >= at under prefix ``at[:-1]``."""
    k = len(at) - 1
    out = set()
    for w in words:
        if len(w) > k and w[:k] == at[:k] and w[k] >= at[k]:
            w = w[:k] + (w[k] + by,) + w[k + 1:]
        out.add(w)
    return out


def word_moves(words, alpha):
    """(weight, new word set) for every Marchal move, written directly on words."""
    words = set(words)
    moves = []
    for v in sorted(words):
        if not v:
            continue
        kids = sum(1 for w in words if len(w) == len(v) + 1 and w[:-1] == v)
        # split the edge above v: v's subtree moves one level down
        for left in (True, False):
            moved = set()
            for w in words:
                if w[:len(v)] == v:
                    moved.add(v + ((1,) if left else (0,)) + w[len(v):])
                else:
                    moved.add(w)
            moved.add(v)
            moved.add(v + ((0,) if left else (1,)))
            moves.append((Fraction(alpha) - 1, left, moved))
        if kids >= 2:
            w_bp = kids + 1 - 1 - Fraction(alpha)
            if w_bp > 0:
                for g in range(kids + 1):
                    shifted = _shift(words, v + (g,), 1)
                    shifted.add(v + (g,))
                    moves.append((w_bp / (kids + 1), None, shifted))
    out = []
    for w, side, ws in moves:
        out.append((w / 2 if side is not None else w, PlaneTree.from_words(ws)))
    total = sum(w for w, _ in out)
    return [(w / total, t) for w, t in out]


def word_law(n, alpha):
    law = {single_edge(): Fraction(1)}
    for _ in range(n - 1):
        nxt = Counter()
        for t, p in law.items():
            for q, s in word_moves(t.words(), alpha):
                nxt[s] += p * q
        law = dict(nxt)
    return law


def catalan(k):
    return comb(2 * k, k) // (k + 1)


# Marchal weights ---------------------------------------------------------------

def test_weights_binary_branchpoints_vanish_at_alpha_two():
    w = growth.marchal_weights(CHERRY, 2.0)
    assert w.branchpoints == {1: 0.0}
    assert set(w.edges.values()) == {1.0}


def test_weights_single_edge():
    w = growth.marchal_weights(single_edge(), 2.0)
    assert w.total == 1.0


def test_weights_three_star_at_alpha_one_and_half():
    # four edges of weight 1/2; the branchpoint has degree 4 and weight 4 - 1 - 3/2
    w = growth.marchal_weights(star(3), 1.5)
    assert w.total == pytest.approx(3.5)
    assert w.branchpoints[1] / w.total == pytest.approx(3 / 7)
    outcomes = growth.marchal_outcomes(star(3), Fraction(3, 2))
    assert sum(p for p, t in outcomes if t == star(4)) == Fraction(3, 7)


@pytest.mark.parametrize("alpha", [2.0, 1.5, 1.2])
def test_total_weight_is_n_alpha_minus_one(alpha):
    for n in range(1, 7):
        for t in enumerate_class(n):
            w = growth.marchal_weights(t, alpha)
            assert w.total == pytest.approx(n * alpha - 1)
            assert all(x >= 0 for x in w.branchpoints.values())


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.5, 3])
def test_alpha_range(alpha):
    with pytest.raises(ValueError):
        growth.marchal_weights(CHERRY, alpha)
    with pytest.raises(ValueError):
        growth.marchal_chain(3, alpha, 0)


# Marchal step and law ----------------------------------------------------------

def test_first_step_left_or_right():
    rng = generator(3)
    seen = {growth.marchal_step(single_edge(), 2.0, rng) for _ in range(50)}
    assert seen == {CHERRY}
    assert growth.split_edge(single_edge(), 1, True) == CHERRY


def test_step_from_cherry_at_alpha_two():
    outcomes = growth.marchal_outcomes(CHERRY, 2)
    assert len(outcomes) == 6
    assert all(p == Fraction(1, 6) for p, _ in outcomes)


@pytest.mark.parametrize("alpha", [2, Fraction(3, 2), Fraction(6, 5)])
def test_law_matches_word_oracle(alpha):
    for n in range(1, 6):
        assert growth.marchal_law(n, alpha) == word_law(n, alpha)


def test_alpha_two_law_is_uniform_on_binary_trees():
    for n in range(1, 7):
        law = growth.marchal_law(n, 2)
        assert len(law) == catalan(n - 1)
        assert set(law.values()) == {Fraction(1, catalan(n - 1))}


@pytest.mark.parametrize("alpha", [2, Fraction(3, 2), Fraction(7, 5)])
def test_backward_dynamics_are_uniform_exactly(alpha):
    for n in range(2, 6):
        pushed = Counter()
        for t, p in growth.marchal_law(n, alpha).items():
            for i in range(n):
                pushed[backward_step(t, i)] += p / n
        assert dict(pushed) == growth.marchal_law(n - 1, alpha)


def test_chain_is_deterministic_and_in_class():
    a = growth.marchal_chain(30, 1.5, 9)
    b = growth.marchal_chain(30, 1.5, 9)
    assert a == b
    assert [t.n_leaves() for t in a] == list(range(1, 31))
    assert all(in_class(t) for t in a)
    assert growth.marchal_tree(30, 1.5, 9) == a[-1]


def test_chain_steps_are_single_insertions():
    chain = growth.marchal_chain(25, 1.3, 4)
    for small, big in zip(chain, chain[1:]):
        assert small in {backward_step(big, i) for i in range(big.n_leaves())}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**63))
def test_alpha_two_stays_binary(n, seed):
    t = growth.marchal_tree(n, 2.0, seed)
    assert max(t.degrees[1:]) <= 2
    assert t.n_leaves() == n


def test_step_frequencies_match_exact_law():
    rng = generator(17)
    runs = 20000
    counts = Counter(growth.marchal_step(star(3), 1.5, rng) for _ in range(runs))
    assert counts[star(4)] / runs == pytest.approx(3 / 7, abs=0.015)


def test_depth_exponent_regression():
    ns = [2**k for k in range(5, 10)]
    depths = growth.mean_depths(ns, 2.0, 10, 1)
    assert depths.shape == (10, 5)
    assert np.all(np.diff(depths.mean(axis=0)) > 0)
    assert 0.3 < growth.depth_exponent(ns, depths) < 0.7


# radix-sort trees ----------------------------------------------------------------

def test_radix_two_words():
    assert growth.radix_tree([(0, 1, 1), (1, 0, 0)]) == CHERRY


def test_radix_three_words():
    t = growth.radix_tree([(0, 0), (0, 1), (1,)])
    assert t == PlaneTree.from_children([[1], [2, 5], [3, 4], [], [], []])


def test_radix_single_word():
    assert growth.radix_tree([(0, 1)]) == single_edge()


def test_radix_suppresses_shared_prefixes():
    assert growth.radix_tree([(1, 1, 0, 0), (1, 1, 0, 1), (1, 1, 1)]) == \
        growth.radix_tree([(0, 0), (0, 1), (1,)])


def test_radix_budget_error():
    m = BoundaryMeasure.uniform(2)
    stream = growth.WordStream(m, 0, budget=8)
    w = stream.word(0)
    with pytest.raises(SeparationBudgetError):
        growth.radix_tree([w, w], budget=8)
    with pytest.raises(ValueError):
        growth.radix_tree([(0, 1), (0, 1)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 2), min_size=6, max_size=6), min_size=1, max_size=8, unique_by=tuple),
       st.randoms(use_true_random=False))
def test_radix_unlabelled_shape_is_permutation_invariant(words, rnd):
    words = [tuple(w) for w in words]
    shuffled = list(words)
    rnd.shuffle(shuffled)
    assert growth.radix_tree(words) == growth.radix_tree(shuffled)
    assert in_class(growth.radix_tree(words), len(words))


def test_patricia_cherry():
    assert growth.patricia_chain(2, None, 2, 5)[-1] == CHERRY


def test_patricia_first_symbols_and_three_star():
    # distinct first symbols: 3!/27; the 3-star also arises after any shared run,
    # so P(3-star) = (6/27) / (1 - 3/27) = 1/4
    runs = 6000
    distinct = stars = 0
    m = BoundaryMeasure.uniform(3)
    for r in range(runs):
        words = growth.WordStream(m, r).words(3)
        distinct += len({w.symbol(0) for w in words}) == 3
        stars += growth.radix_tree(words) == star(3)
    assert distinct / runs == pytest.approx(6 / 27, abs=0.02)
    assert stars / runs == pytest.approx(1 / 4, abs=0.02)


def test_patricia_chain_is_consistent():
    chain = growth.patricia_labelled_chain(BoundaryMeasure.uniform(3), 20, 8)
    from treegrowth.plane_tree import remove_label
    for k in range(1, 20):
        assert remove_label(chain[k], k + 1) == chain[k - 1]


def test_patricia_measure_mismatch():
    with pytest.raises(ValueError):
        growth.patricia_chain(3, BoundaryMeasure.uniform(2), 4, 0)


# the line chain ------------------------------------------------------------------

def test_line_single_atom_gives_stars():
    tree = parse_ip_config("root atom=1\n")
    for n, t in enumerate(growth.line_chain(tree, 6, 2), 1):
        assert t == star(n)


def test_line_lambda_one_puts_leaves_left():
    tree = parse_ip_config("root\nvertex top parent=root length=1 profile=lebesgue lambda=1\n")
    t = growth.line_chain(tree, 12, 3)[-1]
    # every vertex on the spine has its pendant leaf first and the spine second
    kids = t.children
    v = 1
    while kids[v]:
        assert t.degrees[kids[v][0]] == 0
        v = kids[v][-1]


def test_line_two_leaves():
    tree = parse_ip_config("root\nvertex top parent=root length=1 profile=lebesgue lambda=1/2\n")
    assert growth.line_chain(tree, 2, 4)[-1] == CHERRY


def test_line_rejects_branching_trees():
    tree = parse_ip_config("root\nblock root mass=1 ell=2\n")
    with pytest.raises(ValueError):
        growth.line_chain(tree, 3, 0)
