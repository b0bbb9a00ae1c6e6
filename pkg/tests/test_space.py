import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskenv.errors import InputError, TreeSizeError
from riskenv.space import (
    MeasureChange,
    build_binomial,
    build_tree,
    cond_ess_extrema,
    cond_expect,
    leaf_probs,
    lift,
    measure_from_density,
    one_period,
    point_mass_measure,
    random_measure,
    random_tree,
    tree_from_json,
    tree_to_json,
)

from .strategies import tree_and_payoffs, trees


def test_binomial_one_period():
    tr = build_binomial(1, 1.0)
    assert tr.n_leaves == 2
    assert tr.increments[1].tolist() == [-1.0, 1.0]


def test_binomial_two_periods():
    tr = build_binomial(2, 1.0)
    assert tr.n_leaves == 4 and tr.dt == 0.5


def test_binomial_ten_periods_path_sums():
    tr = build_binomial(10, 1.0)
    bits = (np.arange(1024)[:, None] >> np.arange(9, -1, -1)[None, :]) & 1
    expect = ((2 * bits - 1) * math.sqrt(0.1)).sum(axis=1)
    np.testing.assert_allclose(tr.path_sums(), expect, atol=1e-12)
    assert abs(leaf_probs(tr, 0).sum() - 1.0) <= 1e-12


def test_binomial_size_cap():
    with pytest.raises(TreeSizeError):
        build_binomial(23, 1.0)
    with pytest.raises(InputError):
        build_binomial(0, 1.0)


def test_path_maxima():
    tr = build_binomial(2, 1.0)
    sq = math.sqrt(0.5)
    # paths dd, du, ud, uu
    np.testing.assert_allclose(tr.path_maxima(), [0.0, 0.0, sq, 2 * sq])


def test_cond_expect_one_period():
    assert cond_expect(one_period([0.5, 0.5]), [4.0, -2.0], 0)[0] == 1.0


def test_cond_ess_extrema_two_leaves():
    tr = one_period([0.5, 0.5])
    assert cond_ess_extrema(tr, [4.0, -2.0], 0, "sup")[0] == 4.0
    assert cond_ess_extrema(tr, [4.0, -2.0], 0, "inf")[0] == -2.0
    with pytest.raises(InputError):
        cond_ess_extrema(tr, [4.0, -2.0], 0, "mid")


def test_lift_examples():
    tr = build_binomial(2, 1.0)
    assert lift(tr, 3.0, 0).tolist() == [3.0] * 4
    assert lift(tr, [1.0, 2.0], 1).tolist() == [1.0, 1.0, 2.0, 2.0]
    X = np.arange(4.0)
    assert lift(tr, X, 2).tolist() == X.tolist()
    with pytest.raises(InputError):
        lift(tr, [1.0, 2.0, 3.0], 1)


def test_scalar_branching():
    tr = build_tree([2, 3])
    assert tr.n_leaves == 6
    np.testing.assert_allclose(leaf_probs(tr, 0), np.full(6, 1 / 6))


@pytest.mark.parametrize("bad", [
    {"branching": [[2]], "probs": [[0.6, 0.6]]},
    {"branching": [[2]], "probs": [[1.0, 0.0]]},
    {"branching": [[2], [1]], "probs": None},
])
def test_build_tree_rejects(bad):
    with pytest.raises(InputError):
        build_tree(bad["branching"], bad["probs"])


def test_level_range_checked():
    tr = build_binomial(2, 1.0)
    with pytest.raises(InputError):
        cond_expect(tr, np.zeros(4), 3)
    with pytest.raises(InputError):
        cond_expect(tr, np.zeros(3), 0)


@given(tree_and_payoffs())
def test_constants_are_fixed(args):
    tree, t, _ = args
    c = np.full(tree.n_leaves, 2.5)
    np.testing.assert_allclose(cond_expect(tree, c, t), 2.5, atol=1e-12)
    assert np.all(cond_ess_extrema(tree, c, t, "sup") == 2.5)
    assert np.all(cond_ess_extrema(tree, c, t, "inf") == 2.5)


@given(tree_and_payoffs(tree_strategy=trees(max_N=4)))
def test_tower_property(args):
    tree, _, X = args
    for s in range(tree.N + 1):
        inner = lift(tree, cond_expect(tree, X, s), s)
        for t in range(s + 1):
            np.testing.assert_allclose(cond_expect(tree, inner, t), cond_expect(tree, X, t), atol=1e-12)


@given(tree_and_payoffs())
def test_extrema_bracket_expectation(args):
    tree, t, X = args
    e = cond_expect(tree, X, t)
    assert np.all(cond_ess_extrema(tree, X, t, "inf") <= e + 1e-12)
    assert np.all(e <= cond_ess_extrema(tree, X, t, "sup") + 1e-12)


@given(tree_and_payoffs())
def test_lift_then_condition_is_identity(args):
    tree, t, X = args
    prof = cond_expect(tree, X, t)
    np.testing.assert_allclose(cond_expect(tree, lift(tree, prof, t), t), prof, atol=1e-12)


@given(trees(), st.integers(0, 2**32 - 1))
def test_random_measure_valid(tree, seed):
    rng = np.random.default_rng(seed)
    for eq in (True, False):
        Q = random_measure(tree, rng, equivalent=eq)
        Q.validate(tree)
        assert abs(leaf_probs(tree, 0, Q).sum() - 1.0) <= 1e-12
    assert random_measure(tree, rng).equivalent


@given(trees(), st.integers(0, 2**32 - 1))
def test_density_round_trip(tree, seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.1, 3.0, tree.n_leaves)
    Q = measure_from_density(tree, d)
    w = leaf_probs(tree, 0)
    np.testing.assert_allclose(leaf_probs(tree, 0, Q), d * w / np.sum(d * w), atol=1e-12)


def test_point_mass_measure():
    tr = build_binomial(2, 1.0)
    Q = point_mass_measure(tr, 2, 0)
    assert leaf_probs(tr, 0, Q).tolist() == [0.0, 0.0, 1.0, 0.0]
    Q1 = point_mass_measure(tr, 2, 1)
    assert leaf_probs(tr, 1, Q1).tolist() == [0.5, 0.5, 1.0, 0.0]


def test_measure_change_validation():
    tr = build_binomial(1, 1.0)
    with pytest.raises(InputError):
        MeasureChange((np.ones(1), np.array([0.7, 0.7]))).validate(tr)
    with pytest.raises(InputError):
        measure_from_density(tr, [0.0, 0.0])


@given(trees(max_N=3))
def test_json_round_trip(tree):
    back = tree_from_json(tree_to_json(tree))
    assert back.N == tree.N and back.kind == tree.kind
    for a, b in zip(back.parents, tree.parents):
        assert np.array_equal(a, b)
    for a, b in zip(back.probs, tree.probs):
        assert np.array_equal(a, b)


def test_json_binomial_round_trip():
    tr = build_binomial(3, 0.3)
    back = tree_from_json(tree_to_json(tr))
    assert back.kind == "binomial"
    np.testing.assert_array_equal(back.path_sums(), tr.path_sums())


def test_json_rejects_non_contiguous_children():
    doc = tree_to_json(build_tree([2, 1]))
    doc["nodes"][0]["children"] = [1, 0]
    with pytest.raises(InputError, match="contiguous"):
        tree_from_json(doc)


def test_random_tree_probability_floor():
    tr = random_tree(np.random.default_rng(0), 4, max_children=3, floor=0.05)
    for p in tr.probs[1:]:
        assert np.all(p > 0)
