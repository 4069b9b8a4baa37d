import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaforest.errors import ContractError, ShapeError
from gaforest.forest import (SoftForest, SoftTree, forest_forward, forest_param_count,
                             forest_probability, hard_forest_fit, hard_forest_predict, leaf_blend,
                             soft_decision, tree_output)
from gaforest.tensor import Graph, Tensor

from oracles import forest_by_paths, hard_tree_by_rules, tree_by_paths


def random_tree(rng, depth, outputs=1, alpha=1.0):
    n = 2 ** depth - 1
    return SoftTree(depth, rng.normal(size=n), rng.normal(size=(n + 1, outputs)), alpha)


def test_soft_decision_examples():
    assert soft_decision(0.0, 0.0) == pytest.approx(0.5)
    assert soft_decision(1.0, 0.0, alpha=1000.0) == pytest.approx(1.0)
    assert soft_decision(-1.0, 0.0, alpha=1000.0) == pytest.approx(0.0, abs=1e-300)
    with pytest.raises(ContractError):
        soft_decision(0.0, 0.0, alpha=0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10.0))
def test_blending_weights_sum_to_one(depth, seed, alpha):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, depth, alpha=alpha)
    mu = leaf_blend(tree, rng.normal(0, 3, size=(4, tree.n_nodes)))
    assert mu.shape == (4, 2 ** depth)
    assert np.all(mu >= 0)
    np.testing.assert_allclose(mu.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_tree_matches_path_enumeration(depth):
    rng = np.random.default_rng(depth)
    tree = random_tree(rng, depth, outputs=2, alpha=1.7)
    x = rng.normal(size=(6, tree.n_nodes))
    out, mu = tree_output(tree, x), leaf_blend(tree, x)
    for i in range(6):
        ref_mu, ref_out = tree_by_paths(x[i], tree.biases, tree.leaves, 1.7)
        np.testing.assert_allclose(mu[i], ref_mu, atol=1e-12)
        np.testing.assert_allclose(out[i], ref_out, atol=1e-12)


def test_depth_one_by_hand():
    tree = SoftTree(1, [0.5], [[2.0], [-1.0]], alpha=2.0)
    d = 1.0 / (1.0 + np.exp(-2.0 * (1.0 - 0.5)))
    assert tree_output(tree, np.array([[1.0]]))[0, 0] == pytest.approx(2.0 * d - (1.0 - d))


@pytest.mark.parametrize("combination", ["average", "product"])
@pytest.mark.parametrize("trees,depth", [(1, 1), (3, 2), (8, 4), (5, 3)])
def test_forest_matches_path_enumeration(combination, trees, depth):
    rng = np.random.default_rng(trees * 10 + depth)
    forest = SoftForest.init(trees, depth, rng, combination=combination, std=0.7)
    x = rng.normal(size=(4, forest.width))
    out = forest_forward(forest, x)
    for i in range(4):
        ref = forest_by_paths(x[i], forest.biases.data, forest.leaves.data, 1.0, combination)
        np.testing.assert_allclose(out[i], ref, rtol=1e-12, atol=1e-12)


def test_product_probability_is_s_over_one_plus_s():
    rng = np.random.default_rng(2)
    forest = SoftForest.init(4, 2, rng, combination="product", std=1.0)
    x = rng.normal(size=(5, forest.width))
    s = forest_forward(forest, x)
    np.testing.assert_allclose(forest_probability(forest, x), s / (1.0 + s), rtol=1e-12)
    with pytest.raises(ContractError):
        forest_probability(SoftForest.init(1, 1, rng), x[:, :1])


def test_forest_graph_gradient_matches_finite_differences():
    from oracles import central_difference, rel_err
    rng = np.random.default_rng(5)
    for combination in ("average", "product"):
        forest = SoftForest.init(3, 2, rng, combination=combination, std=0.5)
        act = Tensor(rng.normal(size=(4, forest.width)))
        w = rng.normal(size=(4, 1))

        def value():
            g = Graph()
            return g.sum(g.mul(g.soft_forest(g.param(act), g.param(forest.biases), g.param(forest.leaves),
                                             1.3, combination), w)).item()

        g = Graph()
        out = g.sum(g.mul(g.soft_forest(g.param(act), g.param(forest.biases), g.param(forest.leaves),
                                        1.3, combination), w))
        analytic = g.gradients(out, [act, forest.biases, forest.leaves])
        numeric = central_difference(value, [act.data, forest.biases.data, forest.leaves.data])
        for a, n in zip(analytic, numeric):
            assert rel_err(a, n) < 1e-7


def test_param_counts_and_assignment():
    assert forest_param_count(8192, 1) == (8192, 16384)
    assert forest_param_count(16, 9) == (16 * 511, 16 * 512)
    forest = SoftForest.init(3, 2, np.random.default_rng(0))
    np.testing.assert_array_equal(forest.assignment, np.arange(9).reshape(3, 3))


def test_shape_and_contract_errors():
    with pytest.raises(ShapeError):
        SoftTree(2, np.zeros(2), np.zeros((4, 1)))
    with pytest.raises(ShapeError):
        SoftTree(2, np.zeros(3), np.zeros((3, 1)))
    with pytest.raises(ContractError):
        SoftTree(0, np.zeros(0), np.zeros((1, 1)))
    forest = SoftForest.init(2, 2, np.random.default_rng(0))
    with pytest.raises(ContractError):
        forest_forward(forest, np.zeros((1, 5)))
    with pytest.raises(ContractError):
        SoftForest.init(2, 1, np.random.default_rng(0), outputs=2, combination="product")


def test_forest_json_round_trip():
    forest = SoftForest.init(3, 2, np.random.default_rng(1), outputs=2, alpha=2.5)
    back = SoftForest.from_json(forest.to_json())
    x = np.random.default_rng(2).normal(size=(3, forest.width))
    np.testing.assert_array_equal(forest_forward(back, x), forest_forward(forest, x))
    assert back.alpha == 2.5 and back.combination == "average"


# -- hard forests ------------------------------------------------------------


def test_hard_tree_leaf_means_and_routing():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 3.0, 10.0, 20.0])
    forest = hard_forest_fit(x, y, depth=1, axes=[[0]], thresholds=[[1.5]])
    np.testing.assert_allclose(forest.trees[0].leaves, [2.0, 15.0])
    np.testing.assert_allclose(hard_forest_predict(forest, np.array([[1.49], [1.5]])), [2.0, 15.0])


def test_empty_leaf_inherits_parent_mean():
    x = np.array([[0.0], [1.0]])
    y = np.array([2.0, 4.0])
    forest = hard_forest_fit(x, y, depth=1, axes=[[0]], thresholds=[[5.0]])
    np.testing.assert_allclose(forest.trees[0].leaves, [3.0, 3.0])


def test_hard_forest_matches_rule_oracle_and_averages_trees():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, size=(200, 3))
    y = np.sin(3 * x[:, 0]) + x[:, 1] * x[:, 2]
    forest = hard_forest_fit(x, y, depth=3, n_trees=4)
    pred = hard_forest_predict(forest, x[:20])
    for i in range(20):
        ref = np.mean([hard_tree_by_rules(x[i], t.axes, t.thresholds, t.leaves) for t in forest.trees])
        assert pred[i] == pytest.approx(ref, abs=1e-12)


def test_soft_forest_tends_to_hard_forest():
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(300, 2))
    y = x[:, 0] - 2 * x[:, 1]
    hard = hard_forest_fit(x, y, depth=3, n_trees=3)
    soft = hard.to_soft(alpha=1000.0)
    test = rng.uniform(-1, 1, size=(400, 2))
    gap = np.min(np.abs(np.concatenate([test[:, t.axes] - t.thresholds for t in hard.trees], axis=1)), axis=1)
    keep = gap >= 0.1
    np.testing.assert_allclose(forest_forward(soft, hard.soft_activations(test[keep]))[:, 0],
                               hard_forest_predict(hard, test[keep]), atol=1e-6)


def test_fit_errors():
    with pytest.raises(ContractError):
        hard_forest_fit(np.zeros((0, 2)), np.zeros(0), depth=1)
    stump = hard_forest_fit(np.ones((3, 1)), np.ones(3), 0)
    np.testing.assert_allclose(hard_forest_predict(stump, np.zeros((2, 1))), [1.0, 1.0])
    with pytest.raises(ContractError):
        stump.to_soft(1.0)
