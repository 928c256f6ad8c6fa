import numpy as np
import pytest
from pydantic import ValidationError

from naforest.dataset import Dataset, gen_friedman
from naforest.exceptions import DimensionError, ForestError
from naforest.forest import (
    TREE_LEAF,
    Forest,
    ForestConfig,
    RegressionTree,
    _best_exhaustive_split,
    bootstrap_sample,
    build_forest,
    grow_tree,
    leaf_lookup,
    plain_predict,
    sentences,
)


@pytest.fixture
def friedman_data():
    return gen_friedman(1, 60, noise_sd=0.5, seed=7)


def walk(tree, x):
    node = 0
    while tree.children_left[node] != TREE_LEAF:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.children_left[node]
        else:
            node = tree.children_right[node]
    return node


@pytest.mark.parametrize(
    "algorithm, wanted", [("rf", True), ("ert", False)]
)
def test_forest_config_bootstrap_default(algorithm, wanted):
    assert ForestConfig(algorithm=algorithm).bootstrap is wanted
    flipped = ForestConfig(algorithm=algorithm, bootstrap=not wanted)
    assert flipped.bootstrap is not wanted


@pytest.mark.parametrize(
    "definition",
    [{"n_trees": 0}, {"min_leaf_size": 0}, {"algorithm": "gbm"}, {"x": 1}],
)
def test_forest_config_invalid(definition):
    with pytest.raises(ValidationError):
        ForestConfig(**definition)


@pytest.mark.parametrize("algorithm", ["rf", "ert"])
def test_forest_partition(algorithm, friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=6, algorithm=algorithm, min_leaf_size=4, seed=3),
    )
    for tree in forest.trees:
        members = [tree.leaf_members[leaf] for leaf in tree.leaves()]
        joined = np.concatenate(members)
        assert np.array_equal(np.sort(joined), tree.fitted_rows)
        assert np.unique(joined).size == joined.size
        leaves = tree.apply(friedman_data.features[tree.fitted_rows])
        for row, leaf in zip(tree.fitted_rows, leaves):
            assert row in tree.leaf_members[leaf]
        for leaf in tree.leaves():
            assert tree.is_leaf(leaf)


def test_forest_ert_uses_all_rows_and_leaf_size(friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=4, algorithm="ert", min_leaf_size=5, seed=1),
    )
    for tree in forest.trees:
        assert np.array_equal(tree.fitted_rows, np.arange(friedman_data.n))
        assert all(
            tree.leaf_members[leaf].size >= 5 for leaf in tree.leaves()
        )


def test_forest_rf_without_bootstrap_leaf_size(friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=3, min_leaf_size=6, bootstrap=False, seed=1),
    )
    for tree in forest.trees:
        assert all(
            tree.leaf_members[leaf].size >= 6 for leaf in tree.leaves()
        )


def test_forest_rf_bootstrap_omits_rows(friedman_data):
    forest = build_forest(
        friedman_data, ForestConfig(n_trees=5, min_leaf_size=3, seed=2)
    )
    sizes = [tree.fitted_rows.size for tree in forest.trees]
    assert min(sizes) < friedman_data.n
    leaves = forest.training_leaves()
    for k, tree in enumerate(forest.trees):
        omitted = np.setdiff1d(np.arange(friedman_data.n), tree.fitted_rows)
        assert (leaves[omitted, k] == TREE_LEAF).all()
        assert (leaves[tree.fitted_rows, k] != TREE_LEAF).all()


@pytest.mark.parametrize("min_leaf_size", [1, 4, 10])
def test_forest_rf_bootstrap_leaf_size(min_leaf_size):
    data = gen_friedman(2, 100, seed=0)
    forest = build_forest(
        data, ForestConfig(n_trees=100, min_leaf_size=min_leaf_size)
    )
    for tree in forest.trees:
        assert all(
            tree.leaf_members[leaf].size >= min_leaf_size
            for leaf in tree.leaves()
        )


def test_bootstrap_sample_counts():
    rows, counts = bootstrap_sample(50, 10, np.random.default_rng(4))
    assert counts.sum() == 50
    assert rows.size >= 10
    assert np.array_equal(rows, np.unique(rows))
    assert (counts >= 1).all()


@pytest.mark.parametrize("seed", range(5))
def test_best_split_weights_match_repeated_rows(seed):
    rng = np.random.default_rng(seed)
    features = rng.uniform(size=(12, 3))
    targets = rng.normal(size=12)
    counts = rng.integers(1, 4, size=12)
    weighted = _best_exhaustive_split(
        features, targets, counts.astype(float), np.arange(3), 1
    )
    repeated = _best_exhaustive_split(
        np.repeat(features, counts, axis=0),
        np.repeat(targets, counts),
        np.ones(counts.sum()),
        np.arange(3),
        1,
    )
    assert weighted[:2] == repeated[:2]
    assert weighted[2] == pytest.approx(repeated[2], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("algorithm", ["rf", "ert"])
def test_forest_plain_predict_brute_force(algorithm, friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=7, algorithm=algorithm, min_leaf_size=3, seed=5),
    )
    queries = np.random.default_rng(0).uniform(size=(25, friedman_data.d))
    predictions = forest.plain_predict(queries)
    for x, prediction in zip(queries, predictions):
        brute = sum(tree.value[walk(tree, x)] for tree in forest.trees)
        assert abs(prediction - brute / forest.n_trees) <= 1e-12
    assert plain_predict(forest, queries[0]) == predictions[0]


def test_forest_leaf_value_is_member_mean(friedman_data):
    forest = build_forest(
        friedman_data, ForestConfig(n_trees=3, min_leaf_size=4, seed=4)
    )
    for tree in forest.trees:
        for leaf, rows in tree.leaf_members.items():
            assert tree.value[leaf] == pytest.approx(
                friedman_data.targets[rows].mean(), abs=1e-12
            )


def test_forest_deterministic_and_thread_independent(
    friedman_data, monkeypatch
):
    config = ForestConfig(n_trees=8, min_leaf_size=3, seed=11)
    monkeypatch.setenv("NAF_THREADS", "1")
    serial = build_forest(friedman_data, config)
    monkeypatch.setenv("NAF_THREADS", "4")
    threaded = build_forest(friedman_data, config)
    assert serial.to_dict() == threaded.to_dict()
    other = build_forest(friedman_data, config.copy(update={"seed": 12}))
    assert other.to_dict() != serial.to_dict()


def test_forest_too_small():
    dataset = gen_friedman(2, 9, seed=0)
    with pytest.raises(ForestError):
        build_forest(dataset, ForestConfig(min_leaf_size=5))


def test_forest_dimension_mismatch(small_dataset):
    forest = build_forest(small_dataset, ForestConfig(n_trees=2, seed=0))
    with pytest.raises(DimensionError):
        forest.plain_predict(np.zeros((1, small_dataset.d + 1)))


def test_forest_constant_targets_single_leaf():
    dataset = Dataset(np.arange(20.0).reshape(10, 2), np.full(10, 2.5))
    forest = build_forest(
        dataset, ForestConfig(n_trees=2, min_leaf_size=1, seed=0)
    )
    for tree in forest.trees:
        assert tree.n_nodes == 1
        assert tree.leaves() == [0]
    assert np.array_equal(forest.plain_predict([[100.0, -3.0]]), [2.5])


def test_forest_max_depth(friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=3, min_leaf_size=1, max_depth=1, seed=0),
    )
    for tree in forest.trees:
        assert tree.n_nodes <= 3


def test_grow_tree_exhaustive_step():
    features = np.arange(10.0).reshape(-1, 1)
    targets = (features[:, 0] >= 5).astype(float)
    tree = grow_tree(
        features,
        targets,
        ForestConfig(min_leaf_size=1, bootstrap=False),
        np.random.default_rng(0),
    )
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 4.5
    assert tree.n_nodes == 3
    assert tree.leaf_members[1].tolist() == [0, 1, 2, 3, 4]
    assert tree.value[1] == 0.0
    assert tree.value[2] == 1.0


def test_grow_tree_random_threshold_inside_range():
    rng = np.random.default_rng(3)
    features = rng.uniform(size=(30, 3))
    targets = features.sum(axis=1)
    tree = grow_tree(
        features,
        targets,
        ForestConfig(algorithm="ert", min_leaf_size=2),
        np.random.default_rng(1),
    )
    for node in range(tree.n_nodes):
        if tree.is_leaf(node):
            continue
        column = features[:, tree.feature[node]]
        assert column.min() < tree.threshold[node] < column.max()


def test_forest_max_features(friedman_data):
    config = ForestConfig(n_trees=3, min_leaf_size=3, max_features=2, seed=0)
    first = build_forest(friedman_data, config)
    second = build_forest(friedman_data, config)
    assert first.to_dict() == second.to_dict()


def test_forest_round_trip(friedman_data):
    forest = build_forest(
        friedman_data, ForestConfig(n_trees=4, min_leaf_size=3, seed=9)
    )
    loaded = Forest.from_dict(forest.to_dict(), friedman_data)
    queries = np.random.default_rng(2).uniform(size=(30, friedman_data.d))
    assert np.array_equal(
        loaded.plain_predict(queries), forest.plain_predict(queries)
    )
    assert np.array_equal(loaded.training_leaves(), forest.training_leaves())
    tree = RegressionTree.from_dict(forest.trees[0].to_dict())
    assert np.array_equal(tree.threshold, forest.trees[0].threshold, True)


def test_forest_leaf_lookup_and_membership(small_dataset):
    forest = build_forest(
        small_dataset, ForestConfig(n_trees=3, min_leaf_size=3, seed=0)
    )
    queries = small_dataset.features[:4] + 0.01
    query_leaves = forest.apply(queries)
    assert query_leaves.shape == (4, 3)
    membership = forest.membership(query_leaves)
    assert membership.shape == (4, 3, small_dataset.n)
    for b in range(4):
        for k in range(3):
            rows = leaf_lookup(forest, k, queries[b])
            assert np.array_equal(np.nonzero(membership[b, k])[0], rows)
            assert np.array_equal(
                rows, forest.trees[k].leaf_members[query_leaves[b, k]]
            )


def test_forest_sentences(small_dataset):
    forest = build_forest(
        small_dataset, ForestConfig(n_trees=6, min_leaf_size=2, seed=6)
    )
    for w in range(small_dataset.n):
        for k, sentence in enumerate(sentences(forest, w)):
            if w in forest.trees[k].fitted_rows:
                assert w in sentence
            else:
                assert sentence is None


def test_forest_leave_one_out_skips(friedman_data):
    forest = build_forest(
        friedman_data, ForestConfig(n_trees=4, min_leaf_size=1, seed=2)
    )
    skips = forest.leave_one_out_skips()
    assert skips.shape == (friedman_data.n, 4)
    for row in range(friedman_data.n):
        for k, members in enumerate(forest.sentences(row)):
            wanted = members is None or members.size == 1
            assert skips[row, k] == wanted
    assert skips.any()


def test_forest_leave_one_out_without_skips(friedman_data):
    forest = build_forest(
        friedman_data,
        ForestConfig(n_trees=4, algorithm="ert", min_leaf_size=2, seed=2),
    )
    assert not forest.leave_one_out_skips().any()
