import math

import numpy as np
import pytest
import torch

from naforest.attention_net import DTYPE
from naforest.dataset import Dataset
from naforest.exceptions import DimensionError, ParserException, QueryError
from naforest.forest import ForestConfig
from naforest.naf_model import (
    NafModel,
    NetworkConfig,
    TreeSummary,
    global_attention,
    init_networks,
    leaf_attention,
    predict,
)


@pytest.fixture
def queries(small_dataset):
    rng = np.random.default_rng(5)
    low = small_dataset.features.min(axis=0)
    high = small_dataset.features.max(axis=0)
    return rng.uniform(low, high, size=(12, small_dataset.d))


def test_network_config_defaults():
    config = NetworkConfig()
    assert config.architecture == "naf1"
    assert config.embed_dim == 16
    assert config.embed_keys


def test_constant_networks_reproduce_forest(small_model, queries):
    constant = small_model.constant()
    y_hat, _ = constant.predict_batch(queries)
    plain = small_model.forest.plain_predict(
        small_model.standardized(queries)
    )
    assert np.allclose(y_hat, plain, rtol=0, atol=1e-10)
    # the original networks are untouched
    assert torch.count_nonzero(small_model.leaf_net.parameter_vector()) > 0


@pytest.mark.parametrize("architecture", ["naf1", "naf3"])
def test_prediction_is_convex_combination(
    small_dataset, small_forest_config, queries, architecture
):
    model = NafModel.create(
        small_dataset,
        small_forest_config,
        NetworkConfig(architecture=architecture, seed=4),
    )
    y_hat, x_hat = model.predict_batch(queries)
    assert (y_hat >= small_dataset.targets.min() - 1e-9).all()
    assert (y_hat <= small_dataset.targets.max() + 1e-9).all()
    low = small_dataset.features.min(axis=0) - 1e-9
    high = small_dataset.features.max(axis=0) + 1e-9
    assert ((x_hat >= low) & (x_hat <= high)).all()


def test_leaf_attention_brute_force(small_model, queries):
    x = queries[0]
    z = small_model.standardized(x)[0]
    features = small_model.dataset.features
    targets = small_model.dataset.targets
    for k, tree in enumerate(small_model.forest.trees):
        summary = leaf_attention(small_model, k, x)
        leaf = int(tree.apply(z[None, :])[0])
        members = tree.leaf_members[leaf]
        assert np.array_equal(summary.member_indices, members)
        with torch.no_grad():
            query = small_model.leaf_net(torch.as_tensor(z, dtype=DTYPE))
            keys = small_model.leaf_net(
                torch.as_tensor(features[members], dtype=DTYPE)
            )
            scores = (keys @ query).numpy() / math.sqrt(query.shape[0])
        weights = np.exp(scores - scores.max())
        weights /= weights.sum()
        assert np.allclose(summary.leaf_weights, weights, rtol=0, atol=1e-12)
        assert summary.value == pytest.approx(
            weights @ targets[members], abs=1e-12
        )
        assert np.allclose(
            summary.key, weights @ features[members], rtol=0, atol=1e-12
        )


def test_leaf_attention_exclusion(small_model):
    x = small_model.standardizer.invert(small_model.dataset.features[0])
    for k, tree in enumerate(small_model.forest.trees):
        summary = leaf_attention(small_model, k, x, exclude=0)
        assert 0 not in summary.member_indices
        if summary.skipped:
            assert summary.key is None


def test_predict_matches_predict_batch(small_model, queries):
    y_hat, x_hat = small_model.predict_batch(queries)
    for idx, x in enumerate(queries):
        output = predict(small_model, x)
        assert abs(output.y_hat - y_hat[idx]) <= 1e-12
        assert np.allclose(output.x_hat, x_hat[idx], rtol=0, atol=1e-12)
        assert abs(output.tree_weights.sum() - 1.0) <= 1e-12
        assert not output.fallback
        for summary in output.tree_summaries:
            assert abs(summary.leaf_weights.sum() - 1.0) <= 1e-12


def test_stagewise_pipeline_matches_predict(small_model, queries):
    x = queries[3]
    summaries = [
        leaf_attention(small_model, k, x)
        for k in range(small_model.forest.n_trees)
    ]
    staged = global_attention(small_model, x, summaries)
    direct = predict(small_model, x)
    assert abs(staged.y_hat - direct.y_hat) <= 1e-12
    assert np.allclose(staged.x_hat, direct.x_hat, rtol=0, atol=1e-12)
    assert np.allclose(
        staged.tree_weights, direct.tree_weights, rtol=0, atol=1e-12
    )


def test_global_attention_fallback(small_model, queries):
    x = queries[0]
    summaries = [
        TreeSummary(k, None, None, None, np.empty(0, np.int64), True)
        for k in range(small_model.forest.n_trees)
    ]
    output = global_attention(small_model, x, summaries)
    assert output.fallback
    plain = small_model.forest.plain_predict(small_model.standardized(x))
    assert output.y_hat == plain[0]
    assert np.array_equal(output.x_hat, x)
    assert not output.tree_weights.any()


def test_global_attention_skips_trees(small_model, queries):
    x = queries[1]
    summaries = [
        leaf_attention(small_model, k, x)
        for k in range(small_model.forest.n_trees)
    ]
    empty = np.empty(0, np.int64)
    summaries[0] = TreeSummary(0, None, None, None, empty, skipped=True)
    output = global_attention(small_model, x, summaries)
    assert output.tree_weights[0] == 0.0
    assert abs(output.tree_weights.sum() - 1.0) <= 1e-12


def test_predict_dimension_mismatch(small_model):
    with pytest.raises(DimensionError):
        predict(small_model, np.zeros(small_model.d + 2))
    with pytest.raises(DimensionError):
        small_model.predict_batch(np.zeros((3, small_model.d - 1)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_predict_rejects_non_finite_query(small_model, bad):
    query = np.ones(small_model.d)
    query[-1] = bad
    with pytest.raises(QueryError, match="Query 1"):
        predict(small_model, query)
    queries = np.ones((3, small_model.d))
    queries[2, 0] = bad
    with pytest.raises(QueryError, match="Query 3"):
        small_model.predict_batch(queries)
    with pytest.raises(QueryError):
        leaf_attention(small_model, 0, query)


def test_raw_keys_need_matching_width(small_dataset, small_forest_config):
    with pytest.raises(ParserException):
        NafModel.create(
            small_dataset,
            small_forest_config,
            NetworkConfig(embed_keys=False, embed_dim=16),
        )
    model = NafModel.create(
        small_dataset,
        small_forest_config,
        NetworkConfig(embed_keys=False, embed_dim=small_dataset.d),
    )
    y_hat, _ = model.predict_batch(small_dataset.features[:3])
    assert np.isfinite(y_hat).all()


def test_model_network_helpers(small_model):
    vector = small_model.parameter_vector()
    assert vector.numel() == (
        small_model.leaf_net.n_parameters + small_model.global_net.n_parameters
    )
    fresh = small_model.reinitialized(seed=9)
    assert fresh.forest is small_model.forest
    assert fresh.config.seed == 9
    assert not torch.equal(fresh.parameter_vector(), vector)
    fresh.set_parameter_vector(vector)
    assert torch.equal(fresh.parameter_vector(), vector)
    leaf_net, global_net = init_networks(small_model.d, NetworkConfig(seed=2))
    assert torch.equal(
        leaf_net.parameter_vector(), small_model.leaf_net.parameter_vector()
    )
    assert not torch.equal(
        leaf_net.parameter_vector(), global_net.parameter_vector()
    )


def test_mismatched_networks(small_model):
    leaf_net, global_net = init_networks(
        small_model.d + 1, NetworkConfig(seed=0)
    )
    with pytest.raises(ParserException):
        small_model.with_networks(leaf_net, global_net)


@pytest.mark.parametrize("algorithm", ["rf", "ert"])
@pytest.mark.parametrize("seed", range(5))
def test_constant_networks_reproduce_random_forests(algorithm, seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(1, 11))
    n = int(rng.integers(20, 61))
    features = rng.normal(size=(n, d))
    dataset = Dataset(features, features.sum(axis=1) + rng.normal(size=n))
    forest_config = ForestConfig(
        n_trees=int(rng.integers(1, 21)),
        algorithm=algorithm,
        min_leaf_size=int(rng.integers(1, 6)),
        seed=seed,
    )
    model = NafModel.create(
        dataset, forest_config, NetworkConfig(embed_dim=4, seed=seed)
    ).constant()
    queries = rng.normal(size=(100, d)) * 1.5
    y_hat, _ = model.predict_batch(queries)
    plain = model.forest.plain_predict(model.standardized(queries))
    assert np.allclose(y_hat, plain, rtol=0, atol=1e-10)


def embed_numpy(net, x):
    out = np.asarray(x, dtype=np.float64)
    for spec, layer in zip(net.specs, net.layers):
        weight = layer.weight.detach().numpy()
        bias = layer.bias.detach().numpy()
        out = out @ weight.T + bias
        if spec.activation == "tanh":
            out = np.tanh(out)
    return out


@pytest.mark.parametrize("case", range(50))
def test_leaf_attention_matches_numpy(case):
    rng = np.random.default_rng(case)
    d = int(rng.integers(1, 4))
    n = int(rng.integers(6, 16))
    features = rng.uniform(-2, 2, size=(n, d))
    dataset = Dataset(features, rng.normal(size=n))
    model = NafModel.create(
        dataset,
        ForestConfig(
            n_trees=3,
            algorithm="rf" if case % 2 else "ert",
            min_leaf_size=int(rng.integers(1, 3)),
            seed=case,
        ),
        NetworkConfig(
            architecture="naf3" if case % 4 >= 2 else "naf1",
            embed_dim=int(rng.integers(2, 6)),
            seed=case,
        ),
    )
    x = rng.uniform(-2, 2, size=d)
    z = model.standardized(x)[0]
    standardized = model.dataset.features
    targets = model.dataset.targets
    for k in range(model.forest.n_trees):
        summary = leaf_attention(model, k, x)
        members = summary.member_indices
        assert members.size >= 1
        query = embed_numpy(model.leaf_net, z)
        keys = embed_numpy(model.leaf_net, standardized[members])
        scores = keys @ query / math.sqrt(query.shape[0])
        weights = np.exp(scores - scores.max())
        weights /= weights.sum()
        assert np.allclose(summary.leaf_weights, weights, rtol=0, atol=1e-12)
        assert np.allclose(
            summary.key, weights @ standardized[members], rtol=0, atol=1e-12
        )
        assert summary.value == pytest.approx(
            weights @ targets[members], abs=1e-12
        )


def test_leaf_attention_two_point_leaf(two_point_model):
    summary = leaf_attention(two_point_model, 0, np.array([1.0, 0.0]))
    assert summary.leaf_weights == pytest.approx([0.6698, 0.3302], abs=1e-4)
    assert summary.key == pytest.approx([0.6698, 0.3302], abs=1e-4)
    assert summary.value == pytest.approx(0.6698, abs=1e-4)
    output = predict(two_point_model, np.array([1.0, 0.0]))
    assert output.tree_weights.tolist() == [1.0]
    assert output.y_hat == pytest.approx(0.6698, abs=1e-4)
