"""The neural attention forest.

A query x is routed through every tree. Within the leaf it reaches in tree k
the leaf network (parameters theta) weighs the member rows by attention, which
gives the key A_k (weighted member features) and the value B_k (weighted
member targets). The global network (parameters psi) weighs the trees by the
attention of x on the keys A_k; the weighted keys reconstruct x and the
weighted values are the prediction.

All attention runs on standardized features, reconstructions are reported in
the original feature space.
"""
import copy
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
import torch
from pydantic import conint

from naforest.attention_net import (
    DTYPE,
    AttentionNet,
    architecture_specs,
    init_net,
    masked_softmax,
    scaled_scores,
    score_softmax,
)
from naforest.base_model import BaseModel
from naforest.dataset import Dataset, Standardizer, standardize
from naforest.exceptions import ParserException, QueryError
from naforest.forest import TREE_LEAF, Forest, ForestConfig, build_forest
from naforest.util.types import FloatArray, IndexArray

#: Number of queries attended at once outside of training.
PREDICT_CHUNK = 256


class NetworkConfig(BaseModel):
    """Definition of the two attention networks."""

    #: naf1 (one linear layer) or naf3 (two tanh layers and a linear one)
    architecture: Literal["naf1", "naf3"] = "naf1"
    #: width h of the layers and the embeddings
    embed_dim: conint(ge=1) = 16
    #: embed the keys with the same network as the query. If False the raw
    #: keys are used, which requires embed_dim == d.
    embed_keys: bool = True
    #: seed of the initial weights, the global network uses seed + 1
    seed: conint(ge=0) = 0


@dataclass(frozen=True)
class TreeSummary:
    """Leaf attention result of one tree.

    ``key`` is in standardized feature space.
    """

    #: tree index
    tree: int
    #: A_k, attention weighted member features
    key: Optional[FloatArray]
    #: B_k, attention weighted member targets
    value: Optional[float]
    #: attention weight of every member
    leaf_weights: Optional[FloatArray]
    #: training rows taking part in the attention
    member_indices: IndexArray
    #: True if the tree takes no part (no member left after exclusion)
    skipped: bool = False


@dataclass(frozen=True)
class NafOutput:
    """Prediction and reconstruction of one query."""

    #: prediction
    y_hat: float
    #: reconstruction of the query, original feature space
    x_hat: FloatArray
    #: weight of every tree, 0 for skipped trees
    tree_weights: FloatArray
    #: per tree leaf attention results
    tree_summaries: List[TreeSummary]
    #: True if every tree was skipped and the plain forest answered
    fallback: bool = False


@dataclass
class AttentionResult:
    """Batched tensors of the attention pipeline for m queries.

    Only the queries with ``word_valid`` set have meaningful outputs.
    """

    #: m x T x n leaf weights
    alpha: torch.Tensor
    #: m x T trees taking part
    tree_valid: torch.Tensor
    #: m x T x d keys
    keys: torch.Tensor
    #: m x T values
    values: torch.Tensor
    #: m x T tree weights
    beta: torch.Tensor
    #: m x d reconstructions, standardized space
    x_hat: torch.Tensor
    #: m predictions
    y_hat: torch.Tensor
    #: m queries with at least one tree taking part
    word_valid: torch.Tensor


class NafModel:
    """Forest with leaf and global attention networks."""

    def __init__(
        self,
        forest: Forest,
        leaf_net: AttentionNet,
        global_net: AttentionNet,
        standardizer: Standardizer,
        config: NetworkConfig,
    ) -> None:
        """Assemble a model.

        Args:
            forest (Forest): forest built on the standardized training data.
            leaf_net (AttentionNet): network of the leaf attention (theta).
            global_net (AttentionNet): network of the tree attention (psi).
            standardizer (Standardizer): map into the space of the forest.
            config (NetworkConfig): network definition.

        Raises:
            ParserException: if the widths of the parts do not fit.
        """
        d = forest.d
        if leaf_net.input_width != d or global_net.input_width != d:
            raise ParserException(
                "NafModel",
                "networks",
                f"Both networks need input width {d}.",
            )
        if leaf_net.embed_dim != global_net.embed_dim:
            raise ParserException(
                "NafModel",
                "networks",
                "Both networks need the same embedding width.",
            )
        if not config.embed_keys and leaf_net.embed_dim != d:
            raise ParserException(
                "NafModel",
                "embed_keys",
                f"Raw keys need embed_dim == d ({d}), got "
                f"{leaf_net.embed_dim}.",
            )
        if standardizer.d != d:
            raise ParserException(
                "NafModel", "standardizer", f"Standardizer needs width {d}."
            )
        self.forest = forest
        self.leaf_net = leaf_net
        self.global_net = global_net
        self.standardizer = standardizer
        self.config = config
        self._features = torch.as_tensor(forest.dataset.features, dtype=DTYPE)
        self._targets = torch.as_tensor(forest.dataset.targets, dtype=DTYPE)

    @classmethod
    def create(
        cls,
        dataset: Dataset,
        forest_config: ForestConfig,
        network_config: NetworkConfig,
    ) -> "NafModel":
        """Standardize the data, build the forest and initialize the nets.

        Args:
            dataset (Dataset): training data in the original space.
            forest_config (ForestConfig): forest definition.
            network_config (NetworkConfig): network definition.

        Returns:
            NafModel: untrained model.
        """
        standardized, standardizer = standardize(dataset)
        forest = build_forest(standardized, forest_config)
        leaf_net, global_net = init_networks(dataset.d, network_config)
        return cls(forest, leaf_net, global_net, standardizer, network_config)

    @property
    def dataset(self) -> Dataset:
        """Standardized training data."""
        return self.forest.dataset

    @property
    def d(self) -> int:
        """Number of features."""
        return self.forest.d

    def parameters(self) -> List[torch.nn.Parameter]:
        """Trainable parameters, theta first then psi."""
        return list(self.leaf_net.parameters()) + list(
            self.global_net.parameters()
        )

    def parameter_vector(self) -> torch.Tensor:
        """Flattened (theta, psi)."""
        return torch.cat(
            [
                self.leaf_net.parameter_vector(),
                self.global_net.parameter_vector(),
            ]
        )

    def set_parameter_vector(self, vector: torch.Tensor) -> None:
        """Restore (theta, psi) from a flattened vector."""
        n_leaf = self.leaf_net.n_parameters
        self.leaf_net.set_parameter_vector(vector[:n_leaf])
        self.global_net.set_parameter_vector(vector[n_leaf:])

    def with_networks(
        self, leaf_net: AttentionNet, global_net: AttentionNet
    ) -> "NafModel":
        """Same forest with other networks."""
        return NafModel(
            self.forest, leaf_net, global_net, self.standardizer, self.config
        )

    def reinitialized(self, seed: int) -> "NafModel":
        """Same forest with freshly initialized networks."""
        config = self.config.copy(update={"seed": seed})
        leaf_net, global_net = init_networks(self.d, config)
        return NafModel(
            self.forest, leaf_net, global_net, self.standardizer, config
        )

    def constant(self) -> "NafModel":
        """Same forest with networks mapping everything to zero."""
        return self.with_networks(
            copy.deepcopy(self.leaf_net).make_constant(),
            copy.deepcopy(self.global_net).make_constant(),
        )

    def standardized(self, features: FloatArray) -> FloatArray:
        """Check the width of the queries and standardize them.

        Raises:
            DimensionError: if the queries do not have d columns.
            QueryError: if a query is not finite.
        """
        features = self.forest.check_dimension(features)
        if not np.isfinite(features).all():
            row = int(np.nonzero(~np.isfinite(features).all(axis=1))[0][0])
            raise QueryError(
                f"Query {row + 1} contains NaN or infinite values."
            )
        return self.standardizer.apply(features)

    def _embed_keys(self, net: AttentionNet, keys: torch.Tensor):
        return net(keys) if self.config.embed_keys else keys

    def attend(
        self,
        z: torch.Tensor,
        query_leaves: IndexArray,
        exclude: Optional[IndexArray] = None,
    ) -> AttentionResult:
        """Run both attention stages on standardized queries.

        Args:
            z (torch.Tensor): m x d standardized queries.
            query_leaves (IndexArray): m x T leaf ids, -1 drops the tree for
                that query.
            exclude (Optional[IndexArray]): per query a training row removed
                from its leaves, -1 for none.

        Returns:
            AttentionResult: differentiable results.
        """
        m = z.shape[0]
        membership = self.forest.membership(query_leaves)
        membership &= (query_leaves != TREE_LEAF)[:, :, None]
        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.int64)
            rows = np.nonzero(exclude >= 0)[0]
            membership[rows, :, exclude[rows]] = False
        mask = torch.from_numpy(membership)

        query = self.leaf_net(z)
        member_keys = self._embed_keys(self.leaf_net, self._features)
        scores = scaled_scores(query, member_keys.unsqueeze(0))
        alpha = masked_softmax(scores.unsqueeze(1).expand_as(mask), mask)
        keys = alpha @ self._features
        values = alpha @ self._targets

        tree_valid = mask.any(dim=-1)
        global_query = self.global_net(z)
        tree_keys = self._embed_keys(self.global_net, keys)
        tree_scores = scaled_scores(global_query, tree_keys)
        beta = masked_softmax(tree_scores, tree_valid)
        x_hat = (beta.unsqueeze(-1) * keys).sum(dim=1)
        y_hat = (beta * values).sum(dim=1)
        return AttentionResult(
            alpha=alpha,
            tree_valid=tree_valid,
            keys=keys,
            values=values,
            beta=beta,
            x_hat=x_hat.reshape(m, -1),
            y_hat=y_hat,
            word_valid=tree_valid.any(dim=-1),
        )

    def predict_batch(self, features: FloatArray):
        """Predictions and reconstructions of many queries.

        Args:
            features (FloatArray): m x d queries, original space.

        Returns:
            Tuple[FloatArray, FloatArray]: m predictions and m x d
            reconstructions in the original space.
        """
        z = self.standardized(features)
        y_hat = np.empty(z.shape[0])
        x_hat = np.empty(z.shape)
        with torch.no_grad():
            for start in range(0, z.shape[0], PREDICT_CHUNK):
                chunk = z[start : start + PREDICT_CHUNK]
                result = self.attend(
                    torch.as_tensor(chunk, dtype=DTYPE),
                    self.forest.apply(chunk),
                )
                y_hat[start : start + chunk.shape[0]] = result.y_hat.numpy()
                x_hat[start : start + chunk.shape[0]] = result.x_hat.numpy()
        return y_hat, self.standardizer.invert(x_hat)


def init_networks(d: int, config: NetworkConfig):
    """Fresh leaf and global networks for d features.

    Returns:
        Tuple[AttentionNet, AttentionNet]: leaf and global network.
    """
    specs = architecture_specs(config.architecture, d, config.embed_dim)
    return init_net(specs, config.seed), init_net(specs, config.seed + 1)


def leaf_attention(
    model: NafModel,
    k: int,
    x: FloatArray,
    exclude: Optional[int] = None,
) -> TreeSummary:
    """Attention of ``x`` over the members of its leaf in tree ``k``.

    Args:
        model (NafModel): the model.
        k (int): tree index.
        x (FloatArray): query, original space.
        exclude (Optional[int]): training row removed from the leaf.

    Returns:
        TreeSummary: key, value and weights, or a skipped marker if the leaf
        is empty after the exclusion.
    """
    z = model.standardized(x)
    members = model.forest.leaf_lookup(k, z)
    if exclude is not None:
        members = members[members != exclude]
    if members.size == 0:
        return TreeSummary(k, None, None, None, members, skipped=True)
    with torch.no_grad():
        member_features = model._features[members]
        query = model.leaf_net(torch.as_tensor(z[0], dtype=DTYPE))
        keys = model._embed_keys(model.leaf_net, member_features)
        alpha = score_softmax(query, keys)
        key = alpha @ member_features
        value = alpha @ model._targets[members]
    return TreeSummary(
        tree=k,
        key=key.numpy(),
        value=float(value),
        leaf_weights=alpha.numpy(),
        member_indices=members,
    )


def global_attention(
    model: NafModel, x: FloatArray, summaries: List[TreeSummary]
) -> NafOutput:
    """Attention of ``x`` over the tree keys.

    Args:
        model (NafModel): the model.
        x (FloatArray): query, original space.
        summaries (List[TreeSummary]): leaf attention of every tree.

    Returns:
        NafOutput: prediction and reconstruction. If every tree is skipped
        the plain forest prediction is returned with ``fallback`` set.
    """
    z = model.standardized(x)
    weights = np.zeros(len(summaries))
    used = [idx for idx, item in enumerate(summaries) if not item.skipped]
    if not used:
        return NafOutput(
            y_hat=float(model.forest.plain_predict(z)[0]),
            x_hat=np.asarray(x, dtype=np.float64).reshape(-1),
            tree_weights=weights,
            tree_summaries=summaries,
            fallback=True,
        )
    keys = torch.as_tensor(
        np.stack([summaries[idx].key for idx in used]), dtype=DTYPE
    )
    values = torch.as_tensor(
        [summaries[idx].value for idx in used], dtype=DTYPE
    )
    with torch.no_grad():
        query = model.global_net(torch.as_tensor(z[0], dtype=DTYPE))
        beta = score_softmax(query, model._embed_keys(model.global_net, keys))
    weights[used] = beta.numpy()
    x_hat = (beta @ keys).numpy()
    return NafOutput(
        y_hat=float(beta @ values),
        x_hat=model.standardizer.invert(x_hat),
        tree_weights=weights,
        tree_summaries=summaries,
    )


def predict(model: NafModel, x: FloatArray) -> NafOutput:
    """Full pipeline for one query, nothing excluded.

    Args:
        model (NafModel): the model.
        x (FloatArray): d features, original space.

    Raises:
        DimensionError: if x does not have d entries.

    Returns:
        NafOutput: prediction, reconstruction and all attention weights.
    """
    z = model.standardized(x)
    leaves = model.forest.apply(z)
    with torch.no_grad():
        result = model.attend(torch.as_tensor(z, dtype=DTYPE), leaves)
    alpha = result.alpha[0].numpy()
    summaries = []
    for k in range(model.forest.n_trees):
        members = model.forest.trees[k].leaf_members[int(leaves[0, k])]
        summaries.append(
            TreeSummary(
                tree=k,
                key=result.keys[0, k].numpy(),
                value=float(result.values[0, k]),
                leaf_weights=alpha[k, members],
                member_indices=members,
            )
        )
    return NafOutput(
        y_hat=float(result.y_hat[0]),
        x_hat=model.standardizer.invert(result.x_hat[0].numpy()),
        tree_weights=result.beta[0].numpy(),
        tree_summaries=summaries,
    )
