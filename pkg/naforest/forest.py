"""Random Forests and Extremely Randomized Trees for regression.

Trees are stored as flat node arrays. Besides the usual prediction, every
leaf keeps the set of training rows which fell into it, so a query can be
answered with the index set of the rows sharing its leaf in a given tree.

RF trees are grown on bootstrap samples with an exhaustive search for the
split with the largest decrease of the sum of squares. ERT trees are grown on
the full sample, each feature gets one random threshold and the best of these
candidate splits is kept.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import conint, validator

from naforest.base_model import BaseModel
from naforest.dataset import Dataset
from naforest.exceptions import DimensionError, ForestError
from naforest.util.logger import get_run_logger
from naforest.util.types import FloatArray, IndexArray
from naforest.util.util_funcs import format_reals, get_n_threads, parse_reals

#: Marker for missing children and the feature of leaves.
TREE_LEAF = -1


class ForestConfig(BaseModel):
    """Definition of the tree ensemble."""

    #: number of trees T
    n_trees: conint(ge=1) = 100
    #: rf (Random Forest) or ert (Extremely Randomized Trees)
    algorithm: Literal["rf", "ert"] = "rf"
    #: minimal number of training rows in every leaf
    min_leaf_size: conint(ge=1) = 10
    #: maximal depth of the trees, None is unlimited
    max_depth: Optional[conint(ge=1)] = None
    #: grow every tree on a bootstrap sample. Defaults to True for rf and
    #: False for ert.
    bootstrap: Optional[bool] = None
    #: number of features tried per split by rf, None tries all
    max_features: Optional[conint(ge=1)] = None
    #: seed of the forest, every tree derives its own seed from it
    seed: conint(ge=0) = 0

    @validator("bootstrap", always=True)
    @classmethod
    def default_bootstrap_by_algorithm(cls, v, values: Dict[str, Any]):
        """Bootstrap is the default for rf only."""
        if v is None:
            return values.get("algorithm", "rf") == "rf"
        return v


class RegressionTree:
    """Binary regression tree with leaf membership sets.

    Node 0 is the root. ``x[feature] <= threshold`` is routed left.
    """

    def __init__(
        self,
        feature: IndexArray,
        threshold: FloatArray,
        children_left: IndexArray,
        children_right: IndexArray,
        value: FloatArray,
        leaf_members: Dict[int, IndexArray],
        fitted_rows: IndexArray,
    ) -> None:
        """Constructor of a built tree.

        Args:
            feature (IndexArray): split feature per node, -1 for leaves.
            threshold (FloatArray): split threshold per node, NaN for leaves.
            children_left (IndexArray): left child per node, -1 for leaves.
            children_right (IndexArray): right child per node, -1 for leaves.
            value (FloatArray): mean target of the deduplicated rows of each
                node.
            leaf_members (Dict[int, IndexArray]): sorted training rows per
                leaf node.
            fitted_rows (IndexArray): sorted distinct rows the tree was grown
                on.
        """
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.children_left = np.asarray(children_left, dtype=np.int64)
        self.children_right = np.asarray(children_right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.leaf_members = {
            int(node): np.asarray(rows, dtype=np.int64)
            for node, rows in leaf_members.items()
        }
        self.fitted_rows = np.asarray(fitted_rows, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        """Number of nodes."""
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        """Whether ``node`` is a leaf."""
        return self.children_left[node] == TREE_LEAF

    def leaves(self) -> List[int]:
        """Ids of all leaves in increasing order."""
        return sorted(self.leaf_members)

    def apply(self, features: FloatArray) -> IndexArray:
        """Leaf id reached by every row of ``features``.

        Args:
            features (FloatArray): m x d matrix.

        Returns:
            IndexArray: m leaf ids.
        """
        features = np.atleast_2d(features)
        nodes = np.zeros(features.shape[0], dtype=np.int64)
        active = self.children_left[nodes] != TREE_LEAF
        while active.any():
            current = nodes[active]
            go_left = (
                features[active, self.feature[current]]
                <= self.threshold[current]
            )
            nodes[active] = np.where(
                go_left,
                self.children_left[current],
                self.children_right[current],
            )
            active = self.children_left[nodes] != TREE_LEAF
        return nodes

    def to_dict(self) -> Dict[str, Any]:
        """Lossless JSON compatible representation."""
        return {
            "feature": self.feature.tolist(),
            "threshold": format_reals(self.threshold),
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "value": format_reals(self.value),
            "leaf_members": {
                str(node): rows.tolist()
                for node, rows in self.leaf_members.items()
            },
            "fitted_rows": self.fitted_rows.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegressionTree":
        """Inverse of :meth:`to_dict`."""
        return cls(
            feature=data["feature"],
            threshold=parse_reals(data["threshold"]),
            children_left=data["children_left"],
            children_right=data["children_right"],
            value=parse_reals(data["value"]),
            leaf_members={
                int(node): rows for node, rows in data["leaf_members"].items()
            },
            fitted_rows=data["fitted_rows"],
        )


def _sum_of_squares(targets: FloatArray, weights: FloatArray) -> float:
    mean = np.average(targets, weights=weights)
    return float((weights * (targets - mean) ** 2).sum())


def _best_exhaustive_split(
    features: FloatArray,
    targets: FloatArray,
    weights: FloatArray,
    candidates: IndexArray,
    min_leaf_size: int,
) -> Optional[Tuple[int, float, float]]:
    """Best midpoint split over the candidate features.

    The rows are distinct, ``weights`` holds their bootstrap multiplicity.
    The sums of squares are weighted, the leaf size counts distinct rows.
    Ties are resolved towards the lowest feature and the lowest threshold.

    Returns:
        Optional[Tuple[int, float, float]]: feature, threshold and the summed
        children sum of squares, None if no split respects the leaf size.
    """
    m = targets.shape[0]
    best = None
    for feat in candidates:
        order = np.argsort(features[:, feat], kind="stable")
        xs = features[order, feat]
        ys = targets[order]
        ws = weights[order]
        cw = np.cumsum(ws)
        csum = np.cumsum(ws * ys)
        csq = np.cumsum(ws * ys**2)
        # position i splits into rows [0, i] and [i + 1, m)
        pos = np.arange(min_leaf_size - 1, m - min_leaf_size)
        pos = pos[xs[pos] < xs[pos + 1]]
        if pos.size == 0:
            continue
        w_left = cw[pos]
        w_right = cw[-1] - w_left
        sse = (csq[pos] - csum[pos] ** 2 / w_left) + (
            (csq[-1] - csq[pos]) - (csum[-1] - csum[pos]) ** 2 / w_right
        )
        choice = int(np.argmin(sse))
        if best is None or sse[choice] < best[2]:
            i = pos[choice]
            threshold = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= threshold < xs[i + 1]:
                threshold = xs[i]
            best = (int(feat), float(threshold), float(sse[choice]))
    return best


def _best_random_split(
    features: FloatArray,
    targets: FloatArray,
    weights: FloatArray,
    min_leaf_size: int,
    rng: np.random.Generator,
) -> Optional[Tuple[int, float, float]]:
    """Best of one random threshold per feature.

    The threshold of a feature is drawn between its ``min_leaf_size``-th
    smallest and largest value at the node, so every candidate respects the
    leaf size and lies strictly inside the range of the feature.
    """
    m = targets.shape[0]
    best = None
    for feat in range(features.shape[1]):
        column = features[:, feat]
        xs = np.sort(column)
        low, high = xs[min_leaf_size - 1], xs[m - min_leaf_size]
        if not low < high:
            continue
        threshold = rng.uniform(low, high)
        if not low < threshold < high:
            threshold = low + 0.5 * (high - low)
        left = column <= threshold
        sse = _sum_of_squares(targets[left], weights[left]) + _sum_of_squares(
            targets[~left], weights[~left]
        )
        if best is None or sse < best[2]:
            best = (feat, float(threshold), sse)
    return best


def bootstrap_sample(
    n: int, min_leaf_size: int, rng: np.random.Generator
) -> Tuple[IndexArray, FloatArray]:
    """Draw a bootstrap sample of ``n`` rows.

    Samples with fewer than ``min_leaf_size`` distinct rows are redrawn.

    Returns:
        Tuple[IndexArray, FloatArray]: sorted distinct rows and how often each
        of them was drawn.
    """
    while True:
        rows, counts = np.unique(
            rng.integers(0, n, size=n), return_counts=True
        )
        if rows.shape[0] >= min_leaf_size:
            return rows, counts.astype(np.float64)


def grow_tree(
    features: FloatArray,
    targets: FloatArray,
    config: ForestConfig,
    rng: np.random.Generator,
) -> RegressionTree:
    """Grow a single tree.

    A bootstrap sample enters the split criterion with its multiplicities,
    while ``min_leaf_size`` bounds the number of distinct rows per leaf.

    Args:
        features (FloatArray): n x d training features.
        targets (FloatArray): n training targets.
        config (ForestConfig): ensemble definition.
        rng (np.random.Generator): generator of this tree.

    Returns:
        RegressionTree: grown tree.
    """
    n, d = features.shape
    min_leaf = config.min_leaf_size
    weights = np.zeros(n)
    if config.bootstrap:
        sample, counts = bootstrap_sample(n, min_leaf, rng)
        weights[sample] = counts
    else:
        sample = np.arange(n, dtype=np.int64)
        weights[:] = 1.0

    feature: List[int] = []
    threshold: List[float] = []
    left_child: List[int] = []
    right_child: List[int] = []
    value: List[float] = []
    leaf_members: Dict[int, IndexArray] = {}

    def add_node(rows: IndexArray) -> int:
        feature.append(TREE_LEAF)
        threshold.append(np.nan)
        left_child.append(TREE_LEAF)
        right_child.append(TREE_LEAF)
        value.append(float(targets[rows].mean()))
        return len(feature) - 1

    stack = [(add_node(sample), sample, 0)]
    while stack:
        node, rows, depth = stack.pop()
        node_targets = targets[rows]
        node_weights = weights[rows]
        split = None
        if (
            rows.shape[0] >= 2 * min_leaf
            and (config.max_depth is None or depth < config.max_depth)
            and np.ptp(node_targets) > 0
        ):
            node_features = features[rows]
            if config.algorithm == "rf":
                candidates = np.arange(d)
                if config.max_features is not None and config.max_features < d:
                    candidates = np.sort(
                        rng.choice(d, config.max_features, replace=False)
                    )
                split = _best_exhaustive_split(
                    node_features,
                    node_targets,
                    node_weights,
                    candidates,
                    min_leaf,
                )
            else:
                split = _best_random_split(
                    node_features, node_targets, node_weights, min_leaf, rng
                )
            parent = _sum_of_squares(node_targets, node_weights)
            if split is not None and not split[2] < parent - 1e-12 * (
                1.0 + parent
            ):
                split = None
        if split is None:
            leaf_members[node] = rows
            continue
        feat, thr, _ = split
        goes_left = features[rows, feat] <= thr
        left = add_node(rows[goes_left])
        right = add_node(rows[~goes_left])
        feature[node] = feat
        threshold[node] = thr
        left_child[node] = left
        right_child[node] = right
        # right first so the left subtree is numbered first
        stack.append((right, rows[~goes_left], depth + 1))
        stack.append((left, rows[goes_left], depth + 1))

    return RegressionTree(
        feature,
        threshold,
        left_child,
        right_child,
        value,
        leaf_members,
        sample,
    )


class Forest:
    """Ensemble of regression trees over a fixed training set."""

    def __init__(
        self,
        trees: List[RegressionTree],
        config: ForestConfig,
        dataset: Dataset,
    ) -> None:
        """Constructor of a built forest.

        Args:
            trees (List[RegressionTree]): the T trees.
            config (ForestConfig): definition the trees were built with.
            dataset (Dataset): training data the leaf members index into.
        """
        self.trees = trees
        self.config = config
        self.dataset = dataset
        self._training_leaves: Optional[IndexArray] = None

    @property
    def n_trees(self) -> int:
        """Number of trees T."""
        return len(self.trees)

    @property
    def d(self) -> int:
        """Number of features."""
        return self.dataset.d

    def check_dimension(self, features: FloatArray) -> FloatArray:
        """Make an m x d matrix out of the query, check its width."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.d:
            raise DimensionError(self.d, features.shape[1])
        return features

    def apply(self, features: FloatArray) -> IndexArray:
        """Leaf ids of every query in every tree.

        Args:
            features (FloatArray): m x d queries.

        Returns:
            IndexArray: m x T leaf ids.
        """
        features = self.check_dimension(features)
        return np.stack([tree.apply(features) for tree in self.trees], axis=1)

    def training_leaves(self) -> IndexArray:
        """Leaf of every training row per tree, -1 where not fitted.

        Returns:
            IndexArray: n x T leaf ids.
        """
        if self._training_leaves is None:
            leaves = np.full((self.dataset.n, self.n_trees), TREE_LEAF)
            for k, tree in enumerate(self.trees):
                for leaf, rows in tree.leaf_members.items():
                    leaves[rows, k] = leaf
            self._training_leaves = leaves
        return self._training_leaves

    def membership(self, query_leaves: IndexArray) -> np.ndarray:
        """Dense leaf membership of the training rows.

        Args:
            query_leaves (IndexArray): m x T leaf ids of the queries.

        Returns:
            np.ndarray: m x T x n booleans, True where training row j is in
            the leaf query b reaches in tree k.
        """
        return query_leaves[:, :, None] == self.training_leaves().T[None]

    def leaf_lookup(self, k: int, x: FloatArray) -> IndexArray:
        """Training rows sharing the leaf of ``x`` in tree ``k``."""
        tree = self.trees[k]
        leaf = int(tree.apply(self.check_dimension(x))[0])
        return tree.leaf_members[leaf]

    def plain_predict(self, features: FloatArray) -> FloatArray:
        """Forest prediction with equal tree weights 1/T.

        Args:
            features (FloatArray): m x d queries.

        Returns:
            FloatArray: m predictions.
        """
        leaves = self.apply(features)
        means = np.stack(
            [tree.value[leaves[:, k]] for k, tree in enumerate(self.trees)],
            axis=1,
        )
        return means.mean(axis=1)

    def sentences(self, w_index: int) -> List[Optional[IndexArray]]:
        """Leaf member sets containing training row ``w_index``.

        Args:
            w_index (int): training row.

        Returns:
            List[Optional[IndexArray]]: per tree the rows of the leaf holding
            ``w_index``, None for trees which were not grown on it.
        """
        leaves = self.training_leaves()[w_index]
        return [
            None if leaf == TREE_LEAF else tree.leaf_members[int(leaf)]
            for tree, leaf in zip(self.trees, leaves)
        ]

    def leave_one_out_skips(self) -> np.ndarray:
        """Trees taking no part when a training row is left out.

        Returns:
            np.ndarray: n x T booleans, True where the row was not fitted by
            the tree or is the only member of its leaf.
        """
        leaves = self.training_leaves()
        skips = leaves == TREE_LEAF
        for k, tree in enumerate(self.trees):
            sizes = np.zeros(tree.n_nodes, dtype=np.int64)
            for leaf, rows in tree.leaf_members.items():
                sizes[leaf] = rows.size
            fitted = ~skips[:, k]
            skips[fitted, k] = sizes[leaves[fitted, k]] <= 1
        return skips

    def to_dict(self) -> Dict[str, Any]:
        """JSON compatible representation of the trees and their config."""
        return {
            "config": self.config.export_dict(),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], dataset: Dataset) -> "Forest":
        """Inverse of :meth:`to_dict`."""
        return cls(
            [RegressionTree.from_dict(tree) for tree in data["trees"]],
            ForestConfig(**data["config"]),
            dataset,
        )


def build_forest(dataset: Dataset, config: ForestConfig) -> Forest:
    """Build the tree ensemble.

    Trees are independent and are grown on up to ``NAF_THREADS`` threads,
    every tree with its own seed derived from ``config.seed``.

    Args:
        dataset (Dataset): training data.
        config (ForestConfig): ensemble definition.

    Raises:
        ForestError: if n < 2 * min_leaf_size.

    Returns:
        Forest: the built forest.
    """
    if dataset.n < 2 * config.min_leaf_size:
        raise ForestError(
            f"The dataset has {dataset.n} rows, at least "
            f"{2 * config.min_leaf_size} are needed for a minimal leaf size "
            f"of {config.min_leaf_size}."
        )
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)

    def grow(seed: np.random.SeedSequence) -> RegressionTree:
        return grow_tree(
            dataset.features,
            dataset.targets,
            config,
            np.random.default_rng(seed),
        )

    n_threads = min(get_n_threads(), config.n_trees)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(seed) for seed in seeds]
    get_run_logger().info(
        f"Built {config.algorithm} forest with {config.n_trees} trees and "
        f"{sum(len(tree.leaf_members) for tree in trees)} leaves."
    )
    return Forest(trees, config, dataset)


def leaf_lookup(forest: Forest, k: int, x: FloatArray) -> IndexArray:
    """See :meth:`Forest.leaf_lookup`."""
    return forest.leaf_lookup(k, x)


def plain_predict(forest: Forest, x: FloatArray) -> float:
    """Equal weight forest prediction of a single query."""
    return float(forest.plain_predict(x)[0])


def sentences(forest: Forest, w_index: int) -> List[Optional[IndexArray]]:
    """See :meth:`Forest.sentences`."""
    return forest.sentences(w_index)
