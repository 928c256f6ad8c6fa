"""Evaluation, benchmark harness and example-based explanation.

The benchmark repeatedly holds out a random test split, builds one forest per
forest kind on the rest and compares the plain forest with the attention
models on the test rows by the coefficient of determination.

The explanation of a prediction ranks the training rows by the weight with
which they enter the prediction: the product of the leaf weight and the tree
weight, summed over the trees.
"""
import copy
import json
import pathlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import confloat, conlist
from sklearn.metrics import r2_score
from sklearn.model_selection import ShuffleSplit

from naforest.__version__ import __version__
from naforest.base_model import BaseModel
from naforest.dataset import CvPlan, Dataset, gen_two_moons, split_cv
from naforest.exceptions import EvaluationError
from naforest.forest import ForestConfig
from naforest.naf_model import (
    NafModel,
    NetworkConfig,
    init_networks,
    predict,
)
from naforest.training import TrainConfig, train
from naforest.util.logger import get_run_logger
from naforest.util.types import FloatArray
from naforest.util.util_funcs import JSONEncoder

ForestKind = Literal["rf", "ert"]
ModelName = Literal["original", "naf1", "naf3"]
#: How the repetitions of the plan are used, written to the metadata.
PROTOCOL_NOTE = (
    "Every repetition draws a new random train/test split; the reported "
    "value is the R2 on the held out test rows. The k folds of the plan "
    "are only used to select the learning rate if several are given."
)


def r_squared(y_true: FloatArray, y_pred: FloatArray) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot.

    Args:
        y_true (FloatArray): observed values, not all equal.
        y_pred (FloatArray): predictions.

    Raises:
        EvaluationError: for different or zero lengths and constant y_true.

    Returns:
        float: R2, at most 1.
    """
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise EvaluationError(
            f"R2 needs two vectors of equal non-zero length, got "
            f"{y_true.size} and {y_pred.size}."
        )
    if np.ptp(y_true) == 0:
        raise EvaluationError(
            "R2 is undefined for constant observed values."
        )
    return float(r2_score(y_true, y_pred))


class BenchmarkGrid(BaseModel):
    """Model grid of the benchmark."""

    #: forest kinds every model is built on
    forest_kinds: conlist(ForestKind, min_items=1) = ["rf", "ert"]
    #: plain forest (original) and attention architectures
    models: conlist(ModelName, min_items=1) = ["original", "naf1", "naf3"]
    #: candidate learning rates. With more than one, the k-fold split of the
    #: training rows selects one per repetition. Empty uses the training
    #: definition.
    learning_rates: List[confloat(gt=0)] = []


@dataclass
class BenchResult:
    """Test R2 of one (forest kind, model) pair over the repetitions."""

    dataset: str
    forest_kind: str
    model: str
    r2_values: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_r2(self) -> float:
        """Mean over the repetitions."""
        return float(np.mean(self.r2_values))


def _forest_config(base: ForestConfig, kind: str, seed: int) -> ForestConfig:
    definition = base.export_dict()
    # unless set explicitly bootstrap follows the forest kind
    if "bootstrap" not in base.__fields_set__:
        definition.pop("bootstrap", None)
    definition.update(algorithm=kind, seed=seed)
    return ForestConfig(**definition)


def _fit_and_score(
    model: NafModel,
    name: str,
    train_config: TrainConfig,
    test: Dataset,
) -> float:
    if name == "original":
        prediction = model.forest.plain_predict(
            model.standardizer.apply(test.features)
        )
    else:
        train(model, train_config)
        prediction, _ = model.predict_batch(test.features)
    return r_squared(test.targets, prediction)


def _attention_model(
    base: NafModel, name: str, network_config: NetworkConfig
) -> NafModel:
    config = network_config.copy(update={"architecture": name})
    leaf_net, global_net = init_networks(base.d, config)
    return NafModel(
        base.forest, leaf_net, global_net, base.standardizer, config
    )


def _select_learning_rate(
    data: Dataset,
    name: str,
    forest_config: ForestConfig,
    network_config: NetworkConfig,
    train_config: TrainConfig,
    candidates: List[float],
    plan: CvPlan,
    seed: int,
) -> float:
    single = plan.copy(update={"repetitions": 1, "seed": seed})
    folds = split_cv(data.n, single)
    best_rate, best_score = candidates[0], -np.inf
    for rate in candidates:
        scores = []
        for fold in folds[0]:
            rest = np.setdiff1d(np.arange(data.n), fold)
            base = NafModel.create(
                data.subset(rest), forest_config, network_config
            )
            model = _attention_model(base, name, network_config)
            scores.append(
                _fit_and_score(
                    model,
                    name,
                    train_config.copy(update={"learning_rate": rate}),
                    data.subset(fold),
                )
            )
        if np.mean(scores) > best_score:
            best_rate, best_score = rate, float(np.mean(scores))
    return best_rate


def run_benchmark(
    dataset: Dataset,
    grid: BenchmarkGrid,
    plan: CvPlan,
    forest_config: Optional[ForestConfig] = None,
    network_config: Optional[NetworkConfig] = None,
    train_config: Optional[TrainConfig] = None,
) -> List[BenchResult]:
    """Repeated hold-out comparison of the plain forest and NAF.

    Per repetition the rows are split into ``1 - test_fraction`` training
    and ``test_fraction`` test rows; per forest kind one forest is built on
    the training rows and shared by all models of the grid.

    Args:
        dataset (Dataset): the data, original space.
        grid (BenchmarkGrid): forest kinds and models.
        plan (CvPlan): repetitions, folds, seed and test fraction.
        forest_config (Optional[ForestConfig]): forest definition, the
            algorithm and seed are set by the harness.
        network_config (Optional[NetworkConfig]): network definition, the
            architecture is set by the harness.
        train_config (Optional[TrainConfig]): training definition.

    Returns:
        List[BenchResult]: one result per (forest kind, model), in grid
        order.
    """
    forest_config = forest_config or ForestConfig()
    network_config = network_config or NetworkConfig()
    train_config = (train_config or TrainConfig()).copy(
        update={"save_location": None, "tensorboard_log": None}
    )
    logger = get_run_logger()
    snapshot = {
        "forest": forest_config.export_dict(),
        "network": network_config.export_dict(),
        "training": train_config.export_dict(),
        "plan": plan.export_dict(),
    }
    results = {
        (kind, name): BenchResult(dataset.name, kind, name, config=snapshot)
        for kind in grid.forest_kinds
        for name in grid.models
    }
    placeholder = np.zeros((dataset.n, 1))
    for rep, seed in enumerate(plan.repetition_seeds()):
        splitter = ShuffleSplit(
            n_splits=1, test_size=plan.test_fraction, random_state=seed
        )
        train_idx, test_idx = next(splitter.split(placeholder))
        train_data = dataset.subset(np.sort(train_idx))
        test_data = dataset.subset(np.sort(test_idx))
        for kind in grid.forest_kinds:
            config = _forest_config(forest_config, kind, seed)
            base = NafModel.create(train_data, config, network_config)
            for name in grid.models:
                rate_config = train_config
                if name != "original" and len(grid.learning_rates) > 1:
                    rate = _select_learning_rate(
                        train_data,
                        name,
                        config,
                        network_config,
                        train_config,
                        grid.learning_rates,
                        plan,
                        seed,
                    )
                    rate_config = train_config.copy(
                        update={"learning_rate": rate}
                    )
                elif name != "original" and grid.learning_rates:
                    rate_config = train_config.copy(
                        update={"learning_rate": grid.learning_rates[0]}
                    )
                model = (
                    base
                    if name == "original"
                    else _attention_model(base, name, network_config)
                )
                value = _fit_and_score(model, name, rate_config, test_data)
                results[(kind, name)].r2_values.append(value)
                logger.info(
                    f"Repetition {rep}: {dataset.name} {kind} {name} "
                    f"R2 = {value:.4f}"
                )
    return list(results.values())


def write_bench_results(
    results: List[BenchResult],
    path: Union[str, pathlib.Path],
    metadata: Optional[Dict[str, Any]] = None,
) -> None:
    """Write the per repetition rows and one mean row per result.

    A JSON file with the configuration and the protocol note is written next
    to the CSV file.

    Args:
        results (List[BenchResult]): benchmark results.
        path (Union[str, pathlib.Path]): CSV file.
        metadata (Optional[Dict[str, Any]]): additional metadata.
    """
    path = pathlib.Path(path)
    rows = []
    for result in results:
        rows.extend(
            (result.dataset, result.forest_kind, result.model, str(rep), r2)
            for rep, r2 in enumerate(result.r2_values)
        )
        rows.append(
            (
                result.dataset,
                result.forest_kind,
                result.model,
                "mean",
                result.mean_r2,
            )
        )
    frame = pd.DataFrame(
        rows, columns=["dataset", "forest_kind", "model", "repetition", "r2"]
    )
    frame.to_csv(path, index=False, float_format="%.17g")
    meta = {
        "naforest_version": __version__,
        "protocol": PROTOCOL_NOTE,
        "config": results[0].config if results else {},
    }
    meta.update(metadata or {})
    with open(path.with_suffix(".json"), "w") as file:
        json.dump(meta, file, indent=2, sort_keys=True, cls=JSONEncoder)


@dataclass(frozen=True)
class Explanation:
    """Prediction of a query explained by weighted training rows."""

    #: query, original space
    x: FloatArray
    #: reconstruction, original space
    x_hat: FloatArray
    #: prediction
    y_hat: float
    #: (training row, combined weight), largest weight first
    neighbors: List[Tuple[int, float]]
    #: combined weight of every training row
    weights: FloatArray


def combined_weights(model: NafModel, x: FloatArray):
    """Weight of every training row in the prediction of ``x``.

    Returns:
        Tuple[NafOutput, FloatArray]: the prediction and n weights summing to
        one.
    """
    output = predict(model, x)
    weights = np.zeros(model.dataset.n)
    for summary, beta in zip(output.tree_summaries, output.tree_weights):
        if not summary.skipped:
            weights[summary.member_indices] += beta * summary.leaf_weights
    return output, weights


def explain(model: NafModel, x: FloatArray, top_k: int = 10) -> Explanation:
    """Rank the training rows by their weight in the prediction of ``x``.

    Args:
        model (NafModel): trained model.
        x (FloatArray): query, original space.
        top_k (int): number of neighbors returned, clamped to n.

    Returns:
        Explanation: reconstruction, prediction and ranked neighbors.
    """
    output, weights = combined_weights(model, x)
    order = np.lexsort((np.arange(weights.size), -weights))
    top = order[: max(0, min(top_k, weights.size))]
    return Explanation(
        x=np.asarray(x, dtype=np.float64).reshape(-1),
        x_hat=output.x_hat,
        y_hat=output.y_hat,
        neighbors=[(int(idx), float(weights[idx])) for idx in top],
        weights=weights,
    )


def write_explanation(
    explanation: Explanation,
    model: NafModel,
    path: Union[str, pathlib.Path],
) -> None:
    """Write query, reconstruction and neighbors as plot-ready CSV.

    Args:
        explanation (Explanation): explanation to write.
        model (NafModel): the explained model, for the neighbor coordinates.
        path (Union[str, pathlib.Path]): CSV file.
    """
    names = model.dataset.feature_names
    training = model.standardizer.invert(model.dataset.features)
    rows = [
        ["query", "", np.nan, np.nan, *explanation.x],
        [
            "reconstruction",
            "",
            np.nan,
            explanation.y_hat,
            *explanation.x_hat,
        ],
    ]
    for idx, weight in explanation.neighbors:
        rows.append(
            [
                "neighbor",
                str(idx),
                weight,
                model.dataset.targets[idx],
                *training[idx],
            ]
        )
    columns = ["kind", "index", "weight", "y", *names]
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g")


#: Depth limit of the two moons trees, without it every leaf holds one class.
TWO_MOONS_MAX_DEPTH = 3


@dataclass(frozen=True)
class TwoMoonsReport:
    """Result of the two moons explanation experiment."""

    forest_r2: float
    naf_r2: float
    median_reconstruction_trained: float
    median_reconstruction_random: float
    #: share of (training row, tree) pairs skipped by leave-one-out
    skipped_tree_fraction: float


def two_moons_experiment(
    n_train: int = 25,
    n_test: int = 200,
    noise_sd: float = 0.1,
    seed: int = 0,
    forest_config: Optional[ForestConfig] = None,
    network_config: Optional[NetworkConfig] = None,
    train_config: Optional[TrainConfig] = None,
) -> TwoMoonsReport:
    """Explanation experiment on the two moons data.

    An ERT with 500 trees of depth at most three and leaves of at least one
    row is built on ``n_train`` points. The model is trained on q_recon with
    lambda 0.5. It is compared with the plain forest by R2 on ``n_test`` fresh
    points, and its reconstructions with those of the same model before
    training (random weights).

    Returns:
        TwoMoonsReport: both R2 values, the median reconstruction distances
        and the leave-one-out skip rate.
    """
    forest_config = forest_config or ForestConfig(
        n_trees=500,
        algorithm="ert",
        min_leaf_size=1,
        max_depth=TWO_MOONS_MAX_DEPTH,
        seed=seed,
    )
    network_config = network_config or NetworkConfig(seed=seed)
    train_config = train_config or TrainConfig(
        objective="q_recon", lambdas=0.5, epochs=200, seed=seed
    )
    training = gen_two_moons(n_train, noise_sd, seed)
    test = gen_two_moons(n_test, noise_sd, seed + 1)
    model = NafModel.create(training, forest_config, network_config)
    random_model = model.with_networks(
        copy.deepcopy(model.leaf_net), copy.deepcopy(model.global_net)
    )
    skipped = float(model.forest.leave_one_out_skips().mean())
    get_run_logger().info(
        f"Two moons experiment: leave-one-out skips {skipped:.3f} of the "
        "trees per training row."
    )
    train(model, train_config)

    forest_r2 = r_squared(
        test.targets,
        model.forest.plain_predict(model.standardizer.apply(test.features)),
    )
    y_hat, x_hat = model.predict_batch(test.features)
    _, x_hat_random = random_model.predict_batch(test.features)
    report = TwoMoonsReport(
        forest_r2=forest_r2,
        naf_r2=r_squared(test.targets, y_hat),
        median_reconstruction_trained=float(
            np.median(np.linalg.norm(x_hat - test.features, axis=1))
        ),
        median_reconstruction_random=float(
            np.median(np.linalg.norm(x_hat_random - test.features, axis=1))
        ),
        skipped_tree_fraction=skipped,
    )
    get_run_logger().info(f"Two moons experiment: {report}")
    return report
