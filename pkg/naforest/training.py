"""End-to-end training of the attention networks.

The forest is frozen, only the parameters of the leaf network (theta) and of
the global network (psi) are learned. Two objectives are available:

* ``y_mse``: sum over the training rows of the squared prediction error.
* ``q_recon``: sum over the training rows of the weighted squared error of
  the reconstructed row (x_hat, y_hat), the feature errors weighted by
  lambda_i and the target error by one.

In the leave-one-out mode (default) every training row is removed from its
own leaves and trees which were not grown on the row take no part. Gradients
come from reverse-mode automatic differentiation.
"""
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import confloat, conint, validator

from naforest.base_model import BaseModel
from naforest.callback import (
    LossHistoryCallback,
    TensorBoardCallback,
    TrainingCallback,
)
from naforest.dataset import Dataset
from naforest.exceptions import (
    DatasetError,
    ParserException,
    TrainingDivergedError,
)
from naforest.naf_model import (
    DTYPE,
    NafModel,
    TreeSummary,
    global_attention,
    leaf_attention,
)
from naforest.util.types import FloatArray, IndexArray

#: Number of words whose graph is held in memory at once.
GRADIENT_CHUNK = 128
#: Full batch training up to this many rows if no batch size is given.
FULL_BATCH_LIMIT = 500
#: Batch size used above FULL_BATCH_LIMIT rows.
DEFAULT_BATCH_SIZE = 256

Objective = Literal["y_mse", "q_recon"]
UnitReal = confloat(ge=0, le=1)


class TrainConfig(BaseModel):
    """Definition of the network training."""

    #: loss to minimize
    objective: Objective = "y_mse"
    #: weights lambda_i of the feature reconstruction errors in q_recon. A
    #: scalar is used for every feature.
    lambdas: Union[UnitReal, List[UnitReal]] = 0.0
    #: step size of the Adam optimizer
    learning_rate: confloat(gt=0) = 1e-2
    #: number of passes over the training rows
    epochs: conint(ge=0) = 100
    #: words per optimizer step, None is full batch up to 500 rows
    batch_size: Optional[conint(ge=1)] = None
    #: seed of the batch shuffling
    seed: conint(ge=0) = 0
    #: remove every training row from its own leaves
    leave_one_out: bool = True
    #: compare the gradients with finite differences before training
    gradient_check: bool = False
    #: TensorBoard log directory, None disables TensorBoard
    tensorboard_log: Optional[str] = None

    @validator("objective", pre=True)
    @classmethod
    def accept_dashes(cls, v):
        """Accept the command line spelling y-mse and q-recon."""
        return v.replace("-", "_") if isinstance(v, str) else v

    def lambda_vector(self, d: int) -> FloatArray:
        """Lambdas broadcast to the d features.

        Raises:
            ParserException: if a list of the wrong length was given.
        """
        if isinstance(self.lambdas, list):
            if len(self.lambdas) != d:
                raise ParserException(
                    "TrainConfig",
                    "lambdas",
                    f"Got {len(self.lambdas)} lambdas for {d} features.",
                )
            return np.asarray(self.lambdas, dtype=np.float64)
        return np.full(d, float(self.lambdas))

    def resolved_batch_size(self, n: int) -> int:
        """Batch size used for n training rows."""
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= FULL_BATCH_LIMIT else DEFAULT_BATCH_SIZE


@dataclass(frozen=True)
class Word:
    """One training row: features, target and its row index."""

    x: FloatArray
    y: float
    index: int


@dataclass(frozen=True)
class GradReport:
    """Analytic against central finite difference gradient."""

    analytic: FloatArray
    numeric: FloatArray
    max_relative_error: float


@dataclass
class TrainResult:
    """Trained model and the loss of every epoch."""

    model: NafModel
    #: (epoch, full training loss) after every epoch
    history: List[Tuple[int, float]] = field(default_factory=list)
    #: full training loss before the first update
    initial_loss: float = math.nan

    @property
    def final_loss(self) -> float:
        """Loss after the last epoch, the initial loss without epochs."""
        return self.history[-1][1] if self.history else self.initial_loss


def _check_dataset(model: NafModel, dataset: Optional[Dataset]) -> None:
    if dataset is not None and (
        dataset.n != model.dataset.n or dataset.d != model.dataset.d
    ):
        raise DatasetError(
            "The loss is defined on the training rows of the model, got a "
            f"dataset of shape ({dataset.n}, {dataset.d}) for a model "
            f"trained on ({model.dataset.n}, {model.dataset.d})."
        )


def words(model: NafModel) -> List[Word]:
    """Training rows of the model as words, standardized features."""
    data = model.dataset
    return [
        Word(data.features[idx], float(data.targets[idx]), idx)
        for idx in range(data.n)
    ]


def batch_loss(
    model: NafModel,
    rows: IndexArray,
    objective: Objective,
    lambdas: Optional[FloatArray] = None,
    leave_one_out: bool = True,
) -> torch.Tensor:
    """Differentiable loss summed over the training rows ``rows``.

    Rows without any tree left take no part.

    Args:
        model (NafModel): the model.
        rows (IndexArray): training rows forming the batch.
        objective (Objective): y_mse or q_recon.
        lambdas (Optional[FloatArray]): d feature weights of q_recon.
        leave_one_out (bool): remove every row from its own leaves.

    Returns:
        torch.Tensor: scalar loss.
    """
    rows = np.asarray(rows, dtype=np.int64)
    data = model.dataset
    z = torch.as_tensor(data.features[rows], dtype=DTYPE)
    y = torch.as_tensor(data.targets[rows], dtype=DTYPE)
    if leave_one_out:
        leaves = model.forest.training_leaves()[rows]
        result = model.attend(z, leaves, exclude=rows)
    else:
        result = model.attend(z, model.forest.apply(data.features[rows]))
    valid = result.word_valid
    per_word = (result.y_hat - y) ** 2
    if objective == "q_recon":
        weights = torch.as_tensor(
            np.zeros(data.d) if lambdas is None else lambdas, dtype=DTYPE
        )
        per_word = per_word + ((result.x_hat - z) ** 2 * weights).sum(dim=-1)
    return torch.where(valid, per_word, torch.zeros_like(per_word)).sum()


def _full_loss(
    model: NafModel,
    objective: Objective,
    lambdas: Optional[FloatArray],
    leave_one_out: bool,
    rows: Optional[IndexArray] = None,
) -> float:
    if rows is None:
        rows = np.arange(model.dataset.n)
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(rows), GRADIENT_CHUNK):
            total += float(
                batch_loss(
                    model,
                    rows[start : start + GRADIENT_CHUNK],
                    objective,
                    lambdas,
                    leave_one_out,
                )
            )
    return total


def loss_y_mse(
    model: NafModel,
    dataset: Optional[Dataset] = None,
    leave_one_out: bool = True,
) -> float:
    """Sum of squared prediction errors over the training rows.

    Args:
        model (NafModel): the model.
        dataset (Optional[Dataset]): the training data of the model, only
            checked for its shape.
        leave_one_out (bool): remove every row from its own leaves.

    Returns:
        float: non-negative loss.
    """
    _check_dataset(model, dataset)
    return _full_loss(model, "y_mse", None, leave_one_out)


def loss_q_recon(
    model: NafModel,
    dataset: Optional[Dataset] = None,
    lambdas: Union[float, Sequence[float]] = 0.0,
) -> float:
    """Weighted reconstruction loss, always leave-one-out.

    Args:
        model (NafModel): the model.
        dataset (Optional[Dataset]): the training data of the model, only
            checked for its shape.
        lambdas (Union[float, Sequence[float]]): feature weights in [0, 1].

    Returns:
        float: non-negative loss.
    """
    _check_dataset(model, dataset)
    if not np.isscalar(lambdas):
        lambdas = [float(value) for value in lambdas]
    lambda_vector = TrainConfig(lambdas=lambdas).lambda_vector(model.d)
    return _full_loss(model, "q_recon", lambda_vector, True)


def word_loss(
    model: NafModel,
    word: Word,
    objective: Objective,
    lambdas: Optional[FloatArray] = None,
) -> float:
    """Leave-one-out loss of one word, tree by tree.

    Uses the sentences of the word: in every tree grown on the word the word
    is removed from its leaf, the other trees take no part.

    Args:
        model (NafModel): the model.
        word (Word): training row, standardized features.
        objective (Objective): y_mse or q_recon.
        lambdas (Optional[FloatArray]): d feature weights of q_recon.

    Returns:
        float: loss contribution of the word, 0 if every tree is skipped.
    """
    x = model.standardizer.invert(word.x)
    summaries = []
    for k, sentence in enumerate(model.forest.sentences(word.index)):
        if sentence is None:
            summaries.append(
                TreeSummary(k, None, None, None, np.empty(0, np.int64), True)
            )
        else:
            summaries.append(leaf_attention(model, k, x, exclude=word.index))
    output = global_attention(model, x, summaries)
    if output.fallback:
        return 0.0
    loss = (output.y_hat - word.y) ** 2
    if objective == "q_recon" and lambdas is not None:
        x_hat = model.standardizer.apply(output.x_hat)
        loss += float((np.asarray(lambdas) * (x_hat - word.x) ** 2).sum())
    return float(loss)


def _accumulate_gradients(
    model: NafModel,
    rows: IndexArray,
    objective: Objective,
    lambdas: Optional[FloatArray],
    leave_one_out: bool,
) -> float:
    total = 0.0
    for start in range(0, len(rows), GRADIENT_CHUNK):
        loss = batch_loss(
            model,
            rows[start : start + GRADIENT_CHUNK],
            objective,
            lambdas,
            leave_one_out,
        )
        loss.backward()
        total += float(loss.detach())
    return total


def gradients(
    model: NafModel,
    batch: IndexArray,
    objective: Objective = "y_mse",
    lambdas: Optional[FloatArray] = None,
    leave_one_out: bool = True,
) -> torch.Tensor:
    """Gradient of the batch loss with respect to (theta, psi).

    Args:
        model (NafModel): the model.
        batch (IndexArray): non-empty list of training rows, duplicates
            count twice.
        objective (Objective): y_mse or q_recon.
        lambdas (Optional[FloatArray]): d feature weights of q_recon.
        leave_one_out (bool): remove every row from its own leaves.

    Returns:
        torch.Tensor: flattened gradient in the order of
        :meth:`NafModel.parameter_vector`.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("The batch needs at least one row.")
    params = model.parameters()
    for param in params:
        param.grad = None
    _accumulate_gradients(model, batch, objective, lambdas, leave_one_out)
    grads = [
        torch.zeros_like(param) if param.grad is None else param.grad
        for param in params
    ]
    flat = torch.nn.utils.parameters_to_vector(grads).detach().clone()
    for param in params:
        param.grad = None
    return flat


def gradient_check(
    model: NafModel,
    batch: Optional[IndexArray] = None,
    objective: Objective = "y_mse",
    lambdas: Optional[FloatArray] = None,
    leave_one_out: bool = True,
    step: float = 1e-5,
) -> GradReport:
    """Compare :func:`gradients` with central finite differences.

    The relative error is max_i |a_i - f_i| / max(|a|_inf, |f|_inf, 1e-12).

    Args:
        model (NafModel): the model, parameters are restored afterwards.
        batch (Optional[IndexArray]): training rows, default all.
        objective (Objective): y_mse or q_recon.
        lambdas (Optional[FloatArray]): d feature weights of q_recon.
        leave_one_out (bool): remove every row from its own leaves.
        step (float): finite difference step.

    Returns:
        GradReport: both gradients and the maximal relative error.
    """
    if batch is None:
        batch = np.arange(model.dataset.n)
    batch = np.asarray(batch, dtype=np.int64)
    analytic = gradients(model, batch, objective, lambdas, leave_one_out)
    original = model.parameter_vector()
    numeric = torch.zeros_like(original)
    for idx in range(original.numel()):
        shifted = original.clone()
        shifted[idx] += step
        model.set_parameter_vector(shifted)
        upper = _full_loss(model, objective, lambdas, leave_one_out, batch)
        shifted[idx] -= 2 * step
        model.set_parameter_vector(shifted)
        lower = _full_loss(model, objective, lambdas, leave_one_out, batch)
        numeric[idx] = (upper - lower) / (2 * step)
    model.set_parameter_vector(original)
    scale = max(
        float(analytic.abs().max()), float(numeric.abs().max()), 1e-12
    )
    error = float((analytic - numeric).abs().max()) / scale
    return GradReport(analytic.numpy(), numeric.numpy(), error)


def train(
    model: NafModel,
    config: TrainConfig,
    dataset: Optional[Dataset] = None,
    callbacks: Optional[List[TrainingCallback]] = None,
) -> TrainResult:
    """Train theta and psi with Adam, the forest stays frozen.

    Every epoch visits the training rows in an order drawn from
    ``config.seed``, so identical seeds give identical parameters.

    Args:
        model (NafModel): model to train in place.
        config (TrainConfig): training definition.
        dataset (Optional[Dataset]): the training data of the model, only
            checked for its shape.
        callbacks (Optional[List[TrainingCallback]]): informed after every
            epoch.

    Raises:
        TrainingDivergedError: if the loss becomes non-finite.

    Returns:
        TrainResult: the model and its loss history.
    """
    _check_dataset(model, dataset)
    logger = config.get_logger()
    callbacks = list(callbacks or [])
    if config.tensorboard_log is not None:
        callbacks.append(TensorBoardCallback(config.tensorboard_log))
    if config.save_location is not None:
        callbacks.append(
            LossHistoryCallback(config.save_location / "loss_history.csv")
        )
    n = model.dataset.n
    lambdas = config.lambda_vector(model.d)
    objective, loo = config.objective, config.leave_one_out
    if config.gradient_check:
        report = gradient_check(model, None, objective, lambdas, loo)
        logger.info(
            "Gradient check: maximal relative error "
            f"{report.max_relative_error:.3e}."
        )

    initial = _full_loss(model, objective, lambdas, loo)
    result = TrainResult(model=model, initial_loss=initial)
    logger.info(
        f"Training {model.config.architecture} on {n} rows for "
        f"{config.epochs} epochs with objective {objective}, initial loss "
        f"{initial:.6g}."
    )
    batch_size = config.resolved_batch_size(n)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            optimizer.zero_grad()
            batch = order[start : start + batch_size]
            loss = _accumulate_gradients(model, batch, objective, lambdas, loo)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, config.learning_rate)
            optimizer.step()
        epoch_loss = _full_loss(model, objective, lambdas, loo)
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, config.learning_rate)
        result.history.append((epoch, epoch_loss))
        logger.debug(f"Epoch {epoch}: loss {epoch_loss:.10g}")
        for callback in callbacks:
            callback.on_epoch_end(epoch, epoch_loss)
    for callback in callbacks:
        callback.on_training_end()
    logger.info(f"Training finished with loss {result.final_loss:.6g}.")
    return result
