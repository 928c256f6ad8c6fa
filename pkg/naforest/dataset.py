"""Tabular regression data.

Loading from CSV, the synthetic benchmark generators, feature standardization
and the repeated k-fold split plan used by the benchmark harness.

The generators are the canonical scikit-learn definitions: Friedman 1-3,
two moons (moon label used as real valued target), a dense linear model and
the sparse uncorrelated linear model. The diabetes data bundled with
scikit-learn is available as a real world set.
"""
import pathlib
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import conint, confloat, validator
from sklearn.datasets import (
    load_diabetes,
    make_friedman1,
    make_friedman2,
    make_friedman3,
    make_moons,
    make_regression,
    make_sparse_uncorrelated,
)
from sklearn.model_selection import KFold

from naforest.base_model import BaseModel
from naforest.exceptions import DatasetError, ParserException
from naforest.util.types import FloatArray, IndexArray

#: Names of the built-in generators.
GENERATOR_NAMES = (
    "friedman1",
    "friedman2",
    "friedman3",
    "two_moons",
    "linear",
    "sparse",
    "diabetes",
)
#: Name used in configurations to read a CSV file instead.
CSV_DATASET_NAME = "csv"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with regression targets.

    Immutable after construction, the arrays are set read-only.
    """

    #: n x d feature matrix.
    features: FloatArray
    #: n targets.
    targets: FloatArray
    #: Optional names of the d feature columns.
    feature_names: Optional[List[str]] = None
    #: Name of the dataset, used in result files.
    name: str = "dataset"

    def __post_init__(self):
        """Check shapes and finiteness and freeze the arrays."""
        features = np.array(self.features, dtype=np.float64, copy=True)
        targets = np.array(self.targets, dtype=np.float64, copy=True)
        if features.ndim != 2 or min(features.shape) < 1:
            raise DatasetError(
                "The feature matrix needs at least one row and one column, "
                f"got shape {features.shape}."
            )
        targets = targets.reshape(-1)
        if targets.shape[0] != features.shape[0]:
            raise DatasetError(
                f"Got {targets.shape[0]} targets for {features.shape[0]} rows."
            )
        if not (np.isfinite(features).all() and np.isfinite(targets).all()):
            raise DatasetError("The dataset contains NaN or infinite values.")
        names = self.feature_names
        if names is None:
            names = [f"x{idx + 1}" for idx in range(features.shape[1])]
        elif len(names) != features.shape[1]:
            raise DatasetError(
                f"Got {len(names)} feature names for {features.shape[1]} "
                "columns."
            )
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", list(names))

    @property
    def n(self) -> int:
        """Number of rows."""
        return self.features.shape[0]

    @property
    def d(self) -> int:
        """Number of features."""
        return self.features.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows ``indices`` of this dataset as a new dataset."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.targets[indices],
            self.feature_names,
            self.name,
        )

    def with_features(self, features: FloatArray) -> "Dataset":
        """Same targets with replaced features."""
        return Dataset(features, self.targets, self.feature_names, self.name)


@dataclass(frozen=True)
class Standardizer:
    """Per column affine map to zero mean and unit population deviation."""

    #: d column means.
    means: FloatArray
    #: d column standard deviations, degenerate columns clamped to 1.
    std_devs: FloatArray
    #: d flags marking constant columns.
    degenerate: FloatArray = field(default=None)

    def __post_init__(self):
        """Freeze the arrays."""
        means = np.array(self.means, dtype=np.float64).reshape(-1)
        std_devs = np.array(self.std_devs, dtype=np.float64).reshape(-1)
        degenerate = (
            np.zeros(means.shape, dtype=bool)
            if self.degenerate is None
            else np.array(self.degenerate, dtype=bool).reshape(-1)
        )
        if means.shape != std_devs.shape or means.shape != degenerate.shape:
            raise DatasetError("Standardizer arrays differ in length.")
        if not (std_devs > 0).all():
            raise DatasetError("Standard deviations need to be positive.")
        for array in (means, std_devs, degenerate):
            array.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std_devs", std_devs)
        object.__setattr__(self, "degenerate", degenerate)

    @classmethod
    def fit(cls, features: FloatArray) -> "Standardizer":
        """Fit means and population standard deviations.

        Args:
            features (FloatArray): n x d matrix with n >= 2.

        Returns:
            Standardizer: fitted standardizer.
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise DatasetError(
                "At least two rows are needed to fit a standardizer."
            )
        means = features.mean(axis=0)
        std_devs = features.std(axis=0)
        degenerate = ~(std_devs > 0)
        std_devs = np.where(degenerate, 1.0, std_devs)
        return cls(means, std_devs, degenerate)

    @property
    def d(self) -> int:
        """Number of features."""
        return self.means.shape[0]

    def apply(self, features: FloatArray) -> FloatArray:
        """Map features into standardized space."""
        return (np.asarray(features, dtype=np.float64) - self.means) / (
            self.std_devs
        )

    def invert(self, features: FloatArray) -> FloatArray:
        """Map standardized features back into the original space."""
        return np.asarray(features, dtype=np.float64) * self.std_devs + (
            self.means
        )


def standardize(dataset: Dataset) -> Tuple[Dataset, Standardizer]:
    """Standardize the features of a dataset.

    Args:
        dataset (Dataset): dataset with n >= 2.

    Returns:
        Tuple[Dataset, Standardizer]: standardized copy and the fitted map.
    """
    standardizer = Standardizer.fit(dataset.features)
    return dataset.with_features(standardizer.apply(dataset.features)), (
        standardizer
    )


def apply(standardizer: Standardizer, features: FloatArray) -> FloatArray:
    """Apply a fitted standardizer to a feature vector or matrix."""
    return standardizer.apply(features)


class CvPlan(BaseModel):
    """Repeated k-fold plan.

    Each repetition draws a fresh random partition. The benchmark harness
    additionally holds out ``test_fraction`` of the rows per repetition.
    """

    #: number of folds
    k: conint(ge=2) = 3
    #: number of repetitions
    repetitions: conint(ge=1) = 10
    #: seed of the plan, every repetition derives its own seed from it
    seed: conint(ge=0) = 0
    #: fraction of the rows held out for testing by the benchmark
    test_fraction: confloat(gt=0, lt=1) = 0.2

    def repetition_seeds(self) -> List[int]:
        """Independent 32 bit seeds, one per repetition."""
        states = np.random.SeedSequence(self.seed).spawn(self.repetitions)
        return [int(state.generate_state(1)[0]) for state in states]


def split_cv(n: int, plan: CvPlan) -> List[List[IndexArray]]:
    """Partition ``range(n)`` into ``plan.k`` folds per repetition.

    The first ``n % k`` folds hold one row more than the others.

    Args:
        n (int): number of rows.
        plan (CvPlan): plan to follow.

    Raises:
        DatasetError: if n < k.

    Returns:
        List[List[IndexArray]]: per repetition the k sorted folds.
    """
    if n < plan.k:
        raise DatasetError(
            f"Can not split {n} rows into {plan.k} folds."
        )
    folds = []
    placeholder = np.zeros((n, 1))
    for seed in plan.repetition_seeds():
        splitter = KFold(n_splits=plan.k, shuffle=True, random_state=seed)
        folds.append(
            [
                np.sort(test_idx).astype(np.int64)
                for _, test_idx in splitter.split(placeholder)
            ]
        )
    return folds


def _read_raw_csv(path: Union[str, pathlib.Path]) -> pd.DataFrame:
    path = pathlib.Path(path)
    if not path.is_file():
        raise DatasetError(f"Could not find the given file: {path}.")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as err:
        raise DatasetError(f"The file {path} is empty.") from err
    except pd.errors.ParserError as err:
        # pandas counts file lines including the header
        match = re.search(r"line (\d+)", str(err))
        row = int(match.group(1)) - 1 if match else None
        raise DatasetError(
            "Malformed row, the number of fields differs from the header",
            row=row,
        ) from err
    # short rows are padded with NaN by pandas
    short_rows = frame.isna().any(axis=1).to_numpy().nonzero()[0]
    if short_rows.size:
        raise DatasetError(
            "Malformed row, the number of fields differs from the header",
            row=int(short_rows[0]) + 1,
        )
    return frame


def _to_numeric(frame: pd.DataFrame) -> FloatArray:
    values = np.empty(frame.shape, dtype=np.float64)
    for col_idx, column in enumerate(frame.columns):
        cells = frame[column].str.strip()
        bad = pd.to_numeric(cells, errors="coerce").isna()
        bad = bad.to_numpy().nonzero()[0]
        if bad.size:
            raise DatasetError(
                f"Non-numeric cell '{frame[column].iloc[bad[0]]}'",
                row=int(bad[0]) + 1,
                column=col_idx + 1,
            )
        # pd.to_numeric is not exact for 17 significant digits
        values[:, col_idx] = cells.to_numpy(dtype=str).astype(np.float64)
    return values


def read_feature_csv(
    path: Union[str, pathlib.Path]
) -> Tuple[FloatArray, List[str]]:
    """Read a CSV file holding only feature columns.

    A header-only file gives a matrix with zero rows.

    Args:
        path (Union[str, pathlib.Path]): UTF-8 CSV file with a header row.

    Returns:
        Tuple[FloatArray, List[str]]: matrix and column names.
    """
    frame = _read_raw_csv(path)
    return _to_numeric(frame), [str(col) for col in frame.columns]


def load_csv(
    path: Union[str, pathlib.Path], target_column: Union[str, int]
) -> Dataset:
    """Load a regression dataset from CSV.

    Args:
        path (Union[str, pathlib.Path]): UTF-8 comma separated file with one
            header row.
        target_column (Union[str, int]): Name or (possibly negative) index of
            the target column.

    Raises:
        DatasetError: malformed rows, missing target column or non-numeric
            cells, with the data row and column of the problem.

    Returns:
        Dataset: dataset with d = columns - 1.
    """
    frame = _read_raw_csv(path)
    columns = [str(col) for col in frame.columns]
    if isinstance(target_column, str) and target_column in columns:
        target_idx = columns.index(target_column)
    elif isinstance(target_column, int) and (
        -len(columns) <= target_column < len(columns)
    ):
        target_idx = target_column % len(columns)
    else:
        raise DatasetError(
            f"Target column {target_column!r} is not present. Available "
            f"columns are {columns}."
        )
    if len(columns) < 2:
        raise DatasetError("The file needs at least one feature column.")
    if frame.shape[0] == 0:
        raise DatasetError(f"The file {path} holds no data rows.")
    values = _to_numeric(frame)
    feature_idx = [idx for idx in range(len(columns)) if idx != target_idx]
    return Dataset(
        features=values[:, feature_idx],
        targets=values[:, target_idx],
        feature_names=[columns[idx] for idx in feature_idx],
        name=pathlib.Path(path).stem,
    )


def write_csv(dataset: Dataset, path: Union[str, pathlib.Path]) -> None:
    """Write a dataset with its feature names and a ``y`` target column."""
    frame = pd.DataFrame(dataset.features, columns=dataset.feature_names)
    frame["y"] = dataset.targets
    frame.to_csv(path, index=False, float_format="%.17g")


def _check_n(n: int, minimum: int) -> None:
    if n < minimum:
        raise DatasetError(f"At least {minimum} samples are needed, got {n}.")


def gen_friedman(
    variant: int, n: int, noise_sd: float = 0.0, seed: int = 0
) -> Dataset:
    """Friedman benchmark regression problems.

    Variant 1 has 10 inputs uniform on [0, 1] of which 5 are used. Variants 2
    and 3 have 4 inputs with x1 in [0, 100], x2 in [40 pi, 560 pi],
    x3 in [0, 1] and x4 in [1, 11].

    Args:
        variant (int): 1, 2 or 3.
        n (int): number of samples, >= 1.
        noise_sd (float): standard deviation of the additive gaussian noise.
        seed (int): random seed.

    Returns:
        Dataset: generated dataset.
    """
    _check_n(n, 1)
    if noise_sd < 0:
        raise DatasetError("The noise standard deviation can not be negative.")
    if variant == 1:
        features, targets = make_friedman1(
            n_samples=n, n_features=10, noise=noise_sd, random_state=seed
        )
    elif variant == 2:
        features, targets = make_friedman2(
            n_samples=n, noise=noise_sd, random_state=seed
        )
    elif variant == 3:
        features, targets = make_friedman3(
            n_samples=n, noise=noise_sd, random_state=seed
        )
    else:
        raise DatasetError(f"Unknown Friedman variant {variant}.")
    return Dataset(features, targets, name=f"friedman{variant}")


def gen_two_moons(n: int, noise_sd: float = 0.0, seed: int = 0) -> Dataset:
    """Two interleaving half circles, the moon label is the target.

    The outer moon holds ``n // 2`` points, the inner one the rest.

    Args:
        n (int): number of samples, >= 2.
        noise_sd (float): standard deviation of the gaussian noise added to
            the coordinates.
        seed (int): random seed.

    Returns:
        Dataset: d = 2, targets in {0, 1}.
    """
    _check_n(n, 2)
    features, labels = make_moons(
        n_samples=n, noise=noise_sd or None, random_state=seed
    )
    return Dataset(features, labels.astype(np.float64), name="two_moons")


def gen_linear(
    n: int,
    d: int = 100,
    n_informative: int = 10,
    noise_sd: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Random dense linear model with gaussian inputs.

    Args:
        n (int): number of samples.
        d (int): number of features.
        n_informative (int): number of features with non-zero coefficient.
        noise_sd (float): standard deviation of the target noise.
        seed (int): random seed.

    Returns:
        Dataset: generated dataset.
    """
    _check_n(n, 1)
    features, targets = make_regression(
        n_samples=n,
        n_features=d,
        n_informative=min(n_informative, d),
        noise=noise_sd,
        random_state=seed,
    )
    return Dataset(features, targets, name="linear")


def gen_sparse(n: int, d: int = 10, seed: int = 0) -> Dataset:
    """Sparse uncorrelated linear model.

    Only the first four of the d standard normal features enter the target,
    the target noise has unit standard deviation.

    Args:
        n (int): number of samples.
        d (int): number of features, >= 4.
        seed (int): random seed.

    Returns:
        Dataset: generated dataset.
    """
    _check_n(n, 1)
    if d < 4:
        raise DatasetError("The sparse dataset needs at least 4 features.")
    features, targets = make_sparse_uncorrelated(
        n_samples=n, n_features=d, random_state=seed
    )
    return Dataset(features, targets, name="sparse")


def gen_diabetes(n: Optional[int] = None, seed: int = 0) -> Dataset:
    """Diabetes progression data bundled with scikit-learn.

    442 patients with 10 mean centered and scaled baseline features.

    Args:
        n (Optional[int]): number of rows drawn without replacement, None
            keeps all of them in their original order.
        seed (int): random seed of the drawn rows.

    Returns:
        Dataset: d = 10.
    """
    bunch = load_diabetes()
    dataset = Dataset(
        bunch.data, bunch.target, list(bunch.feature_names), "diabetes"
    )
    if n is None:
        return dataset
    _check_n(n, 1)
    if n > dataset.n:
        raise DatasetError(
            f"The diabetes data holds {dataset.n} rows, asked for {n}."
        )
    rows = np.random.default_rng(seed).choice(dataset.n, n, replace=False)
    return dataset.subset(np.sort(rows))


class DatasetDefinition(BaseModel):
    """Selection of the dataset of a run.

    Either one of the generators or a CSV file.
    """

    #: friedman1, friedman2, friedman3, two_moons, linear, sparse, diabetes
    #: or csv
    name: str = "friedman2"
    #: path to the CSV file, only for name csv
    path: Optional[pathlib.Path] = None
    #: target column of the CSV file (name or index)
    target_column: Union[int, str] = -1
    #: number of generated samples, diabetes keeps all rows unless set
    n_samples: conint(ge=1) = 100
    #: standard deviation of the generator noise; None uses the generator
    #: default (0 for friedman and two_moons, 1 for linear)
    noise: Optional[confloat(ge=0)] = None
    #: number of features of the linear and sparse generators
    n_features: Optional[conint(ge=1)] = None
    #: number of informative features of the linear generator
    n_informative: conint(ge=1) = 10
    #: generator seed
    seed: conint(ge=0) = 0

    @validator("name")
    @classmethod
    def check_known_name(cls, v: str) -> str:
        """Only generator names and csv are valid.

        Args:
            v (str): given name

        Raises:
            ParserException: if the name is unknown, lists the valid names.

        Returns:
            str: the name
        """
        if v not in (*GENERATOR_NAMES, CSV_DATASET_NAME):
            raise ParserException(
                "DatasetDefinition",
                "name",
                f"Unknown dataset {v!r}. Valid names are "
                f"{', '.join((*GENERATOR_NAMES, CSV_DATASET_NAME))}.",
            )
        return v

    @validator("path", always=True)
    @classmethod
    def check_path_for_csv(cls, v, values: Dict[str, Any]):
        """The csv dataset needs a path."""
        if values.get("name") == CSV_DATASET_NAME and v is None:
            raise ParserException(
                "DatasetDefinition", "path", "The csv dataset needs a path."
            )
        return v

    def get_dataset(self) -> Dataset:
        """Load or generate the defined dataset."""
        noise = self.noise
        if self.name == CSV_DATASET_NAME:
            dataset = load_csv(self.path, self.target_column)
        elif self.name.startswith("friedman"):
            dataset = gen_friedman(
                int(self.name[-1]), self.n_samples, noise or 0.0, self.seed
            )
        elif self.name == "two_moons":
            dataset = gen_two_moons(self.n_samples, noise or 0.0, self.seed)
        elif self.name == "diabetes":
            dataset = gen_diabetes(
                self.n_samples
                if "n_samples" in self.__fields_set__
                else None,
                self.seed,
            )
        elif self.name == "linear":
            dataset = gen_linear(
                self.n_samples,
                self.n_features or 100,
                self.n_informative,
                1.0 if noise is None else noise,
                self.seed,
            )
        else:
            dataset = gen_sparse(
                self.n_samples, self.n_features or 10, self.seed
            )
        self.get_logger().info(
            f"Dataset {dataset.name} with n = {dataset.n} and d = "
            f"{dataset.d}."
        )
        return dataset
