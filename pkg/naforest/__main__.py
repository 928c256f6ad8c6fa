#!/usr/bin/env python
"""naforest main file and command line starting point.

File defines the main entry point of the package if it is called via the
command line. (via $python -m naforest; or $naforest)

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import pathlib
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
import pydantic
import sklearn
import torch

from naforest.__version__ import __version__
from naforest.dataset import read_feature_csv, write_csv
from naforest.evaluation import (
    explain,
    run_benchmark,
    write_bench_results,
    write_explanation,
)
from naforest.exceptions import (
    DimensionError,
    NaforestError,
    ParserException,
)
from naforest.model_file import load_model, save_model
from naforest.naf_model import NafModel
from naforest.run_config import (
    RunConfig,
    apply_overrides,
    read_definition,
)
from naforest.training import train

#: Output directory if neither --out nor the run definition name one.
DEFAULT_OUT = "naforest_results/{}"
EXIT_SUCCESS = 0
EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE_ERROR = 2


def _versions() -> str:
    return (
        f"naforest version: {__version__}; "
        f"torch version: {torch.__version__}; "
        f"numpy version: {np.__version__}; "
        f"scikit-learn version: {sklearn.__version__}"
    )


def cmd_train(config: RunConfig) -> pathlib.Path:
    """Build the forest, train the networks and save the model."""
    dataset = config.dataset.get_dataset()
    model = NafModel.create(dataset, config.forest, config.network)
    result = train(model, config.training)
    non_increasing = result.final_loss <= result.initial_loss
    config.get_logger().info(
        f"Loss went from {result.initial_loss:.6g} to "
        f"{result.final_loss:.6g}, non-increasing: {non_increasing}."
    )
    training = config.training.export_dict()
    training.update(
        initial_loss=result.initial_loss,
        final_loss=result.final_loss,
        non_increasing=non_increasing,
        versions=_versions(),
    )
    return save_model(model, config.save_location / "model.json", training)


def cmd_predict(
    config: RunConfig, model_path: pathlib.Path, input_path: pathlib.Path
) -> pathlib.Path:
    """Predict every row of a feature CSV file.

    The output holds ``y_hat`` and the reconstruction ``x_hat_<feature>``.
    """
    model = load_model(model_path)
    features, _ = read_feature_csv(input_path)
    if features.shape[1] != model.d:
        raise DimensionError(model.d, features.shape[1], row=1)
    names = model.dataset.feature_names
    columns = ["y_hat", *[f"x_hat_{name}" for name in names]]
    if features.shape[0]:
        y_hat, x_hat = model.predict_batch(features)
        frame = pd.DataFrame(np.column_stack([y_hat, x_hat]), columns=columns)
    else:
        frame = pd.DataFrame(columns=columns)
    path = config.save_location / "predictions.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    config.get_logger().info(f"Wrote {len(frame)} predictions to {path}.")
    return path


def cmd_bench(config: RunConfig) -> pathlib.Path:
    """Benchmark grid on every requested dataset."""
    results = []
    for definition in config.bench_datasets or [config.dataset]:
        results.extend(
            run_benchmark(
                definition.get_dataset(),
                config.bench,
                config.cv,
                config.forest,
                config.network,
                config.training,
            )
        )
    path = config.save_location / "bench_results.csv"
    write_bench_results(results, path, {"bench": config.bench.export_dict()})
    for result in results:
        config.get_logger().info(
            f"{result.dataset} {result.forest_kind} {result.model}: mean R2 "
            f"{result.mean_r2:.4f}"
        )
    return path


def cmd_explain(
    config: RunConfig, model_path: pathlib.Path
) -> pathlib.Path:
    """Explain the prediction of the configured query."""
    if config.explain.query is None:
        raise ParserException(
            "ExplainConfig", "query", "The explain command needs a query."
        )
    model = load_model(model_path)
    query = model.forest.check_dimension(config.explain.query)[0]
    explanation = explain(model, query, config.explain.top_k)
    path = config.save_location / "explanation.csv"
    write_explanation(explanation, model, path)
    config.get_logger().info(
        f"Explained the query with prediction {explanation.y_hat:.6g}."
    )
    return path


def cmd_gen_data(config: RunConfig) -> pathlib.Path:
    """Write the defined dataset to CSV."""
    dataset = config.dataset.get_dataset()
    path = config.save_location / f"{dataset.name}.csv"
    write_csv(dataset, path)
    return path


def _parse_query(value: str) -> List[float]:
    try:
        return [float(item) for item in value.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"The query has to be comma separated reals, got {value!r}."
        ) from err


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the command line interface."""
    parser = argparse.ArgumentParser(
        prog="naforest",
        description="Neural attention forests (naforest). Builds random "
        "forests or extremely randomized trees, trains the attention "
        "networks on top of them, benchmarks, explains predictions and "
        f"persists models. The package version is: {__version__}.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"naforest: {__version__}",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="Path to the hjson file holding the run definition."
    )
    common.add_argument("--seed", type=int, help="Global seed of the run.")
    common.add_argument(
        "--out",
        help="Output directory, {} is replaced by a timestamp. Defaults to "
        f"{DEFAULT_OUT}.",
    )
    common.add_argument("--dataset", help="Name of the dataset.")
    common.add_argument("--forest", choices=["rf", "ert"])
    common.add_argument("--arch", choices=["naf1", "naf3"])
    common.add_argument("--objective", choices=["y-mse", "q-recon"])
    common.add_argument(
        "--lambda",
        dest="lambdas",
        type=float,
        help="Weight of the feature reconstruction errors, all features.",
    )
    common.add_argument("--trees", type=int, help="Number of trees.")
    common.add_argument("--min-leaf", type=int, help="Minimal leaf size.")
    common.add_argument("--epochs", type=int, help="Training epochs.")
    common.add_argument("--lr", type=float, help="Learning rate.")
    common.add_argument(
        "--top-k", type=int, help="Number of neighbors of an explanation."
    )

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "train", parents=[common], help="Train a model and save it."
    )
    predict_parser = commands.add_parser(
        "predict", parents=[common], help="Predict the rows of a CSV file."
    )
    predict_parser.add_argument("--model", required=True)
    predict_parser.add_argument("--input", required=True)
    commands.add_parser(
        "bench", parents=[common], help="Compare forests and NAF models."
    )
    explain_parser = commands.add_parser(
        "explain", parents=[common], help="Explain a single prediction."
    )
    explain_parser.add_argument("--model", required=True)
    explain_parser.add_argument(
        "--query", type=_parse_query, help="Comma separated feature values."
    )
    commands.add_parser(
        "gen-data", parents=[common], help="Write a generated dataset."
    )
    return parser


def main(args: argparse.Namespace) -> pathlib.Path:
    """Run the selected command.

    Args:
        args (argparse.Namespace): parsed command line arguments.

    Returns:
        pathlib.Path: the main output file of the command.
    """
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "seed",
            "out",
            "dataset",
            "forest",
            "arch",
            "objective",
            "lambdas",
            "trees",
            "min_leaf",
            "epochs",
            "lr",
            "top_k",
        )
    }
    overrides["query"] = getattr(args, "query", None)
    definition = read_definition(args.config) if args.config else {}
    if overrides["out"] is None and not definition.get("save_location"):
        overrides["out"] = DEFAULT_OUT
    config = RunConfig(**apply_overrides(definition, overrides))
    config.dump(config.save_location / "run_config.hjson")
    config.get_logger().info(_versions())

    if args.command == "train":
        return cmd_train(config)
    if args.command == "predict":
        return cmd_predict(
            config, pathlib.Path(args.model), pathlib.Path(args.input)
        )
    if args.command == "bench":
        return cmd_bench(config)
    if args.command == "explain":
        return cmd_explain(config, pathlib.Path(args.model))
    return cmd_gen_data(config)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the command and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        output = main(args)
    except (pydantic.ValidationError, ParserException) as err:
        print(f"Configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE_ERROR
    except NaforestError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME_FAILURE
    print(output)
    return EXIT_SUCCESS


def entry():
    """Entry point if this package is called directly from the command line."""
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    entry()
