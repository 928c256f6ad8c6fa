"""Versioned JSON persistence of trained models.

Every real is written as a 17 significant digit decimal string, loading
therefore restores the float64 values bit for bit and a loaded model predicts
exactly like the saved one.
"""
import json
import pathlib
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from naforest.__version__ import __version__
from naforest.attention_net import DTYPE, AttentionNet, LayerSpec
from naforest.dataset import Dataset, Standardizer
from naforest.exceptions import ModelFileError
from naforest.forest import Forest
from naforest.naf_model import NafModel, NetworkConfig
from naforest.util.logger import get_run_logger
from naforest.util.util_funcs import JSONEncoder, format_reals, parse_reals

#: Version of the layout written by :func:`save_model`.
FORMAT_VERSION = 1


def _net_to_dict(net: AttentionNet) -> Dict[str, Any]:
    return {
        "layers": [spec.export_dict() for spec in net.specs],
        "parameters": format_reals(net.parameter_vector().numpy()),
    }


def _net_from_dict(data: Dict[str, Any]) -> AttentionNet:
    net = AttentionNet([LayerSpec(**spec) for spec in data["layers"]])
    net.set_parameter_vector(
        torch.as_tensor(parse_reals(data["parameters"]), dtype=DTYPE)
    )
    return net


def model_to_dict(
    model: NafModel, training: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """JSON compatible representation of a model.

    Args:
        model (NafModel): model to represent.
        training (Optional[Dict[str, Any]]): training metadata, stored as is.

    Returns:
        Dict[str, Any]: the representation.
    """
    dataset = model.dataset
    return {
        "format_version": FORMAT_VERSION,
        "naforest_version": __version__,
        "torch_version": torch.__version__,
        "numpy_version": np.__version__,
        "dataset": {
            "name": dataset.name,
            "feature_names": list(dataset.feature_names),
            "n": dataset.n,
            "d": dataset.d,
            "features": format_reals(dataset.features),
            "targets": format_reals(dataset.targets),
        },
        "standardizer": {
            "means": format_reals(model.standardizer.means),
            "std_devs": format_reals(model.standardizer.std_devs),
            "degenerate": model.standardizer.degenerate.tolist(),
        },
        "forest": model.forest.to_dict(),
        "network": {
            "config": model.config.export_dict(),
            "leaf_net": _net_to_dict(model.leaf_net),
            "global_net": _net_to_dict(model.global_net),
        },
        "training": training or {},
    }


def model_from_dict(data: Dict[str, Any]) -> NafModel:
    """Inverse of :func:`model_to_dict`.

    Raises:
        ModelFileError: for another format version or missing entries.
    """
    version = data.get("format_version") if isinstance(data, dict) else None
    if version != FORMAT_VERSION:
        raise ModelFileError(
            f"Unsupported model file format version {version!r}, expected "
            f"{FORMAT_VERSION}."
        )
    try:
        meta = data["dataset"]
        n, d = int(meta["n"]), int(meta["d"])
        dataset = Dataset(
            parse_reals(meta["features"]).reshape(n, d),
            parse_reals(meta["targets"]),
            meta["feature_names"],
            meta["name"],
        )
        standardizer = Standardizer(
            parse_reals(data["standardizer"]["means"]),
            parse_reals(data["standardizer"]["std_devs"]),
            data["standardizer"]["degenerate"],
        )
        forest = Forest.from_dict(data["forest"], dataset)
        network = data["network"]
        return NafModel(
            forest,
            _net_from_dict(network["leaf_net"]),
            _net_from_dict(network["global_net"]),
            standardizer,
            NetworkConfig(**network["config"]),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ModelFileError(f"Incomplete or corrupt model file: {err}") from (
            err
        )


def save_model(
    model: NafModel,
    path: Union[str, pathlib.Path],
    training: Optional[Dict[str, Any]] = None,
) -> pathlib.Path:
    """Write a model file.

    Args:
        model (NafModel): model to save.
        path (Union[str, pathlib.Path]): target file, parents are created.
        training (Optional[Dict[str, Any]]): training metadata.

    Returns:
        pathlib.Path: the written file.
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as file:
        json.dump(model_to_dict(model, training), file, cls=JSONEncoder)
    get_run_logger().info(f"Saved model to {path}.")
    return path


def load_model(path: Union[str, pathlib.Path]) -> NafModel:
    """Read a model file written by :func:`save_model`.

    Raises:
        ModelFileError: if the file is missing, no JSON or incompatible.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise ModelFileError(f"Could not find the model file {path}.")
    try:
        with open(path) as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as err:
        raise ModelFileError(f"Could not read the model file {path}.") from (
            err
        )
    return model_from_dict(data)


def load_training_metadata(path: Union[str, pathlib.Path]) -> Dict[str, Any]:
    """Training metadata block of a model file."""
    with open(path) as file:
        return json.load(file).get("training", {})
