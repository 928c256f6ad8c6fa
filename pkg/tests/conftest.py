import builtins
import pathlib

import numpy as np
import pytest
import torch

from naforest.attention_net import DTYPE, AttentionNet, LayerSpec
from naforest.dataset import Dataset, Standardizer, gen_friedman
from naforest.forest import Forest, ForestConfig, RegressionTree
from naforest.naf_model import NafModel, NetworkConfig


@pytest.fixture
def clean_up_provider():
    def recursive_file_remove(path):
        """Remove a file or directory and its contents.

        Very dangerous function. Use with the greatest of care.
        """
        if not path.exists():
            return
        if path.is_file():
            path.unlink()
            return
        for child in path.iterdir():
            if child.is_file():
                child.unlink()
            else:
                recursive_file_remove(child)
        path.rmdir()

    return recursive_file_remove


@pytest.fixture
def hide_available_import(monkeypatch):
    """Make the import of tensorboard fail.

    Author:
        https://stackoverflow.com/a/60229056
    """
    import_orig = builtins.__import__

    def mock_import_available(name, *args, **kwargs):
        if name.startswith("torch.utils.tensorboard"):
            raise ImportError("tensorboard is hidden")
        return import_orig(name, *args, **kwargs)

    monkeypatch.setattr(builtins, "__import__", mock_import_available)


def dir_save_location_path(make_dir=False):
    dir_save_location = (
        pathlib.Path(__file__).parent / "test_save_location_please_delete"
    ).resolve()
    if make_dir:
        dir_save_location.mkdir(parents=True, exist_ok=True)
    return dir_save_location


@pytest.fixture
def dir_save_location(clean_up_provider):
    path = dir_save_location_path()
    yield path
    clean_up_provider(path)


@pytest.fixture
def small_dataset():
    """Friedman 2 with 40 rows."""
    return gen_friedman(2, 40, noise_sd=0.0, seed=3)


@pytest.fixture
def tiny_dataset():
    """Random 8 x 2 dataset for gradient checks."""
    rng = np.random.default_rng(11)
    features = rng.uniform(size=(8, 2))
    return Dataset(features, features.sum(axis=1) + rng.normal(size=8))


@pytest.fixture
def small_forest_config():
    return ForestConfig(n_trees=5, min_leaf_size=3, seed=1)


@pytest.fixture
def small_model(small_dataset, small_forest_config):
    return NafModel.create(
        small_dataset, small_forest_config, NetworkConfig(seed=2)
    )


@pytest.fixture
def csv_file(dir_save_location):
    dir_save_location.mkdir(parents=True, exist_ok=True)

    def write(text, name="data.csv"):
        path = dir_save_location / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


def identity_net():
    net = AttentionNet([LayerSpec(input_width=2, output_width=2)])
    with torch.no_grad():
        net.layers[0].weight.copy_(torch.eye(2, dtype=DTYPE))
    return net


@pytest.fixture
def two_point_model():
    """One leaf holding (1, 0) -> 1 and (0, 1) -> 0, identity networks."""
    dataset = Dataset([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
    tree = RegressionTree(
        [-1], [np.nan], [-1], [-1], [0.5], {0: [0, 1]}, [0, 1]
    )
    forest = Forest(
        [tree], ForestConfig(n_trees=1, min_leaf_size=1), dataset
    )
    standardizer = Standardizer(means=np.zeros(2), std_devs=np.ones(2))
    return NafModel(
        forest,
        identity_net(),
        identity_net(),
        standardizer,
        NetworkConfig(embed_dim=2),
    )
