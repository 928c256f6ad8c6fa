import hjson
import pytest
from pydantic import ValidationError

from naforest.exceptions import ParserException
from naforest.run_config import (
    ExplainConfig,
    RunConfig,
    apply_overrides,
    load_run_config,
    read_definition,
)


def test_run_config_defaults():
    config = RunConfig()
    assert config.dataset.name == "friedman2"
    assert config.forest.algorithm == "rf"
    assert config.network.architecture == "naf1"
    assert config.training.objective == "y_mse"
    assert config.bench_datasets is None
    assert config.explain.top_k == 10


def test_run_config_hjson_round_trip():
    config = RunConfig(
        seed=4,
        dataset={"name": "friedman2", "n_samples": 50},
        forest={"algorithm": "ert", "n_trees": 7},
        training={"objective": "q-recon", "lambdas": [0.5, 1.0, 0.0, 0.25]},
        bench={"models": ["original", "naf3"]},
        explain={"query": [1.0, 2.0, 3.0, 4.0]},
    )
    parsed = RunConfig(**hjson.loads(config.to_hjson()))
    assert parsed == config
    assert parsed.training.objective == "q_recon"


def test_run_config_global_seed():
    config = RunConfig(seed=9, forest={"seed": 1})
    assert config.forest.seed == 9
    assert config.dataset.seed == 9
    assert config.network.seed == 9
    assert config.training.seed == 9
    assert config.cv.seed == 9


def test_run_config_save_location(dir_save_location):
    config = RunConfig(save_location=str(dir_save_location))
    assert config.save_location == dir_save_location
    assert config.training.save_location == dir_save_location
    assert config.forest.save_location == dir_save_location
    assert dir_save_location.is_dir()
    path = config.dump(dir_save_location / "run_config.hjson")
    definition = read_definition(path)
    assert definition["save_location"] == str(dir_save_location)


@pytest.mark.parametrize(
    "definition",
    [
        {"forest": {"n_trees": 0}},
        {"unknown_section": {}},
        {"explain": {"top_k": 0}},
        {"dataset": {"name": "iris"}},
    ],
)
def test_run_config_invalid(definition):
    with pytest.raises(ValidationError):
        RunConfig(**definition)


def test_explain_config():
    assert ExplainConfig(query=[1, 2]).query == [1.0, 2.0]


def test_apply_overrides():
    definition = {"forest": {"algorithm": "rf", "bootstrap": True}}
    merged = apply_overrides(
        definition,
        {
            "forest": "ert",
            "trees": 12,
            "lambdas": 0.5,
            "epochs": None,
            "seed": 3,
            "out": "somewhere",
        },
    )
    assert merged["forest"] == {"algorithm": "ert", "n_trees": 12}
    assert merged["training"] == {"lambdas": 0.5}
    assert merged["seed"] == 3
    assert merged["save_location"] == "somewhere"
    # the input is not changed
    assert definition["forest"]["bootstrap"] is True


def test_apply_overrides_unknown_flag():
    with pytest.raises(ParserException):
        apply_overrides({}, {"colour": "red"})


def test_read_definition(dir_save_location):
    dir_save_location.mkdir(parents=True, exist_ok=True)
    path = dir_save_location / "run.hjson"
    path.write_text(
        "{\n  # comments are allowed\n  forest: {n_trees: 3}\n  seed: 2\n}\n"
    )
    config = load_run_config(path, {"arch": "naf3"})
    assert config.forest.n_trees == 3
    assert config.forest.seed == 2
    assert config.network.architecture == "naf3"


@pytest.mark.parametrize("text", ["{forest: ", "[1, 2]"])
def test_read_definition_invalid(text, dir_save_location):
    dir_save_location.mkdir(parents=True, exist_ok=True)
    path = dir_save_location / "run.hjson"
    path.write_text(text)
    with pytest.raises(ParserException):
        read_definition(path)


def test_read_definition_missing(dir_save_location):
    with pytest.raises(ParserException):
        read_definition(dir_save_location / "missing.hjson")
