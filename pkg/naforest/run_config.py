"""Run definition of the command line interface.

A run is defined by one hjson file. Every section is optional and falls back
to its defaults; command line flags override values of the file.
"""
import pathlib
from copy import deepcopy
from typing import Any, Dict, List, Optional, Union

import hjson
from pydantic import Field, conint

from naforest.base_model import BaseModel
from naforest.dataset import CvPlan, DatasetDefinition
from naforest.evaluation import BenchmarkGrid
from naforest.exceptions import ParserException
from naforest.forest import ForestConfig
from naforest.naf_model import NetworkConfig
from naforest.training import TrainConfig
from naforest.verbosity import Verbosity

#: Sections whose seed is set by the global seed.
SEEDED_SECTIONS = ("dataset", "forest", "network", "training", "cv")
#: Sections created from their defaults if missing, so that they receive the
#: save_location.
SECTIONS = (*SEEDED_SECTIONS, "verbosity", "bench", "explain")
#: Command line flag destinations and their place in the run definition.
CLI_OVERRIDES = {
    "out": ("save_location",),
    "dataset": ("dataset", "name"),
    "forest": ("forest", "algorithm"),
    "arch": ("network", "architecture"),
    "objective": ("training", "objective"),
    "lambdas": ("training", "lambdas"),
    "trees": ("forest", "n_trees"),
    "min_leaf": ("forest", "min_leaf_size"),
    "epochs": ("training", "epochs"),
    "lr": ("training", "learning_rate"),
    "top_k": ("explain", "top_k"),
    "query": ("explain", "query"),
}


class ExplainConfig(BaseModel):
    """Definition of an explanation."""

    #: number of ranked training rows
    top_k: conint(ge=1) = 10
    #: query in the original feature space
    query: Optional[List[float]] = None


class RunConfig(BaseModel):
    """Complete definition of a command line run."""

    #: Defining the verbosity of the run
    verbosity: Verbosity = Field(default_factory=Verbosity)
    #: Global seed. Set, it replaces the seed of every section.
    seed: Optional[conint(ge=0)] = None
    #: Dataset of train, bench and gen-data
    dataset: DatasetDefinition = Field(default_factory=DatasetDefinition)
    #: Datasets of bench. Defaults to ``dataset``.
    bench_datasets: Optional[List[DatasetDefinition]] = None
    forest: ForestConfig = Field(default_factory=ForestConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    #: Repetitions, folds and test fraction of bench
    cv: CvPlan = Field(default_factory=CvPlan)
    bench: BenchmarkGrid = Field(default_factory=BenchmarkGrid)
    explain: ExplainConfig = Field(default_factory=ExplainConfig)

    def __init__(self, **data: Any) -> None:
        """Constructor of the run definition.

        Missing sections are created so that the save_location reaches them
        and the global seed is written into every seeded section.
        """
        if data.get("save_location") is not None:
            for section in SECTIONS:
                if data.get(section) is None:
                    data[section] = {}
        if data.get("seed") is not None:
            for section in SEEDED_SECTIONS:
                if data.get(section) is None:
                    data[section] = {}
                if isinstance(data[section], dict):
                    data[section]["seed"] = data["seed"]
        super().__init__(**data)

    def export_dict(self) -> Dict[str, Any]:
        """Definition as written to the hjson file."""
        exported = super().export_dict()
        exported["verbosity"] = self.verbosity.export_dict()
        if self.save_location is not None:
            exported["save_location"] = str(self.save_location)
        return exported

    def to_hjson(self) -> str:
        """hjson text which parses to an equal definition."""
        return hjson.dumps(self.export_dict(), indent=2)

    def dump(self, path: Union[str, pathlib.Path]) -> pathlib.Path:
        """Write the definition to an hjson file."""
        path = pathlib.Path(path)
        path.write_text(self.to_hjson())
        return path


def apply_overrides(
    definition: Dict[str, Any], overrides: Dict[str, Any]
) -> Dict[str, Any]:
    """Merge command line values into a run definition.

    Args:
        definition (Dict[str, Any]): definition read from the file.
        overrides (Dict[str, Any]): flag destinations and values, None values
            are ignored. ``seed`` sets the global seed.

    Returns:
        Dict[str, Any]: merged copy of the definition.
    """
    merged = deepcopy(dict(definition))
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            merged["seed"] = value
            continue
        if key not in CLI_OVERRIDES:
            raise ParserException(
                "RunConfig", key, "No run definition entry for this flag."
            )
        *parents, leaf = CLI_OVERRIDES[key]
        target = merged
        for parent in parents:
            target[parent] = dict(target.get(parent) or {})
            target = target[parent]
        if key == "forest":
            # bootstrap follows the newly chosen algorithm
            target.pop("bootstrap", None)
        target[leaf] = value
    return merged


def read_definition(path: Union[str, pathlib.Path]) -> Dict[str, Any]:
    """Read a run definition file.

    Raises:
        ParserException: if the file is missing or not valid hjson.
    """
    file_path = pathlib.Path(path).expanduser().resolve()
    if not file_path.is_file():
        raise ParserException(
            "RunConfig", "config", f"Could not find the given file: {path}."
        )
    try:
        with open(file_path) as file:
            definition = hjson.load(file)
    except hjson.HjsonDecodeError as err:
        raise ParserException(
            "RunConfig", "config", f"Could not parse {path}: {err}"
        ) from err
    if not isinstance(definition, dict):
        raise ParserException(
            "RunConfig", "config", "The file has to hold one object."
        )
    return dict(definition)


def load_run_config(
    path: Optional[Union[str, pathlib.Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Run definition from an optional file and command line overrides."""
    definition = read_definition(path) if path is not None else {}
    return RunConfig(**apply_overrides(definition, overrides or {}))
