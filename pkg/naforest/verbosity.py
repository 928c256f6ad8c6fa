"""File hold definition for verbosity settings.

File holding the class defining the verbosity of a run and setting up the
loggers.
"""
import datetime
import pathlib
from typing import Any, Dict, Literal

from pydantic import validator

from naforest.base_model import BaseModel
from naforest.util.logger import (
    PARSER_LOGGER_NAME,
    RUN_LOGGER_NAME,
    VerbosityLevel,
    set_up_logger,
)

LevelName = Literal["ERROR", "WARNING", "DEBUG", "INFO"]


class Verbosity(BaseModel):
    """Verbosity class.

    Defines the settings for the two loggers of a run. The parser logger only
    reports on the configuration, the run logger on dataset creation, forest
    building, training and evaluation.
    """

    #: VerbosityLevel of the parser logger.
    parser: LevelName = "INFO"
    #: VerbosityLevel of the run logger. DEBUG also reports the loss of every
    #: epoch.
    run: LevelName = "INFO"
    #: Path where the log files should be saved to. Will be inside the
    #: save_location if one is given.
    logfile_location: str = "logging/"
    #: Whether or not to also print the log messages to the console.
    console_logging: bool = False

    @validator("parser", "run", always=True)
    @classmethod
    def convert_literal_str_to_verbosity_level(cls, v):
        """Convert the string representation to the VerbosityLevel.

        Args:
            v (str): String representation of the VerbosityLevel

        Returns:
            VerbosityLevel: Enum object of the wanted value
        """
        return VerbosityLevel[v] if isinstance(v, str) else v

    @validator("logfile_location", always=True)
    @classmethod
    def make_logfile_location_absolute(cls, v, values: Dict[str, Any]):
        """Resolves and makes the log path absolute.

        Also adds the current timestamp to the log path if a {} is present in
        the given path.

        Args:
            v (str): given log location
            values (Dict[str, Any]): already validated values

        Returns:
            pathlib.Path: resolved log location
        """
        stamp = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        v = str(v).format(stamp)
        if values.get("save_location") is not None:
            path = values["save_location"] / v
        else:
            path = pathlib.Path(v).expanduser().resolve()
        path.mkdir(parents=True, exist_ok=True)
        return path

    def __init__(self, **data: Any) -> None:
        """Constructor of the verbosity definition, sets up the loggers."""
        super().__init__(**data)
        parser_logger = set_up_logger(
            PARSER_LOGGER_NAME,
            self.logfile_location,
            self.parser,
            self.console_logging,
        )
        set_up_logger(
            RUN_LOGGER_NAME,
            self.logfile_location,
            self.run,
            self.console_logging,
        )
        parser_logger.debug(
            f"Setup logger. Parser logger has logging level: {self.parser}; "
            f"Run logger has logging level: {self.run}"
        )

    def export_dict(self) -> Dict[str, Any]:
        """Definition with the levels written by name."""
        exported = super().export_dict()
        exported["parser"] = VerbosityLevel(self.parser).name
        exported["run"] = VerbosityLevel(self.run).name
        return exported
