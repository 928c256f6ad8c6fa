"""File defines the exceptions of the naforest package."""
import enum
import os
import platform
import sys
from typing import List, Optional

from naforest.util.logger import get_parser_logger, get_run_logger


class Stylings(enum.Enum):
    """Possible stylings supported by this Tool."""

    Bold = 1
    Underline = 4
    Red = 31

    def __str__(self) -> str:
        """Encode enum value into a string.

        Returns:
            str: encoded enum value.
        """
        return "%s" % self.value


def check_if_color_is_supported_in_console() -> bool:
    """Checks if the connected console has color support.

    Returns:
        bool: Terminal supports color.
    """
    term_ansi = os.environ.get("TERM") == "ANSI"
    handle = sys.stderr
    if (hasattr(handle, "isatty") and handle.isatty()) or term_ansi:
        return platform.system() != "Windows" or term_ansi
    return False


#: boolean value on whether or not coloring is supported
color_supported = check_if_color_is_supported_in_console()


def output_styling(message: str, stylings: List[Stylings]) -> str:
    """Style the string according to the given styles.

    If ANSI styling is available the message is styled by the defined
    styling. Only the first 3 Stylings are actually used.

    Args:
        message (str): string to style
        stylings (List[Stylings]): Stylings to apply to the message.

    Returns:
        (str): ANSI encoded styled message.
    """
    return (
        f"\033[{';'.join(map(str, stylings[:3]))}m{message}\033[0m"
        if color_supported
        else message
    )


def red(message: str) -> str:
    """Color string red and bold."""
    return output_styling(
        message=message, stylings=[Stylings.Red, Stylings.Bold]
    )


def underline(message: str) -> str:
    """Underline the string and make it bold."""
    return output_styling(
        message=message, stylings=[Stylings.Underline, Stylings.Bold]
    )


class ParserException(ValueError):
    """Parser Exception for the naforest package.

    Shows the context of the error. Also colors the output if coloring is
    available.

    Uses the ValueError base class for compatibility with the pydantic
    validation engine.

    Args:
        parent (str): Parent items names where the error occurred.
        item (str): Name of the item which caused the error.
        message (str): Custom message to display in the Exception.
    """

    def __init__(self, parent: str, item: str, message: str) -> None:
        """Parser Exception constructor."""
        get_parser_logger().error(
            f"In {parent} object while parsing {item} "
            f"the following error has occurred: {message}"
        )
        super().__init__(
            f"In {underline(parent)} object while parsing {underline(item)} "
            f"the following error has occurred: {red(message)}"
        )


class NaforestError(Exception):
    """Base of the runtime errors of naforest.

    The message is logged to the run logger when the error is created.
    """

    def __init__(self, message: str) -> None:
        """Constructor of the logged runtime error.

        Args:
            message (str): Message of the error.
        """
        get_run_logger().error(f"{type(self).__name__}: {message}")
        super().__init__(message)


class DatasetError(NaforestError, ValueError):
    """Dataset could not be loaded, generated or split.

    Args:
        message (str): What went wrong.
        row (Optional[int]): 1-based data row of the problem, if any.
        column (Optional[int]): 1-based column of the problem, if any.
    """

    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        """Constructor of DatasetError."""
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} (at {', '.join(location)})"
        super().__init__(message)


class ForestError(NaforestError, ValueError):
    """The forest can not be built from the given data."""


class DimensionError(NaforestError, ValueError):
    """A query does not have the dimension the model was trained with."""

    def __init__(
        self, expected: int, got: int, row: Optional[int] = None
    ) -> None:
        """Constructor of DimensionError.

        Args:
            expected (int): Dimension of the model.
            got (int): Dimension of the query.
            row (Optional[int]): 1-based row of the query, if known.
        """
        self.row = row
        where = f" in row {row}" if row is not None else ""
        super().__init__(
            f"Expected {expected} features but got {got}{where}."
        )


class QueryError(NaforestError, ValueError):
    """A query contains NaN or infinite values."""


class TrainingDivergedError(NaforestError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, learning_rate: float) -> None:
        """Constructor of TrainingDivergedError.

        Args:
            epoch (int): Epoch in which the loss stopped being finite.
            learning_rate (float): Learning rate of the run.
        """
        self.epoch = epoch
        super().__init__(
            f"The loss became non-finite in epoch {epoch}. The learning rate "
            f"{learning_rate} is probably too high, please lower it."
        )


class EvaluationError(NaforestError, ValueError):
    """A metric is undefined for the given inputs."""


class ModelFileError(NaforestError, ValueError):
    """A model file could not be read."""
