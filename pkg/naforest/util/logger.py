"""naforest logging.

Two loggers are used: the parser logger reports on run definitions, the run
logger on datasets, forests, training and evaluation. Both write to a log
file, errors additionally to an ``.err`` file.
"""
import enum
import logging
import pathlib
from typing import Optional

#: Name of the logger used while parsing run configurations.
PARSER_LOGGER_NAME = "naforest_parser"
#: Name of the logger used while building, training and evaluating models.
RUN_LOGGER_NAME = "naforest_run"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def get_parser_logger() -> logging.Logger:
    """Logger of the run definition parsing."""
    return logging.getLogger(PARSER_LOGGER_NAME)


def get_run_logger() -> logging.Logger:
    """Logger of the numerical parts of the package."""
    return logging.getLogger(RUN_LOGGER_NAME)


class VerbosityLevel(enum.IntEnum):
    """Log levels selectable in the run definition."""

    ERROR = logging.ERROR
    WARNING = logging.WARNING
    INFO = logging.INFO
    #: also reports the loss of every epoch
    DEBUG = logging.DEBUG


def _file_handler(path: pathlib.Path, level: int) -> logging.FileHandler:
    handler = logging.FileHandler(path)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def set_up_logger(
    logger_name: str = "",
    log_file_location: pathlib.Path = pathlib.Path("."),
    verbosity: VerbosityLevel = VerbosityLevel.INFO,
    console_logging: bool = True,
    logger: Optional[logging.Logger] = None,
) -> logging.Logger:
    """Configure a logger writing to ``log_file_location``.

    Handlers of an earlier set up of the same logger are closed and removed,
    so a second run in the same process does not write into the files of the
    first one.

    Args:
        logger_name (str): name of the logger. Appended to the name of
            ``logger`` if one is given. Defaults to ''.
        log_file_location (pathlib.Path): directory of the log files, created
            if missing. Defaults to ".".
        verbosity (VerbosityLevel): level of the logger and its log file.
            Defaults to VerbosityLevel.INFO.
        console_logging (bool): also print INFO and above to the console.
            Defaults to True.
        logger (Optional[logging.Logger]): configure this logger instead of
            looking one up by name. Defaults to None.

    Returns:
        logging.Logger: the configured logger.
    """
    if logger is None:
        logger = logging.getLogger(logger_name)
    else:
        logger.name += f"_{logger_name}"
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    logger.setLevel(verbosity.value)
    log_file_location.mkdir(parents=True, exist_ok=True)

    # ERROR only runs get the .err file alone
    if verbosity <= VerbosityLevel.WARNING:
        logger.addHandler(
            _file_handler(
                log_file_location / f"{logger.name}.log", verbosity.value
            )
        )
    if console_logging:
        console = logging.StreamHandler()
        console.setLevel(logging.INFO)
        console.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
        logger.addHandler(console)
    logger.addHandler(
        _file_handler(log_file_location / f"{logger.name}.err", logging.ERROR)
    )
    return logger
