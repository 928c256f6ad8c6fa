"""Definition of the naforest base Model.

File holding the base class for all naforest configuration classes which are
parsed from a run configuration file or the command line.
"""
import pathlib
from collections import OrderedDict
from typing import Any, Dict, Optional

import pydantic

from naforest.util.logger import RUN_LOGGER_NAME, logging
from naforest.util.util_funcs import get_path_extension


def add_save_location_if_elem_is_o_dict(
    possible_value: Any, save_location: pathlib.Path
):
    """Add the save_location keyword to the element of it is a dict.

    This function is used to forward the save_location variable to all child
    definitions so that all objects can access it. Also handles dicts inside
    of lists.

    Args:
        possible_value (Any): Variable holding potential objects which need
        the save_location.
        save_location (pathlib.Path): path that defines the location
    """
    if isinstance(possible_value, (OrderedDict, Dict)):
        if "save_location" not in possible_value:
            possible_value["save_location"] = save_location
    elif isinstance(possible_value, list):
        for item in possible_value:
            add_save_location_if_elem_is_o_dict(item, save_location)


class BaseModel(pydantic.BaseModel):
    """Base of all naforest objects used for parsing.

    Configuration objects can be used programmatically without a
    save_location. If one is given it is forwarded to all nested definitions.
    """

    #: Directory where logs and results are written to. If {} is present in
    #: the string the current timestamp is added. Created if not present.
    save_location: Optional[pathlib.Path] = None
    #: name of the logger. Does not need to be set, defaults to the run
    #: logger.
    logger_name: Optional[str] = None

    def __init__(self, **data: Any) -> None:
        """Constructor for the naforest basemodel object."""
        if data.get("save_location") is not None:
            if isinstance(data["save_location"], str):
                data[
                    "save_location"
                ] = BaseModel.convert_to_pathlib_add_datetime(
                    data["save_location"]
                )
            for value in data.values():
                add_save_location_if_elem_is_o_dict(
                    value, data["save_location"]
                )
        super().__init__(**data)

    @classmethod
    def convert_to_pathlib_add_datetime(cls, v: str) -> pathlib.Path:
        """Add timestamp to save_location, if applicable.

        Adds a timestamp to the save_location if {} present. This function
        also ensures that the directory is created.

        Args:
            v (str): Value to convert.

        Returns:
            pathlib.Path: Path like object.
        """
        path = (
            pathlib.Path(v.format(get_path_extension())).expanduser().resolve()
        )
        path.mkdir(parents=True, exist_ok=True)
        return path

    def set_logger_name_recursively(self, logger_name: str):
        """Set the logger_name variable for all child elements.

        Args:
            logger_name (str): Name of the logger to set.
        """
        self.logger_name = logger_name
        for value in self.__dict__.values():
            items = value if isinstance(value, list) else [value]
            for item in items:
                if isinstance(item, BaseModel):
                    item.set_logger_name_recursively(logger_name)

    def get_logger(self) -> logging.Logger:
        """Gets the currently defined logger.

        Returns:
            logging.Logger: logger which is currently to be used.
        """
        return logging.getLogger(self.logger_name or RUN_LOGGER_NAME)

    def export_dict(self) -> Dict[str, Any]:
        """Definition without the bookkeeping fields.

        Returns:
            Dict[str, Any]: JSON compatible definition.
        """
        return _strip_bookkeeping(self.dict(exclude_none=True, by_alias=True))

    class Config:
        """Used to add pydantic configurations."""

        #: Forbids superfluous keywords for object definitions.
        extra = pydantic.Extra.forbid


def _strip_bookkeeping(value: Any) -> Any:
    if isinstance(value, dict):
        return {
            key: _strip_bookkeeping(item)
            for key, item in value.items()
            if key not in ("save_location", "logger_name")
        }
    if isinstance(value, list):
        return [_strip_bookkeeping(item) for item in value]
    if isinstance(value, pathlib.Path):
        return str(value)
    return value
