import datetime
import logging
import pathlib

import pytest
from pydantic import ValidationError

from naforest.verbosity import Verbosity, VerbosityLevel


@pytest.mark.parametrize(
    ["parser", "wanted_parser", "run", "wanted_run", "run_log_file"],
    [
        (None, VerbosityLevel.INFO, None, VerbosityLevel.INFO, True),
        (
            "DEBUG",
            VerbosityLevel.DEBUG,
            "WARNING",
            VerbosityLevel.WARNING,
            True,
        ),
        ("ERROR", VerbosityLevel.ERROR, "ERROR", VerbosityLevel.ERROR, False),
    ],
)
def test_verbosity_levels(
    parser, wanted_parser, run, wanted_run, run_log_file, dir_save_location
):
    calling_dict = {"save_location": dir_save_location}
    if parser:
        calling_dict["parser"] = parser
    if run:
        calling_dict["run"] = run
    verbosity = Verbosity(**calling_dict)

    assert verbosity.parser is wanted_parser
    assert verbosity.run is wanted_run
    assert verbosity.logfile_location == dir_save_location / "logging/"
    log_dir = verbosity.logfile_location
    assert (log_dir / "naforest_parser.err").is_file()
    assert (log_dir / "naforest_run.err").is_file()
    assert (log_dir / "naforest_run.log").is_file() is run_log_file
    assert logging.getLogger("naforest_run").level == wanted_run


def test_verbosity_logs_setup(dir_save_location, caplog):
    with caplog.at_level(VerbosityLevel.DEBUG):
        Verbosity(save_location=dir_save_location, parser="DEBUG")
    assert "Parser logger has logging level" in caplog.text


def test_verbosity_unknown_level(dir_save_location):
    with pytest.raises(ValidationError):
        Verbosity(save_location=dir_save_location, run="LOUD")


def test_verbosity_export_dict(dir_save_location):
    verbosity = Verbosity(
        save_location=dir_save_location, parser="DEBUG", run="ERROR"
    )
    exported = verbosity.export_dict()
    assert exported["parser"] == "DEBUG"
    assert exported["run"] == "ERROR"
    assert "save_location" not in exported
    assert exported["logfile_location"] == str(dir_save_location / "logging")


@pytest.mark.parametrize(
    "add_save_path, log_path",
    [(True, "test"), (False, "test"), (False, "test_{}"), (True, "test_{}")],
)
def test_verbosity_make_logfile_location_absolute(
    add_save_path, log_path, clean_up_provider, dir_save_location
):
    v = log_path

    values = {}
    if add_save_path:
        values["save_location"] = dir_save_location
    ret_path = Verbosity.make_logfile_location_absolute(v, values)
    stamp = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    if add_save_path:
        assert ret_path == dir_save_location / v.format(stamp)
    else:
        assert ret_path == pathlib.Path(v.format(stamp)).resolve()
    assert ret_path.is_dir()
    clean_up_provider(ret_path)
