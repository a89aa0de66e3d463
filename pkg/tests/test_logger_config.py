import logging
import os
from unittest.mock import MagicMock, patch

import pytest
from click.testing import CliRunner

from ccdist import settings
from ccdist.cli import cli
from ccdist.logger_config import create_log_file, error_log_file_path, log_file_path

REPO_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_default_log_files() -> None:

    """
    Test that the ccdist logs live under <var_dir>/log/ with the configured names

    Returns: None

    """
    log_dir = os.path.join(REPO_DIR, settings.var_dir, "log")

    assert log_file_path == os.path.join(log_dir, settings.log_file_name)
    assert error_log_file_path == os.path.join(log_dir, settings.error_log_file_name)
    assert os.path.exists(log_file_path)
    assert os.path.exists(error_log_file_path)


def test_cli_loggers_use_ccdist_logs() -> None:

    """
    Test that the run logger and the error logger of the CLI write to the ccdist logs

    Returns: None

    """
    run_logger = logging.getLogger("logger")
    error_logger = logging.getLogger("error_logger")

    assert [h.baseFilename for h in run_logger.handlers] == [log_file_path]
    assert [h.baseFilename for h in error_logger.handlers] == [error_log_file_path]
    assert error_logger.level == logging.ERROR


@patch("ccdist.cli.get_db")
def test_parse_error_reaches_error_log(mock_get_db: MagicMock) -> None:

    """
    Test that a rejected point is written to the ccdist error log

    Returns: None

    """
    mock_get_db.return_value.__enter__.return_value = MagicMock()

    result = CliRunner().invoke(
        cli, ["distance", "--group", "heisenberg", "--point", "1,0;0;0"]
    )
    for handler in logging.getLogger("error_logger").handlers:
        handler.flush()

    assert result.exit_code == 1
    with open(error_log_file_path) as f:
        assert "Point must have the form 'x1,...,xq;t1,...,tm'" in f.read()


def test_create_log_file(tmp_path) -> None:

    """
    Test to create the run log and the error log in another var directory

    Returns: None

    """
    run_log, error_log = create_log_file(
        "ccdist_sweep.log", "ccdist_sweep_error.log", str(tmp_path)
    )

    assert run_log == os.path.join(str(tmp_path), "log", "ccdist_sweep.log")
    assert error_log == os.path.join(str(tmp_path), "log", "ccdist_sweep_error.log")
    assert os.path.exists(run_log)
    assert os.path.exists(error_log)


def test_create_log_file_invalid_file_format(tmp_path) -> None:

    """
    Test to create a log file with invalid file format

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        create_log_file("ccdist.txt", "ccdist_error.txt", str(tmp_path))

    assert str(e.value) == "Invalid file format. Only log files are allowed"


def test_create_log_file_invalid_input_arguments() -> None:

    """
    Test to create a log file with a non-string var directory

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        create_log_file("ccdist.log", "ccdist_error.log", None)

    assert str(e.value) == "Invalid input arguments. Input arguments must be strings"


def test_create_log_file_keeps_existing_content(tmp_path) -> None:

    """
    Test that creating the log files twice leaves existing content in place

    Returns: None

    """
    run_log, _ = create_log_file("ccdist.log", "ccdist_error.log", str(tmp_path))
    with open(run_log, "w") as f:
        f.write("first run\n")

    again, _ = create_log_file("ccdist.log", "ccdist_error.log", str(tmp_path))

    assert again == run_log
    with open(again) as f:
        assert f.read() == "first run\n"
