import os
from typing import Tuple

from ccdist import settings


def create_log_file(
    log_file_name: str, error_log_file_name: str, var_dir: str
) -> Tuple[str, str]:
    """
    Function to create the run log and the error log of the ccdist CLI

    Args:
    log_file_name (str): Name of the log file
    error_log_file_name (str): Name of the error log file
    var_dir (str): Directory holding the log/ folder, relative to the repository
    root unless absolute

    Returns:
    Tuple[str, str]: A tuple containing the path to the log file
    and the path to the error log file

    """
    if not (
        isinstance(log_file_name, str)
        and isinstance(error_log_file_name, str)
        and isinstance(var_dir, str)
    ):
        raise ValueError("Invalid input arguments. Input arguments must be strings")

    if not (log_file_name.endswith(".log") and error_log_file_name.endswith(".log")):
        raise ValueError("Invalid file format. Only log files are allowed")

    base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    log_dir = os.path.join(base_dir, var_dir, "log")
    os.makedirs(log_dir, exist_ok=True)

    paths = []
    for name in (log_file_name, error_log_file_name):
        path = os.path.join(log_dir, name)
        if not os.path.exists(path):
            with open(path, "w") as f:
                f.write("")
        paths.append(path)

    return paths[0], paths[1]


log_file_path, error_log_file_path = create_log_file(
    settings.log_file_name, settings.error_log_file_name, settings.var_dir
)
