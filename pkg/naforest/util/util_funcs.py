"""Utility functions.

This files includes multiple functions and classes which are used in this
package but can not be directly associated to a single sub module.
"""
import datetime
import json
import os
from typing import Any, Iterable, List, Optional

import numpy as np

#: Environment variable which caps the number of worker threads.
THREADS_ENV_VARIABLE = "NAF_THREADS"


class JSONEncoder(json.JSONEncoder):
    """Encodes numpy arrays and scalars.

    Used for the metadata blocks of written files, the numerical payload of
    model files is written with :func:`format_real` instead.
    """

    def default(self, o: Any) -> Any:
        """Default function.

        Args:
            o (Any): To be encoded.

        Returns:
            Any: Encoded.
        """
        if isinstance(o, np.ndarray):
            return o.tolist()
        elif isinstance(o, np.integer):
            return int(o)
        elif isinstance(o, np.floating):
            return float(o)
        elif isinstance(o, bytes):
            return o.decode("utf-8")
        return json.JSONEncoder.default(self, o)


def format_real(value: float) -> str:
    """Write a real as a 17 significant digit decimal string.

    17 significant digits are enough to restore every float64 bit-exactly.

    Args:
        value (float): Real to write.

    Returns:
        str: Decimal representation.
    """
    return format(float(value), ".17g")


def format_reals(values: Iterable[float]) -> List[str]:
    """Vectorized :func:`format_real`."""
    return [format_real(value) for value in np.asarray(values).ravel()]


def parse_reals(values: Iterable[str]) -> np.ndarray:
    """Inverse of :func:`format_reals`."""
    return np.array([float(value) for value in values], dtype=np.float64)


def get_n_threads(default: Optional[int] = None) -> int:
    """Number of worker threads allowed by the environment.

    Reads ``NAF_THREADS``. If unset the number of available cpus is used.

    Args:
        default (Optional[int]): Value used if the variable is not set.
            Defaults to the cpu count.

    Returns:
        int: Number of threads, at least 1.
    """
    value = os.getenv(THREADS_ENV_VARIABLE)
    if value is None or not value.strip():
        return max(1, default or os.cpu_count() or 1)
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def get_path_extension() -> str:
    """Current timestamp used to make run directories unique.

    If in a slurm job the job id is appended.

    Returns:
        str: Timestamp (and job id).
    """
    ret_str = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    if os.getenv("SLURM_JOB_ID"):  # pragma: no cover
        ret_str += "_" + str(os.getenv("SLURM_JOB_ID"))
    return ret_str
