import pandas as pd
import json
import numpy as np
from pathlib import Path
from typing import Any, Dict, Union
import logging
from scipy.constants import c as SPEED_OF_LIGHT

from utils.errors import FileProcessingError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def path_to_delay(path_length):
    """
    Converts an optical path difference (m) into a time delay (s).

    :param path_length: Scalar or array of path lengths in meters.
    :return: Delay in seconds, same shape as the input.
    """
    return np.asarray(path_length, dtype=float) / SPEED_OF_LIGHT


def delay_to_path(delay):
    """Converts a time delay (s) into an optical path difference (m)."""
    return np.asarray(delay, dtype=float) * SPEED_OF_LIGHT


def convert_df_to_csv(df: pd.DataFrame, float_format: str = "%.12g") -> str:
    """
    Converts a pandas DataFrame to a CSV formatted string.

    :param df: The DataFrame to convert.
    :param float_format: printf-style format applied to float columns.
    :return: A string containing the CSV data; only the header for an empty frame.
    """
    if df.empty:
        logger.info("Converting empty DataFrame to CSV (header only).")
    csv_string = df.to_csv(index=False, float_format=float_format, lineterminator="\n")
    logger.debug("DataFrame converted to CSV string successfully.")
    return csv_string


def _json_default(value: Any):
    # numpy scalars and arrays are not JSON serializable by default
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def convert_to_json(payload: Union[Dict[str, Any], list]) -> str:
    """
    Serializes a report payload to a JSON string with sorted keys, so identical inputs give identical bytes.

    :param payload: Dictionary or list built from plain values and numpy scalars/arrays.
    :return: Indented JSON text terminated by a newline.
    """
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_text(path: Path, text: str) -> Path:
    """
    Writes text with Unix newlines, creating parent directories.

    :raises FileProcessingError: If the directory or file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise FileProcessingError(f"Could not write {path}.", filename=str(path), original_error=e)
    logger.debug(f"Wrote {len(text)} characters to {path}")
    return path
