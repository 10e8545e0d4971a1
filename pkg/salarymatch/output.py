"""CSV and JSON emitters for command results.

Every file starts with the format version: CSVs carry a '# format_version: X'
comment line above the header, JSON documents a top-level 'format_version' key.
"""
import json
import logging
import math
import os
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"


def ensure_dir(directory):
    """Creates the output directory (and parents) when missing."""
    os.makedirs(directory, exist_ok=True)
    return directory


def write_csv(frame, path):
    """Writes a DataFrame as UTF-8 CSV with LF endings and 17 significant digits.

    Arguments:
        frame::pd.DataFrame- columns in output order
        path::str- destination file

    Returns:
        str- the path written
    """
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# format_version: {FORMAT_VERSION}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d rows to %s", len(frame), path)
    return path


# converting numpy scalars, enums and non-finite floats into plain JSON values
def jsonable(value):
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def document(kind, body):
    """JSON document with the format version and kind ahead of the body keys."""
    out = {"format_version": FORMAT_VERSION, "kind": kind}
    out.update(jsonable(body))
    return out


def write_json(kind, body, path):
    """Writes document(kind, body) as UTF-8 JSON with stable key order.

    Floats use Python's shortest round-trip representation; NaN and
    infinities become null.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(document(kind, body), handle, indent=2, allow_nan=False)
        handle.write("\n")
    logger.info("wrote %s to %s", kind, path)
    return path


def dumps(kind, body):
    return json.dumps(document(kind, body), indent=2, allow_nan=False)
