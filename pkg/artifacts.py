"""
Output artifacts: atomic CSV/JSON writers shared by the CLI and library
"""

import json
import logging
import os
import tempfile
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy containers/scalars to plain Python; non-finite floats become None"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else None
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_json(obj: Any, path: str) -> str:
    return _atomic_write(path, json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(frame: pd.DataFrame, path: str) -> str:
    return _atomic_write(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT))


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip")
