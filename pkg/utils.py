import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from errors import ConfigError, DimensionMismatch

VERSION = "0.1.0"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
FLOAT_FORMAT = "%.17g"


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def thread_cap(requested: Optional[int] = None) -> int:
    """Worker count: YSL_THREADS (or the CPU count) capped further by ``requested``."""
    raw = os.environ.get("YSL_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            logging.warning(f"Ignoring YSL_THREADS={raw!r}: not an integer")
    if requested is not None:
        cap = min(cap, max(1, requested))
    return cap


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(obj: Any) -> str:
    """git-style blob hash (sha1 of 'blob <len>\\0' + content) of the canonical JSON."""
    payload = canonical_json(obj).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write via a temporary sibling file and os.replace, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_json(obj: Any, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def frame_to_csv(frame: pd.DataFrame) -> str:
    """CSV text with one version header line and 17 significant digits."""
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return f"# yield-stress-lab {VERSION}\n{body}"


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, frame_to_csv(frame))


def read_matrix_csv(path: Union[str, Path], dim: int) -> np.ndarray:
    """Rows of d*d numbers in row-major order, returned as (N, d, d); '#' lines are comments."""
    try:
        frame = pd.read_csv(path, comment="#")
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot parse matrix table {path}: {e}")
    numeric = frame.select_dtypes(include="number")
    if numeric.shape[1] != dim * dim:
        raise DimensionMismatch(f"{path}: expected {dim * dim} numeric columns for {dim}x{dim} matrices, "
                                f"got {numeric.shape[1]}")
    return numeric.to_numpy(dtype=np.float64).reshape(-1, dim, dim)


def matrix_columns(prefix: str, dim: int) -> list:
    return [f"{prefix}{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]
