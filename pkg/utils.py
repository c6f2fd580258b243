"""
Utility Functions

This module contains helper functions shared by the numerical modules and the
CLI: the worker pool, seed derivation, CSV/JSON file handling and run-config
file parsing.
"""

import json
import math
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from joblib import Parallel, delayed
from joblib.parallel import cpu_count

import config
from data_models import FiniteMetricSpace
from exceptions import ConfigurationError, NonSquareMatrixError
from logger import get_logger

logger = get_logger(__name__)


def parallel_map(function: Callable, inputs: Sequence, n_jobs: int = 1) -> List[Any]:
    """Apply ``function`` to every input, results in input order.

    Uses joblib's threading backend; numpy releases the GIL in the heavy
    kernels. ``n_jobs == 1`` runs inline.
    """
    inputs = list(inputs)
    if n_jobs is None or n_jobs == 1 or len(inputs) <= 1:
        return [function(item) for item in inputs]
    if n_jobs < 0:
        n_jobs = cpu_count()
    n_jobs = min(cpu_count(), n_jobs, len(inputs))
    return Parallel(n_jobs=n_jobs, backend="threading")(delayed(function)(item) for item in inputs)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded from (seed, keys...), independent of scheduling."""
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def sanitize_filename(filename: str) -> str:
    """
    Sanitize filename by removing/replacing invalid characters.

    Args:
        filename: Original filename

    Returns:
        Sanitized filename safe for filesystem
    """
    invalid_chars = ['<', '>', ':', '"', '|', '?', '*', '\\', '/', ' ']

    sanitized = filename
    for char in invalid_chars:
        sanitized = sanitized.replace(char, '_')

    while '__' in sanitized:
        sanitized = sanitized.replace('__', '_')

    return sanitized.strip('_ ')


# =============================================================================
# Distance matrices as CSV
# =============================================================================

def save_metric_csv(space_or_matrix, output_path: str, labels: Optional[List[str]] = None) -> Path:
    """Write a distance matrix row-major with a header row of labels."""
    if isinstance(space_or_matrix, FiniteMetricSpace):
        matrix = space_or_matrix.matrix()
        labels = labels or space_or_matrix.labels
    else:
        matrix = np.asarray(space_or_matrix, dtype=float)
    if labels is None:
        labels = [str(i) for i in range(matrix.shape[0])]
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(matrix, columns=list(labels)).to_csv(path, index=False, float_format='%.17g')
    return path


def load_metric_csv(input_path: str, tol: float = config.TOL_METRIC) -> FiniteMetricSpace:
    """Read a distance matrix written by save_metric_csv (not validated here)."""
    frame = pd.read_csv(input_path, float_precision='round_trip')
    matrix = frame.to_numpy(dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSquareMatrixError(matrix.shape)
    labels = [str(c) for c in frame.columns]
    return FiniteMetricSpace(labels=labels, dist=matrix, tol=tol, name=Path(input_path).stem)


# =============================================================================
# Deterministic JSON
# =============================================================================

def to_jsonable(value: Any, digits: int = config.JSON_FLOAT_DIGITS) -> Any:
    """Convert numpy containers and round floats so output is stable text."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return round(value, digits)
    return value


def write_json(data: Dict[str, Any], output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    return output_path


# =============================================================================
# Run-config files
# =============================================================================

def parse_float_list(text: Any, item: str) -> List[float]:
    """Parse "0.1, 0.05" or a sequence into floats."""
    if isinstance(text, (list, tuple)):
        values = text
    else:
        values = [part for part in str(text).replace(';', ',').split(',') if part.strip()]
    try:
        return [float(v) for v in values]
    except ValueError as e:
        raise ConfigurationError(item, f"expected a comma-separated list of numbers: {e}")


def coerce_scalar(text: str) -> Any:
    """int, float, bool or string from a config value."""
    lowered = text.strip().lower()
    if lowered in ("true", "yes"):
        return True
    if lowered in ("false", "no"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text.strip()


def read_run_config_file(config_path: str) -> Dict[str, str]:
    """Flat ``key = value`` file, one dotted key per line, '#' comments."""
    path = Path(config_path)
    if not path.is_file():
        raise ConfigurationError(str(config_path), "config file does not exist")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigurationError(missing[0], "key has no value")
    logger.debug(f"Read {len(values)} key(s) from {path}")
    return {key: value for key, value in values.items()}


def chunked(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]
