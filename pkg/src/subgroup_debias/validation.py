"""Input validation helpers, sklearn check_array flavor."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import DataError

__all__ = [
    "check_matrix",
    "check_binary_vector",
    "check_consistent_rows",
    "check_interval",
    "check_positive_int",
]


def check_matrix(a, name="X", min_rows=1, min_cols=1):
    """Coerce to a 2d float64 array with finite entries."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DataError(f"{name} must be 2d, got ndim={a.ndim}")
    if a.shape[0] < min_rows or a.shape[1] < min_cols:
        raise DataError(f"{name} has shape {a.shape}, need at least ({min_rows}, {min_cols})")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def check_binary_vector(y, name="y"):
    """Coerce to a 1d float64 array of 0/1 values."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise DataError(f"{name} is empty")
    bad = ~np.isin(y, (0.0, 1.0))
    if np.any(bad):
        raise DataError(f"{name} must be 0/1; first offending index {int(np.flatnonzero(bad)[0])}")
    return y


def check_consistent_rows(*named):
    """named: (array, name) pairs that must share their first dimension."""
    lengths = {name: np.asarray(a).shape[0] for a, name in named}
    if len(set(lengths.values())) > 1:
        raise DataError(f"inconsistent row counts: {lengths}")


def check_interval(x, lo, hi, name, open_left=False, open_right=False):
    if not isinstance(x, numbers.Real) or not np.isfinite(x):
        raise DataError(f"{name} must be a finite number, got {x!r}")
    ok_lo = x > lo if open_left else x >= lo
    ok_hi = x < hi if open_right else x <= hi
    if not (ok_lo and ok_hi):
        lb = "(" if open_left else "["
        rb = ")" if open_right else "]"
        raise DataError(f"{name}={x} outside {lb}{lo}, {hi}{rb}")
    return float(x)


def check_positive_int(x, name, minimum=1):
    if not isinstance(x, numbers.Integral):
        raise DataError(f"{name} must be an integer, got {type(x).__name__}")
    if x < minimum:
        raise DataError(f"{name}={x} must be >= {minimum}")
    return int(x)
