"""Input validation helpers used across the estimators and solvers."""

from __future__ import annotations

import numpy as np

SIMPLEX_ATOL = 1e-12


def as_float_vector(x, name="x"):
    """Coerce to a 1-d float64 array of finite values."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_matrix(x, name="x"):
    """Coerce to a 2-d float64 array of finite values."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_simplex(w, n=None, name="weights", atol=SIMPLEX_ATOL):
    """Validate a probability vector: nonnegative entries summing to one.

    Returns a normalized copy (the tiny float drift left after validation is
    divided out so downstream cumulative sums hit 1 exactly).
    """
    arr = as_float_vector(w, name)
    if n is not None and arr.size != n:
        raise ValueError(f"{name} must have length {n}, got {arr.size}")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    total = arr.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {total!r})")
    return arr / total


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_unit_interval(value, name, open_left=False, open_right=False):
    value = float(value)
    lo_ok = value > 0 if open_left else value >= 0
    hi_ok = value < 1 if open_right else value <= 1
    if not (np.isfinite(value) and lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in the unit interval, got {value!r}")
    return value
