"""Input checks shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numbers

import numpy as np

from .mechanism import BOTTOM


def check_regions(X, n_regions: int, allow_bottom: bool = False) -> tuple[np.ndarray, bool]:
    """Coerce ``X`` to a 1-D integer array of region indices.

    Accepts a sequence or a single-column 2-D array. Returns the array and
    whether the input was 2-D, so callers can give back the same layout.
    """
    arr = np.asarray(X)
    was_2d = arr.ndim == 2
    if was_2d:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single column of regions, got shape {arr.shape}")
        arr = arr[:, 0]
    elif arr.ndim != 1:
        raise ValueError(f"expected 1-D region indices, got {arr.ndim}-D input")
    if arr.size == 0:
        raise ValueError("no samples given")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("region indices must be integers")
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"region indices must be integers, got dtype {arr.dtype}")
    arr = arr.astype(int)
    low = BOTTOM if allow_bottom else 0
    bad = (arr < low) | (arr >= n_regions)
    if allow_bottom:
        bad &= arr != BOTTOM
    if np.any(bad):
        raise ValueError(f"region index {arr[bad][0]} outside [0, {n_regions})")
    return arr, was_2d


def check_epsilon(epsilon, upper: float = 10.0) -> float:
    if not isinstance(epsilon, numbers.Real) or not 0 < epsilon <= upper:
        raise ValueError(f"epsilon must lie in (0, {upper}], got {epsilon!r}")
    return float(epsilon)


def check_seed(random_state) -> int:
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral) and random_state >= 0:
        return int(random_state)
    raise ValueError("random_state must be None or a nonnegative integer")
