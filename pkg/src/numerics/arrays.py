from __future__ import annotations

from typing import Sequence, Union

import numpy as np
import numpy.typing as npt

from src.utils.errors import ArgumentError, NonFiniteError

# Every value in the lab is a float64 ndarray; 0-d arrays stand in for scalars.
DenseArray = npt.NDArray[np.float64]
ArrayLike = Union[DenseArray, Sequence[float], float]


def as_dense(values: ArrayLike, *, name: str = "array") -> DenseArray:
    """Coerce to a C-contiguous float64 array (a copy, never a view of caller data)."""
    try:
        arr = np.array(values, dtype=np.float64, copy=True, order="C")
    except (TypeError, ValueError) as e:
        raise ArgumentError(f"{name}: cannot convert to float64 array ({e})") from e
    return arr


def from_flat(shape: Sequence[int], data: Sequence[float], *, name: str = "array") -> DenseArray:
    """Build an array from a shape and row-major data, checking product(shape) == len(data)."""
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ArgumentError(f"{name}: shape entries must be positive, got {shape}")
    flat = np.asarray(data, dtype=np.float64).ravel()
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ArgumentError(f"{name}: shape {shape} needs {expected} values, got {flat.size}")
    return flat.reshape(shape).copy()


def require_finite(arr: DenseArray, *, name: str) -> DenseArray:
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{name}: {bad} non-finite entries", {"name": name, "non_finite": bad})
    return arr


def require_same_shape(a: DenseArray, b: DenseArray, *, what: str) -> None:
    if np.shape(a) != np.shape(b):
        raise ArgumentError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")
