"""Input validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


def check_image_stack(X, name: str = "X") -> np.ndarray:
    """Validate a stack of 2D images as a finite float (n, h, w) array.

    A single 2D image is promoted to a stack of one.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be a (n, h, w) image stack, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise ShapeError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains NaN/Inf")
    return arr


def check_paired_stacks(X, y) -> tuple[np.ndarray, np.ndarray]:
    """Validate two image stacks of identical (n, h, w) shape."""
    X = check_image_stack(X, "X")
    y = check_image_stack(y, "y")
    if X.shape != y.shape:
        raise ShapeError(f"X and y must share a shape, got {X.shape} vs {y.shape}")
    return X, y
