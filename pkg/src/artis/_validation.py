"""Input coercion shared by the estimators."""
from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_frames(X, min_frames: int = 2) -> np.ndarray:
    """Return frames as a float64 ``(n, h, w)`` array.

    Accepts a :class:`~artis.io.FrameSequence`, a 3-D array, or a list of
    equally sized 2-D arrays.
    """
    frames = getattr(X, "frames", X)
    if isinstance(frames, (list, tuple)):
        shapes = {np.shape(f) for f in frames}
        if len(shapes) > 1:
            raise ValidationError(f"frames differ in size: {sorted(shapes)}")
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3:
        raise ValidationError(f"expected frames of shape (n, h, w), got {frames.shape}")
    if frames.shape[0] < min_frames:
        raise ValidationError(f"need at least {min_frames} frames, got {frames.shape[0]}")
    if not np.all(np.isfinite(frames)):
        raise ValidationError("frames contain non-finite values")
    return frames


def check_vectors(X, min_rows: int = 1) -> np.ndarray:
    """Return a finite float64 ``(n, dim)`` array from vectors or descriptor grids."""
    if hasattr(X, "vectors"):
        arr = X.vectors
    elif hasattr(X, "grids"):
        arr = X.flat()
    else:
        arr = X
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.reshape(arr.shape[0], -1)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D (n, dim) array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValidationError("vector dimension must be >= 1")
    if arr.shape[0] < min_rows:
        raise ValidationError(f"need at least {min_rows} vectors, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("input contains non-finite values")
    return arr


def check_odd(value: int, name: str, minimum: int = 3) -> int:
    if int(value) != value or value < minimum or value % 2 == 0:
        raise ValidationError(f"{name} must be an odd integer >= {minimum}, got {value}")
    return int(value)
