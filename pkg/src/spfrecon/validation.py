"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import ShapeError, SizeError

# Voxel indices are written as 32-bit unsigned in volume files.
MAX_VOXELS = 2**31 - 1


def check_volume(v, name="volume", *, allow_complex=False, cubic=False):
    """Return ``v`` as a contiguous 3-D float64 (or complex128) array.

    Raises ShapeError for wrong dimensionality and ValueError for NaN/Inf.
    """
    arr = np.asarray(v)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-D, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has an empty axis: {arr.shape}")
    if arr.size > MAX_VOXELS:
        raise SizeError(f"{name} has {arr.size} voxels, limit is {MAX_VOXELS}")
    if np.iscomplexobj(arr):
        if not allow_complex:
            raise TypeError(f"{name} must be real-valued")
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
    else:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if cubic:
        check_cubic(arr, name)
    return arr


def check_spectrum(s, name="spectrum", *, cubic=False):
    """Return ``s`` as a contiguous complex128 3-D array."""
    arr = np.asarray(s)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-D, got shape {arr.shape}")
    if arr.size > MAX_VOXELS:
        raise SizeError(f"{name} has {arr.size} voxels, limit is {MAX_VOXELS}")
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    if cubic:
        check_cubic(arr, name)
    return arr


def check_cubic(arr, name="volume"):
    if len(set(arr.shape)) != 1:
        raise ShapeError(f"{name} must be cubic, got shape {arr.shape}")
    return arr.shape[0]


def check_same_shape(*arrays, names=None):
    shapes = [np.shape(a) for a in arrays]
    if len(set(shapes)) != 1:
        label = ", ".join(names) if names else "inputs"
        raise ShapeError(f"shape mismatch between {label}: {shapes}")
    return shapes[0]


def check_random_state(seed):
    """Turn ``seed`` into a ``np.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
