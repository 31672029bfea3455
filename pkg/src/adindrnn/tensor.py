"""Dense array primitives shared by every layer.

Tensors are plain :class:`numpy.ndarray` objects. The helpers here add the
shape checks the layers rely on and pin the few numerical conventions
(max-shifted softmax, vector-against-last-axis broadcasting) in one place.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionError",
    "as_tensor",
    "matmul",
    "hadamard",
    "softmax_rows",
    "mean_over_axis",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(values, dtype=np.float64) -> np.ndarray:
    """Return ``values`` as a contiguous array with every extent >= 1."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(extent < 1 for extent in arr.shape):
        raise DimensionError(f"all extents must be positive, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    return a @ b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise product.

    ``b`` must either share ``a``'s shape or be a vector whose length equals
    ``a``'s last extent. No other broadcasting is accepted.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape == b.shape:
        return a * b
    if b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]:
        return a * b
    raise DimensionError(f"hadamard shapes incompatible: {a.shape} and {b.shape}")


def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a rank-2 tensor, shifted by the row max."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"softmax_rows expects a rank-2 tensor, got {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mean_over_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Mean along ``axis``, taken relative to the first slice.

    Shifting by the first slice keeps the result exact when every slice is
    equal (a constant tensor returns its constant bit for bit).
    """
    a = np.asarray(a)
    if not 0 <= axis < a.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {a.ndim}")
    first = np.take(a, [0], axis=axis)
    return np.squeeze(first, axis=axis) + (a - first).mean(axis=axis)
