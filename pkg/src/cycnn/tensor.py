"""Dense tensor helpers.

Tensors are plain ``numpy.ndarray`` objects in (N, C, H, W) order. This module
holds the few operations the rest of the package relies on, with the shape and
finiteness checks that numpy does not do on its own.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_ELEMENTWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produced NaN or Inf."""


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        bad = int(np.size(t) - np.count_nonzero(np.isfinite(t)))
        raise NonFiniteError(f"{what} has {bad} non-finite element(s)")
    return t


def as_tensor(data, dtype=None) -> np.ndarray:
    """Return ``data`` as a contiguous rank-4 array.

    Arrays of rank < 4 are left-padded with singleton axes, so an (H, W) image
    becomes (1, 1, H, W) and a (C, H, W) image becomes (1, C, H, W).
    """
    t = np.ascontiguousarray(data, dtype=dtype or DEFAULT_DTYPE)
    if t.ndim > 4:
        raise ShapeError(f"expected rank <= 4, got shape {t.shape}")
    while t.ndim < 4:
        t = t[np.newaxis]
    return check_finite(t)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Apply ``op`` ('add', 'sub' or 'mul') to two equally shaped tensors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(a, b)
    return check_finite(out, f"{op} result")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of an R x K and a K x S matrix."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dims differ: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def cyclic_shift_rows(t: np.ndarray, k: int) -> np.ndarray:
    """Roll the height axis so that ``out[..., h, :] == t[..., (h - k) % H, :]``."""
    t = np.asarray(t)
    h = t.shape[-2]
    if h == 0:
        return t.copy()
    return np.roll(t, int(k) % h, axis=-2)
