"""Dense complex 3-way tensor primitives.

Layout convention used everywhere in the package: a tensor of shape
``(n1, n2, n3)`` is stored C-contiguous (row-major), so entry ``(a, b, c)``
sits at flat index ``a*n2*n3 + b*n3 + c``. This is exactly the ordering of
``kron(v1, kron(v2, v3))``, i.e. ``flatten(outer(v1, v2, v3)) == kron3(v1, v2, v3)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_tensor3",
    "flatten",
    "unflatten",
    "unfold",
    "fold",
    "mode_n_product",
    "slice_norm_sq",
    "kron3",
    "outer3",
]


def as_tensor3(t) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 3:
        raise ShapeError(f"expected a 3-way tensor, got shape {t.shape}")
    return t


def flatten(t: np.ndarray) -> np.ndarray:
    """Vectorize a tensor in the package's Kronecker-consistent order."""
    return np.ascontiguousarray(as_tensor3(t)).reshape(-1)


def unflatten(v: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.size != int(np.prod(shape)):
        raise ShapeError(f"cannot view vector of length {v.size} as {shape}")
    return v.reshape(shape)


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ShapeError(f"mode must be 1, 2 or 3, got {mode}")
    return mode - 1


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n matricization: rows indexed by the chosen mode."""
    axis = _check_mode(mode)
    t = as_tensor3(t)
    return np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1)


def fold(m: np.ndarray, mode: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a target tensor ``shape``."""
    axis = _check_mode(mode)
    rest = [s for i, s in enumerate(shape) if i != axis]
    return np.moveaxis(np.asarray(m).reshape(shape[axis], *rest), 0, axis)


def mode_n_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Tensor-times-matrix along ``mode`` (1-based).

    ``out[..., i, ...] = sum_k m[i, k] * t[..., k, ...]``; the size along
    ``mode`` becomes ``m.shape[0]``.
    """
    axis = _check_mode(mode)
    t = as_tensor3(t)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != t.shape[axis]:
        raise ShapeError(
            f"matrix of shape {m.shape} incompatible with mode {mode} of tensor {t.shape}"
        )
    out = np.tensordot(m, t, axes=([1], [axis]))  # new axis first
    return np.moveaxis(out, 0, axis)


def slice_norm_sq(t: np.ndarray, mode: int, index: int | None = None):
    """Squared Frobenius norm of the slice(s) taken along ``mode``.

    With ``index=None`` all slice norms are returned as a vector.
    """
    axis = _check_mode(mode)
    t = as_tensor3(t)
    others = tuple(i for i in range(3) if i != axis)
    if index is None:
        return np.sum(np.abs(t) ** 2, axis=others)
    if not 0 <= index < t.shape[axis]:
        raise ShapeError(f"slice index {index} out of range for mode {mode} of size {t.shape[axis]}")
    s = np.take(t, index, axis=axis)
    return float(np.sum(np.abs(s) ** 2))


def kron3(v1, v2, v3) -> np.ndarray:
    return np.kron(np.kron(np.ravel(v1), np.ravel(v2)), np.ravel(v3))


def outer3(v1, v2, v3) -> np.ndarray:
    return np.einsum("a,b,c->abc", np.ravel(v1), np.ravel(v2), np.ravel(v3))
