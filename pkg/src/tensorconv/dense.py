"""Dense N-dimensional tensor primitives.

Dense tensors are plain ``numpy.ndarray`` values in row-major (C) order with
64-bit float elements; :func:`as_tensor` is the single validation/coercion
point. All operations here are pure functions: inputs are never mutated and
outputs are freshly allocated, so values can be shared freely across threads.

Conventions, fixed once for the whole package:

* indexing is 0-based everywhere;
* 1-D convolutions are cross-correlations (no kernel flip);
* :func:`unfold` puts the selected mode on the rows and the remaining modes
  on the columns in increasing mode order, row-major (last one fastest);
  :func:`fold` is its exact inverse;
* :func:`khatri_rao` orders rows with the first factor slowest, matching the
  unfold column order, so CP normal equations line up without permutations.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError

__all__ = [
    "as_tensor",
    "as_matrix",
    "n_mode_product",
    "mode_conv_1d",
    "conv_output_extent",
    "unfold",
    "fold",
    "khatri_rao",
]


def as_tensor(values) -> np.ndarray:
    """Coerce ``values`` to a float64 C-order array of order >= 1.

    Raises
    ------
    DimensionError
        If the value is 0-dimensional or has an empty mode.
    """
    t = np.asarray(values, dtype=np.float64)
    if t.ndim < 1:
        raise DimensionError("tensor order must be >= 1, got a scalar")
    if any(e < 1 for e in t.shape):
        raise DimensionError(f"tensor extents must all be >= 1, got shape {t.shape}")
    return np.ascontiguousarray(t)


def as_matrix(values) -> np.ndarray:
    """Coerce ``values`` to a 2-D float64 array."""
    m = as_tensor(values)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D tensor, got order {m.ndim}")
    return m


def n_mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Contract tensor ``t`` with matrix ``m`` along ``mode``.

    ``m`` has shape (J, I_mode); the result replaces extent I_mode with J:
    ``out[..., j, ...] = sum_k m[j, k] * t[..., k, ...]``.
    """
    t = as_tensor(t)
    m = as_matrix(m)
    if not 0 <= mode < t.ndim:
        raise DimensionError(f"mode {mode} out of range for order-{t.ndim} tensor")
    if m.shape[1] != t.shape[mode]:
        raise DimensionError(
            f"n_mode_product at mode {mode}: matrix has {m.shape[1]} columns "
            f"but tensor extent is {t.shape[mode]}"
        )
    out = np.tensordot(t, m, axes=([mode], [1]))
    return np.ascontiguousarray(np.moveaxis(out, -1, mode))


def conv_output_extent(extent: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    """Output extent of a 1-D convolution: floor((D + 2p - K)/s) + 1."""
    padded = extent + 2 * padding
    if kernel > padded:
        raise DimensionError(
            f"kernel of length {kernel} longer than padded extent {padded}"
        )
    if kernel < 1:
        raise DimensionError(f"kernel length must be >= 1, got {kernel}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise DimensionError(f"padding must be >= 0, got {padding}")
    return (padded - kernel) // stride + 1


def mode_conv_1d(
    t: np.ndarray,
    v: np.ndarray,
    mode: int,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Cross-correlate ``t`` with vector ``v`` along ``mode``.

    ``out[..., i, ...] = sum_k v[k] * t_padded[..., i*stride + k, ...]``
    with zero padding. Accumulation over k is in fixed ascending order.
    """
    t = as_tensor(t)
    v = as_tensor(v)
    if v.ndim != 1:
        raise DimensionError(f"1-D kernel expected, got order {v.ndim}")
    if not 0 <= mode < t.ndim:
        raise DimensionError(f"mode {mode} out of range for order-{t.ndim} tensor")
    k = v.shape[0]
    out_len = conv_output_extent(t.shape[mode], k, stride, padding)

    work = np.moveaxis(t, mode, -1)
    if padding:
        pad = [(0, 0)] * work.ndim
        pad[-1] = (padding, padding)
        work = np.pad(work, pad)
    out = np.zeros(work.shape[:-1] + (out_len,))
    for j in range(k):
        out += v[j] * work[..., j : j + stride * (out_len - 1) + 1 : stride]
    return np.ascontiguousarray(np.moveaxis(out, -1, mode))


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Matricize ``t``: ``mode`` on the rows, remaining modes on the columns.

    Columns run over the remaining modes in increasing index order, row-major
    (the last remaining mode varies fastest).
    """
    t = as_tensor(t)
    if not 0 <= mode < t.ndim:
        raise DimensionError(f"mode {mode} out of range for order-{t.ndim} tensor")
    return np.ascontiguousarray(np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1))


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Exact inverse of :func:`unfold`: ``fold(unfold(t, mode), mode, t.shape) == t``."""
    m = as_matrix(m)
    shape = tuple(int(e) for e in shape)
    if not 0 <= mode < len(shape):
        raise DimensionError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    if m.shape[0] != shape[mode] or m.size != int(np.prod(shape)):
        raise DimensionError(
            f"fold at mode {mode}: matrix shape {m.shape} inconsistent with "
            f"target shape {shape}"
        )
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode))


def khatri_rao(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product of 2-D factors sharing a column count.

    Rows are ordered with the first factor slowest, so
    ``khatri_rao(factors).sum(axis=1).reshape(extents)`` reconstructs a
    Kruskal tensor in row-major order.
    """
    if len(factors) == 0:
        raise DimensionError("khatri_rao requires at least one factor")
    mats = [as_matrix(f) for f in factors]
    r = mats[0].shape[1]
    for i, f in enumerate(mats):
        if f.shape[1] != r:
            raise DimensionError(
                f"khatri_rao: factor 0 has {r} columns but factor {i} has {f.shape[1]}"
            )
    out = mats[0]
    for f in mats[1:]:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, r)
    return np.ascontiguousarray(out)
