"""Direct (unfactorized) N-D convolution: the correctness oracle.

Two implementations of the same contract live here on purpose:

* :func:`conv_nd_direct` is the vectorized path used everywhere by default;
* :func:`conv_nd_naive` is plain Python loops, the oracle of record. It is slow
  but unambiguous, and optionally tallies multiply-adds into an
  :class:`OpCounter` so the analytic FLOP formulas can be checked against an
  actually-executed operation count.

Both compute cross-correlation (no kernel flip), "valid" by default with
explicit per-mode stride and zero padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import as_matrix, as_tensor, conv_output_extent, n_mode_product
from .errors import DimensionError

__all__ = ["ConvSpec", "OpCounter", "conv_nd_direct", "conv_nd_naive", "conv_1x1"]


def _per_mode(value, n: int, name: str) -> tuple[int, ...]:
    """Broadcast a scalar to ``n`` modes, or validate a length-``n`` sequence."""
    if np.isscalar(value):
        return (int(value),) * n
    out = tuple(int(v) for v in value)
    if len(out) != n:
        raise DimensionError(f"{name} must have one entry per spatial mode ({n}), got {len(out)}")
    return out


@dataclass(frozen=True)
class ConvSpec:
    """Channel counts, kernel extents and per-mode stride/padding of an N-D convolution.

    No bias term. ``strides``/``paddings`` accept a scalar (applied to every
    spatial mode) or one value per mode.
    """

    in_channels: int
    out_channels: int
    kernel_sizes: tuple[int, ...]
    strides: tuple[int, ...] = 1
    paddings: tuple[int, ...] = 0

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_sizes)
        if len(ks) < 1:
            raise DimensionError("ConvSpec needs at least one spatial mode")
        if self.in_channels < 1 or self.out_channels < 1 or any(k < 1 for k in ks):
            raise DimensionError(
                f"ConvSpec extents must all be >= 1: C={self.in_channels}, "
                f"T={self.out_channels}, kernels={ks}"
            )
        object.__setattr__(self, "kernel_sizes", ks)
        object.__setattr__(self, "strides", _per_mode(self.strides, len(ks), "strides"))
        object.__setattr__(self, "paddings", _per_mode(self.paddings, len(ks), "paddings"))
        if any(s < 1 for s in self.strides):
            raise DimensionError(f"strides must all be >= 1, got {self.strides}")
        if any(p < 0 for p in self.paddings):
            raise DimensionError(f"paddings must all be >= 0, got {self.paddings}")

    @property
    def n_spatial(self) -> int:
        return len(self.kernel_sizes)

    @classmethod
    def from_kernel(cls, w: np.ndarray, stride=1, padding=0) -> "ConvSpec":
        """Build a spec from a (T x C x K_0 x ... x K_{N-1}) kernel."""
        w = as_tensor(w)
        if w.ndim < 3:
            raise DimensionError(
                f"conv kernel needs order >= 3 (T, C, spatial...), got {w.ndim}"
            )
        return cls(w.shape[1], w.shape[0], w.shape[2:], stride, padding)

    def output_extents(self, input_extents) -> tuple[int, ...]:
        """Per-mode output extents: floor((D + 2p - K)/s) + 1."""
        ins = tuple(int(d) for d in input_extents)
        if len(ins) != self.n_spatial:
            raise DimensionError(
                f"expected {self.n_spatial} spatial extents, got {len(ins)}"
            )
        return tuple(
            conv_output_extent(d, k, s, p)
            for d, k, s, p in zip(ins, self.kernel_sizes, self.strides, self.paddings)
        )


@dataclass
class OpCounter:
    """Multiply-add tally for instrumented naive loops. 1 multiply-add = 2 FLOPs."""

    madds: int = 0

    @property
    def flops(self) -> int:
        return 2 * self.madds


def _check_conv_operands(x: np.ndarray, w: np.ndarray, spec: ConvSpec | None):
    x = as_tensor(x)
    w = as_tensor(w)
    if spec is None:
        spec = ConvSpec.from_kernel(w)
    if w.ndim != 2 + spec.n_spatial or w.shape[:2] != (spec.out_channels, spec.in_channels) \
            or w.shape[2:] != spec.kernel_sizes:
        raise DimensionError(
            f"kernel shape {w.shape} does not match spec "
            f"(T={spec.out_channels}, C={spec.in_channels}, K={spec.kernel_sizes})"
        )
    if x.ndim != 1 + spec.n_spatial:
        raise DimensionError(
            f"activation order {x.ndim} does not match kernel with "
            f"{spec.n_spatial} spatial modes"
        )
    if x.shape[0] != spec.in_channels:
        raise DimensionError(
            f"channel mismatch: activation has {x.shape[0]} channels, "
            f"kernel expects {spec.in_channels}"
        )
    return x, w, spec


def _pad_spatial(x: np.ndarray, paddings: tuple[int, ...]) -> np.ndarray:
    if not any(paddings):
        return x
    return np.pad(x, [(0, 0)] + [(p, p) for p in paddings])


def conv_nd_direct(x: np.ndarray, w: np.ndarray, spec: ConvSpec | None = None) -> np.ndarray:
    """N-D convolution of ``x`` (C x D_0 x ... ) with kernel ``w`` (T x C x K_0 x ...).

    ``out[t, y...] = sum_c sum_k w[t, c, k...] x[c, y*s + k - p, ...]``
    (cross-correlation, zero padding). ``spec`` defaults to stride 1, padding 0
    with extents taken from ``w``.
    """
    x, w, spec = _check_conv_operands(x, w, spec)
    out_spatial = spec.output_extents(x.shape[1:])
    xp = _pad_spatial(x, spec.paddings)
    out = np.zeros((spec.out_channels,) + out_spatial)
    # One accumulation per kernel offset, in fixed row-major offset order.
    for offs in np.ndindex(*spec.kernel_sizes):
        window = xp[
            (slice(None),)
            + tuple(
                slice(o, o + s * (n - 1) + 1, s)
                for o, s, n in zip(offs, spec.strides, out_spatial)
            )
        ]
        out += np.tensordot(w[(slice(None), slice(None)) + offs], window, axes=(1, 0))
    return out


def conv_nd_naive(
    x: np.ndarray,
    w: np.ndarray,
    spec: ConvSpec | None = None,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Loop-nest reference for :func:`conv_nd_direct`; the oracle of record.

    Every multiply-add is executed (and counted) explicitly, including those
    that touch zero padding, so the tally equals the analytic formula
    C * prod(K) per output element exactly.
    """
    x, w, spec = _check_conv_operands(x, w, spec)
    out_spatial = spec.output_extents(x.shape[1:])
    xp = _pad_spatial(x, spec.paddings)
    out = np.zeros((spec.out_channels,) + out_spatial)
    for t in range(spec.out_channels):
        for pos in np.ndindex(*out_spatial):
            acc = 0.0
            for c in range(spec.in_channels):
                for offs in np.ndindex(*spec.kernel_sizes):
                    coord = tuple(
                        y * s + k for y, s, k in zip(pos, spec.strides, offs)
                    )
                    acc += w[(t, c) + offs] * xp[(c,) + coord]
                    if counter is not None:
                        counter.madds += 1
            out[(t,) + pos] = acc
    return out


def conv_1x1(x: np.ndarray, w2d: np.ndarray) -> np.ndarray:
    """Pointwise (1x1) convolution: contraction of the channel mode with ``w2d`` (T x C)."""
    x = as_tensor(x)
    w2d = as_matrix(w2d)
    if x.shape[0] != w2d.shape[1]:
        raise DimensionError(
            f"channel mismatch: activation has {x.shape[0]} channels, "
            f"1x1 kernel expects {w2d.shape[1]}"
        )
    return n_mode_product(x, w2d, 0)
