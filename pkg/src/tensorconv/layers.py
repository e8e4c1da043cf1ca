"""Executable factorized convolution layers.

Every layer here is an immutable value built from decomposition factors plus a
:class:`~tensorconv.convref.ConvSpec`, with a pure forward function and a
``dense_kernel()`` method returning the dense kernel the layer implements.
This keeps the universal oracle check one line: a factorized forward must
match ``conv_nd_direct(x, layer.dense_kernel(), layer.spec)``.

The separable (CP) chain is the execution spine: contract the input channels,
run one grouped per-rank 1-D convolution per spatial mode in increasing mode
order, contract to the output channels. ``cp_conv_forward`` and
``ho_cp_conv_forward`` share that spine, so with no activations and no skip
the two are bitwise identical.

``ho_cp_forward_naive`` re-executes the chain as plain Python loops and can
tally multiply-adds; it is the independent route used to validate both the
vectorized chain and the analytic FLOP formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .convref import ConvSpec, OpCounter, conv_1x1, conv_nd_direct
from .decomp import KruskalTensor, TuckerTensor, kruskal_to_dense, merge_spatial_factors
from .dense import as_matrix, as_tensor, conv_output_extent, n_mode_product
from .errors import DimensionError, RankError

__all__ = [
    "Activation",
    "ReLU",
    "PReLU",
    "FrozenBatchNorm",
    "CpConvLayer",
    "TuckerConvLayer",
    "HoCpConvLayer",
    "MobileNetV1Block",
    "MobileNetV2Block",
    "cp_conv_forward",
    "tucker_conv_forward",
    "ho_cp_conv_forward",
    "ho_cp_forward_naive",
    "build_mobilenet_v1",
    "build_mobilenet_v2",
    "mobilenet_v1_forward",
    "mobilenet_v2_forward",
]


# ---------------------------------------------------------------------------
# Activations (forward-only, fixed parameters)
# ---------------------------------------------------------------------------

class Activation:
    """Base class; subclasses implement ``apply`` on (channels x spatial...) arrays."""

    def apply(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ReLU(Activation):
    def apply(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(z, 0.0)


@dataclass(frozen=True)
class PReLU(Activation):
    """max(z, 0) + slope * min(z, 0) with a fixed slope."""

    slope: float = 0.25

    def apply(self, z: np.ndarray) -> np.ndarray:
        return np.where(z >= 0.0, z, self.slope * z)


@dataclass(frozen=True)
class FrozenBatchNorm(Activation):
    """Batch norm with frozen statistics: scale*(z - mean)/sqrt(var + eps) + shift.

    Parameters are scalars or per-channel arrays (channel axis 0).
    """

    mean: tuple | float = 0.0
    var: tuple | float = 1.0
    scale: tuple | float = 1.0
    shift: tuple | float = 0.0
    eps: float = 1e-5

    def _param(self, p, ndim: int) -> np.ndarray:
        arr = np.asarray(p, dtype=np.float64)
        if arr.ndim == 0:
            return arr
        return arr.reshape((-1,) + (1,) * (ndim - 1))

    def apply(self, z: np.ndarray) -> np.ndarray:
        mean = self._param(self.mean, z.ndim)
        var = self._param(self.var, z.ndim)
        scale = self._param(self.scale, z.ndim)
        shift = self._param(self.shift, z.ndim)
        return scale * (z - mean) / np.sqrt(var + self.eps) + shift


def _normalize_activations(
    activations: Optional[Sequence[Optional[Activation]]], n_spatial: int
) -> Optional[tuple[Optional[Activation], ...]]:
    if activations is None:
        return None
    acts = tuple(activations)
    if len(acts) != n_spatial:
        raise DimensionError(
            f"expected one activation slot per spatial mode ({n_spatial}), got {len(acts)}"
        )
    return acts


# ---------------------------------------------------------------------------
# Layer types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CpConvLayer:
    """Separable convolution defined by a Kruskal kernel.

    Factor order is (U_out, U_in, U_k0, ..., U_k{N-1}) matching the kernel
    modes (T, C, K_0, ..., K_{N-1}).
    """

    kruskal: KruskalTensor
    spec: ConvSpec

    def __post_init__(self):
        expected = (self.spec.out_channels, self.spec.in_channels) + self.spec.kernel_sizes
        if self.kruskal.shape != expected:
            raise DimensionError(
                f"Kruskal factor rows {self.kruskal.shape} do not match conv "
                f"spec extents {expected}"
            )

    @property
    def rank(self) -> int:
        return self.kruskal.rank

    def dense_kernel(self) -> np.ndarray:
        return kruskal_to_dense(self.kruskal)


@dataclass(frozen=True)
class TuckerConvLayer:
    """Bottleneck convolution: 1x1 reduce, small dense conv with the absorbed
    core, 1x1 expand.

    ``down`` is (R_in x C), ``core`` is (R_out x R_in x K_0 x ...), ``up`` is
    (T x R_out).
    """

    down: np.ndarray
    core: np.ndarray
    up: np.ndarray
    spec: ConvSpec

    def __post_init__(self):
        down = as_matrix(self.down)
        core = as_tensor(self.core)
        up = as_matrix(self.up)
        if core.ndim != 2 + self.spec.n_spatial:
            raise DimensionError(
                f"core order {core.ndim} does not match spec with "
                f"{self.spec.n_spatial} spatial modes"
            )
        if core.shape[2:] != self.spec.kernel_sizes:
            raise DimensionError(
                f"core spatial extents {core.shape[2:]} do not match kernel "
                f"sizes {self.spec.kernel_sizes}"
            )
        if down.shape != (core.shape[1], self.spec.in_channels):
            raise DimensionError(
                f"down factor shape {down.shape} inconsistent with core "
                f"rank {core.shape[1]} and {self.spec.in_channels} input channels"
            )
        if up.shape != (self.spec.out_channels, core.shape[0]):
            raise DimensionError(
                f"up factor shape {up.shape} inconsistent with core rank "
                f"{core.shape[0]} and {self.spec.out_channels} output channels"
            )
        object.__setattr__(self, "down", down)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "up", up)

    @property
    def ranks(self) -> tuple[int, int]:
        return (self.core.shape[0], self.core.shape[1])

    @classmethod
    def from_tucker(cls, t: TuckerTensor, spec: ConvSpec) -> "TuckerConvLayer":
        """Build from a Tucker-decomposed kernel by absorbing the spatial factors."""
        from .decomp import absorb_spatial

        if t.core.ndim != 2 + spec.n_spatial:
            raise DimensionError(
                f"Tucker kernel order {t.core.ndim} does not match spec with "
                f"{spec.n_spatial} spatial modes"
            )
        absorbed = absorb_spatial(t, tuple(range(2, t.core.ndim)))
        return cls(absorbed.factors[1].T, absorbed.core, absorbed.factors[0], spec)

    def dense_kernel(self) -> np.ndarray:
        w = n_mode_product(self.core, self.up, 0)
        return n_mode_product(w, self.down.T, 1)


@dataclass(frozen=True)
class HoCpConvLayer:
    """Higher-order CP convolution: the separable chain plus optional per-stage
    activations and an optional skip factor.

    ``activations`` holds one optional activation per spatial stage (applied
    after that stage's grouped 1-D convolution). ``skip`` is a (T x C) matrix;
    when present the forward adds the channel-contracted input, which requires
    the convolution to preserve the spatial extents.
    """

    cp: CpConvLayer
    activations: Optional[tuple[Optional[Activation], ...]] = None
    skip: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "activations",
            _normalize_activations(self.activations, self.cp.spec.n_spatial),
        )
        if self.skip is not None:
            skip = as_matrix(self.skip)
            expected = (self.cp.spec.out_channels, self.cp.spec.in_channels)
            if skip.shape != expected:
                raise DimensionError(
                    f"skip factor shape {skip.shape} must be (out_channels, "
                    f"in_channels) = {expected}"
                )
            object.__setattr__(self, "skip", skip)

    @property
    def spec(self) -> ConvSpec:
        return self.cp.spec

    @property
    def rank(self) -> int:
        return self.cp.rank

    def dense_kernel(self) -> np.ndarray:
        return self.cp.dense_kernel()


@dataclass(frozen=True)
class MobileNetV1Block:
    """Depthwise conv with one merged 2-D spatial kernel per channel, then a
    pointwise conv. Channel count equals the depthwise multiplicity (R == C).
    """

    spatial: np.ndarray  # (K_h, K_w, R)
    pointwise: np.ndarray  # (T, C)
    spec: ConvSpec

    def __post_init__(self):
        spatial = as_tensor(self.spatial)
        pointwise = as_matrix(self.pointwise)
        if spatial.ndim != 3:
            raise DimensionError(
                f"merged spatial factor must be 3-D (K_h, K_w, R), got order {spatial.ndim}"
            )
        if self.spec.n_spatial != 2:
            raise DimensionError("MobileNet blocks are defined for 2 spatial modes")
        if spatial.shape[:2] != self.spec.kernel_sizes:
            raise DimensionError(
                f"spatial factor extents {spatial.shape[:2]} do not match "
                f"kernel sizes {self.spec.kernel_sizes}"
            )
        if spatial.shape[2] != self.spec.in_channels:
            raise RankError(
                f"depthwise block needs rank == input channels, got rank "
                f"{spatial.shape[2]} with {self.spec.in_channels} channels"
            )
        if pointwise.shape != (self.spec.out_channels, self.spec.in_channels):
            raise DimensionError(
                f"pointwise shape {pointwise.shape} must be "
                f"({self.spec.out_channels}, {self.spec.in_channels})"
            )
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "pointwise", pointwise)

    @property
    def rank(self) -> int:
        return self.spatial.shape[2]

    def dense_kernel(self) -> np.ndarray:
        return np.einsum("tc,jic->tcji", self.pointwise, self.spatial)


@dataclass(frozen=True)
class MobileNetV2Block:
    """Inverted bottleneck: 1x1 down to the rank, depthwise conv with the
    merged spatial factor, 1x1 up to the output channels.
    """

    down: np.ndarray  # (R, C)
    spatial: np.ndarray  # (K_h, K_w, R)
    up: np.ndarray  # (T, R)
    spec: ConvSpec

    def __post_init__(self):
        down = as_matrix(self.down)
        spatial = as_tensor(self.spatial)
        up = as_matrix(self.up)
        if spatial.ndim != 3:
            raise DimensionError(
                f"merged spatial factor must be 3-D (K_h, K_w, R), got order {spatial.ndim}"
            )
        if self.spec.n_spatial != 2:
            raise DimensionError("MobileNet blocks are defined for 2 spatial modes")
        if spatial.shape[:2] != self.spec.kernel_sizes:
            raise DimensionError(
                f"spatial factor extents {spatial.shape[:2]} do not match "
                f"kernel sizes {self.spec.kernel_sizes}"
            )
        r = spatial.shape[2]
        if down.shape != (r, self.spec.in_channels):
            raise DimensionError(
                f"down factor shape {down.shape} must be ({r}, {self.spec.in_channels})"
            )
        if up.shape != (self.spec.out_channels, r):
            raise DimensionError(
                f"up factor shape {up.shape} must be ({self.spec.out_channels}, {r})"
            )
        object.__setattr__(self, "down", down)
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "up", up)

    @property
    def rank(self) -> int:
        return self.spatial.shape[2]

    def dense_kernel(self) -> np.ndarray:
        return np.einsum("tr,rc,jir->tcji", self.up, self.down, self.spatial)


# ---------------------------------------------------------------------------
# Execution primitives
# ---------------------------------------------------------------------------

def _grouped_conv_1d(
    z: np.ndarray, kernels: np.ndarray, mode: int, stride: int, padding: int
) -> np.ndarray:
    """Per-channel 1-D convolution along ``mode``: channel r uses kernels[:, r].

    ``z`` is (R x spatial...), ``kernels`` is (K x R).
    """
    k, r = kernels.shape
    out_len = conv_output_extent(z.shape[mode], k, stride, padding)
    work = np.moveaxis(z, mode, -1)
    if padding:
        pad = [(0, 0)] * work.ndim
        pad[-1] = (padding, padding)
        work = np.pad(work, pad)
    shape = (r,) + (1,) * (work.ndim - 1)
    out = np.zeros(work.shape[:-1] + (out_len,))
    for j in range(k):
        out += kernels[j].reshape(shape) * work[..., j : j + stride * (out_len - 1) + 1 : stride]
    return np.ascontiguousarray(np.moveaxis(out, -1, mode))


def _check_activation(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 1 + spec.n_spatial:
        raise DimensionError(
            f"activation order {x.ndim} does not match {spec.n_spatial} spatial modes"
        )
    if x.shape[0] != spec.in_channels:
        raise DimensionError(
            f"channel mismatch: activation has {x.shape[0]} channels, "
            f"layer expects {spec.in_channels}"
        )
    return x


def _separable_chain(
    x: np.ndarray,
    kruskal: KruskalTensor,
    spec: ConvSpec,
    activations: Optional[tuple[Optional[Activation], ...]] = None,
    mode_order: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Channel contraction, grouped per-rank 1-D convolutions, output contraction.

    ``mode_order`` exists to check that separable spatial stages commute;
    the default (and the documented behaviour) is increasing mode order.
    """
    u_out, u_in, *u_spatial = kruskal.factors
    z = n_mode_product(x, u_in.T, 0)
    order = range(spec.n_spatial) if mode_order is None else mode_order
    for i in order:
        z = _grouped_conv_1d(z, u_spatial[i], i + 1, spec.strides[i], spec.paddings[i])
        if activations is not None and activations[i] is not None:
            z = activations[i].apply(z)
    return n_mode_product(z, u_out, 0)


def _depthwise_conv_2d(x: np.ndarray, spatial: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Depthwise 2-D convolution: channel r filtered with spatial[:, :, r]."""
    r = spatial.shape[2]
    if x.shape[0] != r:
        raise DimensionError(
            f"depthwise input has {x.shape[0]} channels but {r} spatial kernels"
        )
    out_spatial = spec.output_extents(x.shape[1:])
    xp = x
    if any(spec.paddings):
        xp = np.pad(x, [(0, 0)] + [(p, p) for p in spec.paddings])
    out = np.zeros((r,) + out_spatial)
    for j in range(spatial.shape[0]):
        for i in range(spatial.shape[1]):
            window = xp[
                :,
                j : j + spec.strides[0] * (out_spatial[0] - 1) + 1 : spec.strides[0],
                i : i + spec.strides[1] * (out_spatial[1] - 1) + 1 : spec.strides[1],
            ]
            out += spatial[j, i, :].reshape(r, 1, 1) * window
    return out


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def cp_conv_forward(layer: CpConvLayer, x: np.ndarray) -> np.ndarray:
    """Separable-chain execution of the Kruskal kernel; equals
    ``conv_nd_direct(x, layer.dense_kernel(), layer.spec)``.
    """
    x = _check_activation(x, layer.spec)
    return _separable_chain(x, layer.kruskal, layer.spec)


def tucker_conv_forward(layer: TuckerConvLayer, x: np.ndarray) -> np.ndarray:
    """1x1 reduce, dense small conv with the absorbed core, 1x1 expand."""
    x = _check_activation(x, layer.spec)
    z = conv_1x1(x, layer.down)
    core_spec = ConvSpec(
        layer.core.shape[1],
        layer.core.shape[0],
        layer.spec.kernel_sizes,
        layer.spec.strides,
        layer.spec.paddings,
    )
    z = conv_nd_direct(z, layer.core, core_spec)
    return conv_1x1(z, layer.up)


def ho_cp_conv_forward(layer: HoCpConvLayer, x: np.ndarray) -> np.ndarray:
    """Separable chain with optional per-stage activations and skip factor.

    With all activations absent and no skip this is bitwise identical to
    :func:`cp_conv_forward`.
    """
    x = _check_activation(x, layer.spec)
    out = _separable_chain(x, layer.cp.kruskal, layer.spec, layer.activations)
    if layer.skip is not None:
        if out.shape[1:] != x.shape[1:]:
            raise DimensionError(
                f"skip connection requires preserved spatial extents, got "
                f"{x.shape[1:]} in and {out.shape[1:]} out"
            )
        out = out + n_mode_product(x, layer.skip, 0)
    return out


def ho_cp_forward_naive(
    layer: HoCpConvLayer, x: np.ndarray, counter: Optional[OpCounter] = None
) -> np.ndarray:
    """Loop-nest re-execution of :func:`ho_cp_conv_forward`.

    Independent of the vectorized chain; optionally tallies one multiply-add
    per executed multiply-accumulate (activations are not counted).
    """
    x = _check_activation(x, layer.spec)
    spec = layer.spec
    u_out, u_in, *u_spatial = layer.cp.kruskal.factors
    rank = layer.cp.rank

    z = np.zeros((rank,) + x.shape[1:])
    for r in range(rank):
        for pos in np.ndindex(*x.shape[1:]):
            acc = 0.0
            for c in range(spec.in_channels):
                acc += u_in[c, r] * x[(c,) + pos]
                if counter is not None:
                    counter.madds += 1
            z[(r,) + pos] = acc

    for i in range(spec.n_spatial):
        kern = u_spatial[i]
        k = kern.shape[0]
        stride, padding = spec.strides[i], spec.paddings[i]
        out_len = conv_output_extent(z.shape[i + 1], k, stride, padding)
        if padding:
            pad = [(0, 0)] * z.ndim
            pad[i + 1] = (padding, padding)
            zp = np.pad(z, pad)
        else:
            zp = z
        nxt = np.zeros(z.shape[: i + 1] + (out_len,) + z.shape[i + 2 :])
        for idx in np.ndindex(*nxt.shape):
            r = idx[0]
            acc = 0.0
            for j in range(k):
                src = list(idx)
                src[i + 1] = idx[i + 1] * stride + j
                acc += kern[j, r] * zp[tuple(src)]
                if counter is not None:
                    counter.madds += 1
            nxt[idx] = acc
        z = nxt
        if layer.activations is not None and layer.activations[i] is not None:
            z = layer.activations[i].apply(z)

    out = np.zeros((spec.out_channels,) + z.shape[1:])
    for t in range(spec.out_channels):
        for pos in np.ndindex(*z.shape[1:]):
            acc = 0.0
            for r in range(rank):
                acc += u_out[t, r] * z[(r,) + pos]
                if counter is not None:
                    counter.madds += 1
            out[(t,) + pos] = acc

    if layer.skip is not None:
        if out.shape[1:] != x.shape[1:]:
            raise DimensionError(
                f"skip connection requires preserved spatial extents, got "
                f"{x.shape[1:]} in and {out.shape[1:]} out"
            )
        for t in range(spec.out_channels):
            for pos in np.ndindex(*x.shape[1:]):
                acc = 0.0
                for c in range(spec.in_channels):
                    acc += layer.skip[t, c] * x[(c,) + pos]
                    if counter is not None:
                        counter.madds += 1
                out[(t,) + pos] += acc
    return out


# ---------------------------------------------------------------------------
# MobileNet constructions
# ---------------------------------------------------------------------------

def build_mobilenet_v1(k: KruskalTensor, stride=1, padding=0) -> MobileNetV1Block:
    """Depthwise-separable block from a 4-mode Kruskal kernel with R == C.

    The merged spatial factor pairs rank components with input channels, so
    the block reproduces the source CP convolution exactly when the
    input-channel factor is the identity (the "first 1x1 is dropped" reading);
    for a general channel factor the block implements its own Kruskal kernel
    (pointwise, identity, spatial columns), available via ``dense_kernel``.
    """
    pointwise, spatial = merge_spatial_factors(k)
    u_t, u_c = k.factors[0], k.factors[1]
    spec = ConvSpec(u_c.shape[0], u_t.shape[0], k.shape[2:], stride, padding)
    return MobileNetV1Block(spatial, pointwise, spec)


def build_mobilenet_v2(k: KruskalTensor, stride=1, padding=0) -> MobileNetV2Block:
    """Inverted-bottleneck block from a 4-mode Kruskal kernel (any rank).

    Only the spatial factors are merged; both channel factors are kept, so the
    block is exactly equivalent to the source CP convolution.
    """
    if k.order != 4:
        raise DimensionError(
            f"build_mobilenet_v2 expects a 4-mode Kruskal tensor, got order {k.order}"
        )
    u_t, u_c, u_h, u_w = k.factors
    spatial = u_h[:, None, :] * u_w[None, :, :]
    spec = ConvSpec(u_c.shape[0], u_t.shape[0], k.shape[2:], stride, padding)
    return MobileNetV2Block(u_c.T, spatial, u_t, spec)


def mobilenet_v1_forward(block: MobileNetV1Block, x: np.ndarray) -> np.ndarray:
    """Depthwise conv with the merged spatial kernel, then the pointwise conv."""
    x = _check_activation(x, block.spec)
    z = _depthwise_conv_2d(x, block.spatial, block.spec)
    return conv_1x1(z, block.pointwise)


def mobilenet_v2_forward(block: MobileNetV2Block, x: np.ndarray) -> np.ndarray:
    """1x1 down, depthwise conv with the merged spatial kernel, 1x1 up."""
    x = _check_activation(x, block.spec)
    z = conv_1x1(x, block.down)
    z = _depthwise_conv_2d(z, block.spatial, block.spec)
    return conv_1x1(z, block.up)
