"""End-to-end kernel compression and plan (de)serialization.

``compress`` decomposes a dense kernel under a chosen scheme, builds the
executable factorized layer, measures both the kernel approximation error and
the forward-output deviation on seeded random probes, and packages everything
as a :class:`FactorizedPlan` with per-stage cost annotations.

Plans serialize to a directory of tensor containers (one per factor, each
with a named role) plus a JSON manifest; ``load_plan`` restores an executable
plan from the manifest alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import costs
from .container import read_tensor, write_tensor
from .convref import ConvSpec, conv_nd_direct
from .decomp import KruskalTensor, cp_als, tucker_hooi
from .dense import as_tensor
from .errors import ContainerError, DimensionError, RankError
from .layers import (
    Activation,
    CpConvLayer,
    FrozenBatchNorm,
    HoCpConvLayer,
    MobileNetV1Block,
    MobileNetV2Block,
    PReLU,
    ReLU,
    TuckerConvLayer,
    build_mobilenet_v1,
    build_mobilenet_v2,
    cp_conv_forward,
    ho_cp_conv_forward,
    mobilenet_v1_forward,
    mobilenet_v2_forward,
    tucker_conv_forward,
)

__all__ = [
    "SCHEMES",
    "FactorizedPlan",
    "CompressionResult",
    "EquivalenceReport",
    "compress",
    "verify_equivalence",
    "execute_plan",
    "save_plan",
    "load_plan",
    "with_conv_params",
]

SCHEMES = ("cp", "tucker", "mobilenet-v1", "mobilenet-v2", "hocp")

AnyLayer = Union[CpConvLayer, TuckerConvLayer, HoCpConvLayer, MobileNetV1Block, MobileNetV2Block]

MANIFEST_NAME = "plan.json"
_MANIFEST_FORMAT = "tensorconv-plan"


@dataclass(frozen=True)
class FactorizedPlan:
    """An executable factorized layer plus its staged cost annotations.

    ``cost.stages`` is the ordered stage list (channel contractions, per-mode
    1-D convolutions, dense core conv, depthwise, activations, skip), each
    with its parameter and FLOP count for ``reference_input_extents``.
    """

    scheme: str
    layer: AnyLayer
    cost: costs.CostReport
    reference_input_extents: tuple[int, ...]

    @property
    def spec(self) -> ConvSpec:
        return self.layer.spec

    @property
    def stages(self) -> tuple[costs.StageCost, ...]:
        return self.cost.stages


@dataclass(frozen=True)
class CompressionResult:
    plan: FactorizedPlan
    kernel_rel_error: float
    output_rel_error: float
    cost_before: costs.CostReport
    cost_after: costs.CostReport


@dataclass(frozen=True)
class EquivalenceReport:
    passed: bool
    max_rel_deviation: float
    tolerance: float
    worst_probe_index: int
    probe_seed: int
    n_probes: int

    def summary(self) -> str:
        status = "pass" if self.passed else "fail"
        return (
            f"{status}: max_rel_deviation={self.max_rel_deviation:.6e} over "
            f"{self.n_probes} probes (tolerance {self.tolerance:g}, worst probe "
            f"index {self.worst_probe_index}, probe seed {self.probe_seed})"
        )


def execute_plan(plan: FactorizedPlan, x: np.ndarray) -> np.ndarray:
    layer = plan.layer
    if isinstance(layer, CpConvLayer):
        return cp_conv_forward(layer, x)
    if isinstance(layer, TuckerConvLayer):
        return tucker_conv_forward(layer, x)
    if isinstance(layer, HoCpConvLayer):
        return ho_cp_conv_forward(layer, x)
    if isinstance(layer, MobileNetV1Block):
        return mobilenet_v1_forward(layer, x)
    if isinstance(layer, MobileNetV2Block):
        return mobilenet_v2_forward(layer, x)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _rel(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def _probe_extents(spec: ConvSpec, probe_extent: int) -> tuple[int, ...]:
    return tuple(max(int(probe_extent), k) for k in spec.kernel_sizes)


def _probes(spec: ConvSpec, extents, probe_count: int, seed: int):
    seqs = np.random.SeedSequence(seed).spawn(probe_count)
    return [
        np.random.default_rng(s).standard_normal((spec.in_channels,) + tuple(extents))
        for s in seqs
    ]


def _layer_cost(scheme: str, layer: AnyLayer, extents) -> costs.CostReport:
    spec = layer.spec
    if scheme == "cp":
        return costs.report_hocp(spec, layer.rank, extents)
    if scheme == "hocp":
        acts = layer.activations or (None,) * spec.n_spatial
        return costs.report_hocp(
            spec, layer.rank, extents, include_skip=layer.skip is not None,
            activation_stages=tuple(a is not None for a in acts),
        )
    if scheme == "tucker":
        return costs.report_tucker(spec, layer.ranks, extents)
    if scheme == "mobilenet-v1":
        return costs.report_mobilenet_v1(spec, extents)
    if scheme == "mobilenet-v2":
        return costs.report_mobilenet_v2(spec, layer.rank, extents)
    raise ValueError(f"unknown scheme {scheme!r}")


def _plan_for(scheme: str, layer: AnyLayer, extents) -> FactorizedPlan:
    return FactorizedPlan(scheme, layer, _layer_cost(scheme, layer, extents), tuple(extents))


def _normalize_ranks(scheme: str, ranks, kernel_shape) -> tuple[int, ...]:
    t_out, c_in = kernel_shape[0], kernel_shape[1]
    if ranks is None:
        ranks = (c_in,) if scheme == "mobilenet-v1" else None
    if ranks is None:
        raise RankError(f"scheme {scheme!r} requires an explicit rank")
    if np.isscalar(ranks):
        ranks = (int(ranks),)
    else:
        ranks = tuple(int(r) for r in ranks)
    if any(r < 1 for r in ranks):
        raise RankError(f"ranks must all be >= 1, got {ranks}")

    if scheme in ("cp", "hocp", "mobilenet-v2"):
        if len(ranks) != 1:
            raise RankError(f"scheme {scheme!r} takes a single rank, got {ranks}")
    elif scheme == "mobilenet-v1":
        if len(ranks) != 1 or ranks[0] != c_in:
            raise RankError(
                f"mobilenet-v1 requires rank == input channels ({c_in}), got "
                f"{ranks}; pass rank {c_in}, or use mobilenet-v2 for unconstrained ranks"
            )
    elif scheme == "tucker":
        spatial = tuple(kernel_shape[2:])
        if len(ranks) == 2:
            ranks = ranks + spatial  # channel ranks only: keep spatial full
        elif len(ranks) != len(kernel_shape):
            raise RankError(
                f"tucker takes 2 channel ranks or {len(kernel_shape)} per-mode "
                f"ranks, got {len(ranks)}"
            )
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return ranks


def _best_cp(kernel, rank, max_iters, tol, seed, restarts):
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, int(restarts))):
        res = cp_als(kernel, rank, max_iters=max_iters, tol=tol, seed=child)
        if best is None or res.rel_error < best.rel_error:
            best = res
    return best


def compress(
    kernel: np.ndarray,
    scheme: str,
    ranks,
    probe_count: int = 8,
    probe_extent: int = 16,
    seed: int = 0,
    tol: float = 1e-8,
    max_iters: int = 500,
    restarts: int = 3,
    stride=1,
    padding=0,
) -> CompressionResult:
    """Decompose ``kernel`` under ``scheme`` and quantify the rewriting.

    Deterministic for a fixed ``seed``: the decomposition restarts and the
    probe activations are all derived from it. ``kernel_rel_error`` is the
    Frobenius error of the dense kernel the plan implements;
    ``output_rel_error`` is the worst relative forward deviation against the
    direct convolution over ``probe_count`` seeded standard-normal probes.
    """
    kernel = as_tensor(kernel)
    if kernel.ndim < 3:
        raise DimensionError(
            f"conv kernel needs order >= 3 (T, C, spatial...), got {kernel.ndim}"
        )
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if probe_count < 1:
        raise ValueError(f"probe_count must be >= 1, got {probe_count}")
    ranks = _normalize_ranks(scheme, ranks, kernel.shape)
    spec = ConvSpec.from_kernel(kernel, stride, padding)

    if scheme in ("mobilenet-v1", "mobilenet-v2") and spec.n_spatial != 2:
        raise DimensionError(
            f"{scheme} applies to 4-mode kernels (2 spatial modes), got "
            f"{spec.n_spatial} spatial modes"
        )

    if scheme == "tucker":
        res = tucker_hooi(kernel, ranks, max_iters=max_iters, tol=tol)
        layer: AnyLayer = TuckerConvLayer.from_tucker(res.tucker, spec)
    else:
        res = _best_cp(kernel, ranks[0], max_iters, tol, seed, restarts)
        if scheme == "cp":
            layer = CpConvLayer(res.kruskal, spec)
        elif scheme == "hocp":
            layer = HoCpConvLayer(CpConvLayer(res.kruskal, spec))
        elif scheme == "mobilenet-v1":
            layer = build_mobilenet_v1(res.kruskal, spec.strides, spec.paddings)
        else:
            layer = build_mobilenet_v2(res.kruskal, spec.strides, spec.paddings)

    norm_kernel = float(np.linalg.norm(kernel.ravel()))
    kernel_rel_error = _rel(
        float(np.linalg.norm((kernel - layer.dense_kernel()).ravel())), norm_kernel
    )

    extents = _probe_extents(spec, probe_extent)
    plan = _plan_for(scheme, layer, extents)
    worst = 0.0
    for x in _probes(spec, extents, probe_count, seed):
        direct = conv_nd_direct(x, kernel, spec)
        factorized = execute_plan(plan, x)
        dev = _rel(
            float(np.linalg.norm((factorized - direct).ravel())),
            float(np.linalg.norm(direct.ravel())),
        )
        worst = max(worst, dev)

    return CompressionResult(
        plan=plan,
        kernel_rel_error=kernel_rel_error,
        output_rel_error=worst,
        cost_before=costs.report_regular(spec, extents),
        cost_after=plan.cost,
    )


def verify_equivalence(
    plan: FactorizedPlan,
    kernel: np.ndarray,
    tolerance: float,
    probe_count: int = 8,
    probe_extent: int = 16,
    seed: int = 0,
) -> EquivalenceReport:
    """Run the plan and the direct convolution on identical probes.

    Fails when the worst-case relative deviation exceeds ``tolerance``; the
    report carries the deviation, the offending probe index and the probe
    seed so the failure is reproducible.
    """
    kernel = as_tensor(kernel)
    if probe_count < 1:
        raise ValueError(f"probe_count must be >= 1, got {probe_count}")
    spec = plan.spec
    if kernel.shape != (spec.out_channels, spec.in_channels) + spec.kernel_sizes:
        raise DimensionError(
            f"kernel shape {kernel.shape} does not match plan spec "
            f"({spec.out_channels}, {spec.in_channels}, *{spec.kernel_sizes})"
        )
    extents = _probe_extents(spec, probe_extent)
    worst = 0.0
    worst_idx = 0
    for i, x in enumerate(_probes(spec, extents, probe_count, seed)):
        direct = conv_nd_direct(x, kernel, spec)
        factorized = execute_plan(plan, x)
        dev = _rel(
            float(np.linalg.norm((factorized - direct).ravel())),
            float(np.linalg.norm(direct.ravel())),
        )
        if dev > worst:
            worst, worst_idx = dev, i
    return EquivalenceReport(
        passed=bool(worst <= tolerance),
        max_rel_deviation=worst,
        tolerance=float(tolerance),
        worst_probe_index=worst_idx,
        probe_seed=seed,
        n_probes=probe_count,
    )


def with_conv_params(plan: FactorizedPlan, stride, padding) -> FactorizedPlan:
    """Same factors, new stride/padding; cost annotations are recomputed."""
    spec = plan.spec
    new_spec = ConvSpec(
        spec.in_channels, spec.out_channels, spec.kernel_sizes, stride, padding
    )
    layer = plan.layer
    if isinstance(layer, CpConvLayer):
        layer = CpConvLayer(layer.kruskal, new_spec)
    elif isinstance(layer, TuckerConvLayer):
        layer = TuckerConvLayer(layer.down, layer.core, layer.up, new_spec)
    elif isinstance(layer, HoCpConvLayer):
        layer = HoCpConvLayer(
            CpConvLayer(layer.cp.kruskal, new_spec), layer.activations, layer.skip
        )
    elif isinstance(layer, MobileNetV1Block):
        layer = MobileNetV1Block(layer.spatial, layer.pointwise, new_spec)
    elif isinstance(layer, MobileNetV2Block):
        layer = MobileNetV2Block(layer.down, layer.spatial, layer.up, new_spec)
    return _plan_for(plan.scheme, layer, plan.reference_input_extents)


# ---------------------------------------------------------------------------
# Serialization: one container per factor, JSON manifest listing roles
# ---------------------------------------------------------------------------

def _encode_activation(act: Optional[Activation]):
    if act is None:
        return None
    if isinstance(act, ReLU):
        return {"kind": "relu"}
    if isinstance(act, PReLU):
        return {"kind": "prelu", "slope": act.slope}
    if isinstance(act, FrozenBatchNorm):
        return {
            "kind": "batchnorm",
            "mean": np.asarray(act.mean).tolist(),
            "var": np.asarray(act.var).tolist(),
            "scale": np.asarray(act.scale).tolist(),
            "shift": np.asarray(act.shift).tolist(),
            "eps": act.eps,
        }
    raise TypeError(f"cannot serialize activation {type(act).__name__}")


def _decode_activation(obj) -> Optional[Activation]:
    if obj is None:
        return None
    kind = obj.get("kind")
    if kind == "relu":
        return ReLU()
    if kind == "prelu":
        return PReLU(float(obj["slope"]))
    if kind == "batchnorm":
        def undo(v):
            return tuple(v) if isinstance(v, list) else float(v)

        return FrozenBatchNorm(
            undo(obj["mean"]), undo(obj["var"]), undo(obj["scale"]),
            undo(obj["shift"]), float(obj.get("eps", 1e-5)),
        )
    raise ContainerError(f"unknown activation kind {kind!r}")


def _layer_factors(layer: AnyLayer) -> list[tuple[str, np.ndarray]]:
    if isinstance(layer, (CpConvLayer, HoCpConvLayer)):
        cp = layer if isinstance(layer, CpConvLayer) else layer.cp
        named = [
            ("output_channels", cp.kruskal.factors[0]),
            ("input_channels", cp.kruskal.factors[1]),
        ]
        named += [
            (f"spatial_mode_{i}", f) for i, f in enumerate(cp.kruskal.factors[2:])
        ]
        return named
    if isinstance(layer, TuckerConvLayer):
        return [("down", layer.down), ("core", layer.core), ("up", layer.up)]
    if isinstance(layer, MobileNetV1Block):
        return [("spatial", layer.spatial), ("pointwise", layer.pointwise)]
    if isinstance(layer, MobileNetV2Block):
        return [("down", layer.down), ("spatial", layer.spatial), ("up", layer.up)]
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _ranks_of(layer: AnyLayer) -> list[int]:
    if isinstance(layer, TuckerConvLayer):
        return list(layer.ranks)
    return [layer.rank]


def save_plan(plan: FactorizedPlan, out_dir) -> Path:
    """Write factor containers plus ``plan.json`` into ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    factor_entries = []
    for role, arr in _layer_factors(plan.layer):
        fname = f"{role}.tensor"
        write_tensor(out / fname, arr)
        factor_entries.append({"role": role, "file": fname})

    spec = plan.spec
    manifest = {
        "format": _MANIFEST_FORMAT,
        "version": 1,
        "scheme": plan.scheme,
        "in_channels": spec.in_channels,
        "out_channels": spec.out_channels,
        "kernel_sizes": list(spec.kernel_sizes),
        "strides": list(spec.strides),
        "paddings": list(spec.paddings),
        "ranks": _ranks_of(plan.layer),
        "factors": factor_entries,
        "reference_input_extents": list(plan.reference_input_extents),
        "cost": {
            "convention": plan.cost.convention,
            "params": plan.cost.params,
            "flops": plan.cost.flops,
            "stages": [
                {"label": s.label, "params": s.params, "flops": s.flops}
                for s in plan.cost.stages
            ],
        },
    }
    if isinstance(plan.layer, HoCpConvLayer):
        manifest["activations"] = [
            _encode_activation(a) for a in (plan.layer.activations or [None] * spec.n_spatial)
        ]
        if plan.layer.skip is not None:
            write_tensor(out / "skip.tensor", plan.layer.skip)
            manifest["skip"] = "skip.tensor"

    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_plan(manifest_path) -> FactorizedPlan:
    """Restore an executable plan from a manifest written by :func:`save_plan`."""
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: cannot read plan manifest: {exc}") from exc
    if manifest.get("format") != _MANIFEST_FORMAT:
        raise ContainerError(f"{path}: not a plan manifest")
    scheme = manifest.get("scheme")
    if scheme not in SCHEMES:
        raise ContainerError(f"{path}: unknown scheme {scheme!r}")

    base = path.parent
    try:
        spec = ConvSpec(
            manifest["in_channels"],
            manifest["out_channels"],
            tuple(manifest["kernel_sizes"]),
            tuple(manifest["strides"]),
            tuple(manifest["paddings"]),
        )
        factors = {
            entry["role"]: read_tensor(base / entry["file"])
            for entry in manifest["factors"]
        }
    except (KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: malformed plan manifest: {exc}") from exc

    def need(role: str) -> np.ndarray:
        if role not in factors:
            raise ContainerError(f"{path}: manifest is missing factor role {role!r}")
        return factors[role]

    if scheme in ("cp", "hocp"):
        ordered = [need("output_channels"), need("input_channels")] + [
            need(f"spatial_mode_{i}") for i in range(spec.n_spatial)
        ]
        cp = CpConvLayer(KruskalTensor(tuple(ordered)), spec)
        if scheme == "cp":
            layer: AnyLayer = cp
        else:
            acts = manifest.get("activations")
            activations = (
                tuple(_decode_activation(a) for a in acts) if acts is not None else None
            )
            skip = (
                read_tensor(base / manifest["skip"]) if manifest.get("skip") else None
            )
            layer = HoCpConvLayer(cp, activations, skip)
    elif scheme == "tucker":
        layer = TuckerConvLayer(need("down"), need("core"), need("up"), spec)
    elif scheme == "mobilenet-v1":
        layer = MobileNetV1Block(need("spatial"), need("pointwise"), spec)
    else:
        layer = MobileNetV2Block(need("down"), need("spatial"), need("up"), spec)

    extents = tuple(manifest.get("reference_input_extents", ()))
    if not extents:
        extents = _probe_extents(spec, 16)
    return _plan_for(scheme, layer, extents)
