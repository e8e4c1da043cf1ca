"""Analytic parameter and FLOP accounting for regular vs factorized convolutions.

Convention, stated on every report: one multiply-add counts as 2 FLOPs. Bias
terms do not exist in this package; activation and batch-norm stages carry
zero parameters and are excluded from FLOP totals (they appear as
zero-cost stage lines so breakdowns stay aligned with execution plans).

All counts are exact integers; the formulas are validated elsewhere against
instrumented naive-loop multiply-add tallies.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import prod
from typing import Iterable, Sequence

from .convref import ConvSpec
from .errors import RankError

__all__ = [
    "FLOP_CONVENTION",
    "StageCost",
    "CostReport",
    "params_regular",
    "params_hocp",
    "flops_regular",
    "flops_hocp",
    "report_regular",
    "report_hocp",
    "report_tucker",
    "report_mobilenet_v1",
    "report_mobilenet_v2",
    "SweepRow",
    "figure6_sweep",
    "write_sweep_csv",
    "DEFAULT_SWEEP_PAIRS",
    "example_3d_architecture",
]

FLOP_CONVENTION = "multiply-add counted as 2 FLOPs"


@dataclass(frozen=True)
class StageCost:
    label: str
    params: int
    flops: int


@dataclass(frozen=True)
class CostReport:
    """Totals plus a per-stage breakdown; totals always equal the stage sums."""

    params: int
    flops: int
    stages: tuple[StageCost, ...]
    convention: str = FLOP_CONVENTION

    def __post_init__(self):
        if any(s.params < 0 or s.flops < 0 for s in self.stages):
            raise ValueError("stage costs must be non-negative")

    @classmethod
    def from_stages(cls, stages: Iterable[StageCost]) -> "CostReport":
        stages = tuple(stages)
        return cls(
            params=sum(s.params for s in stages),
            flops=sum(s.flops for s in stages),
            stages=stages,
        )

    def lines(self) -> list[str]:
        out = [f"# {self.convention}", f"params={self.params}", f"flops={self.flops}"]
        for s in self.stages:
            out.append(f"stage.{s.label}.params={s.params}")
            out.append(f"stage.{s.label}.flops={s.flops}")
        return out


def _check_rank(rank: int) -> int:
    rank = int(rank)
    if rank < 0:
        raise RankError(f"rank must be >= 0, got {rank}")
    return rank


def params_regular(spec: ConvSpec) -> int:
    """C * T * prod(K), no bias."""
    return spec.in_channels * spec.out_channels * prod(spec.kernel_sizes)


def params_hocp(spec: ConvSpec, rank: int) -> int:
    """R * (C + T + sum(K))."""
    rank = _check_rank(rank)
    return rank * (spec.in_channels + spec.out_channels + sum(spec.kernel_sizes))


def flops_regular(spec: ConvSpec, input_extents: Sequence[int]) -> int:
    """2 * C * prod(K) multiply-adds per output element, times T and the output volume."""
    out_vol = prod(spec.output_extents(input_extents))
    return 2 * spec.in_channels * prod(spec.kernel_sizes) * spec.out_channels * out_vol


def _hocp_stages(spec: ConvSpec, rank: int, input_extents: Sequence[int]) -> list[StageCost]:
    rank = _check_rank(rank)
    extents = [int(d) for d in input_extents]
    out_extents = spec.output_extents(extents)
    stages = [
        StageCost(
            "contract_in",
            rank * spec.in_channels,
            2 * spec.in_channels * rank * prod(extents),
        )
    ]
    running = list(extents)
    for i, k in enumerate(spec.kernel_sizes):
        running[i] = out_extents[i]
        stages.append(
            StageCost(
                f"conv_mode_{i}",
                rank * k,
                2 * k * rank * prod(running),
            )
        )
    stages.append(
        StageCost(
            "contract_out",
            spec.out_channels * rank,
            2 * rank * spec.out_channels * prod(out_extents),
        )
    )
    return stages


def flops_hocp(spec: ConvSpec, rank: int, input_extents: Sequence[int]) -> int:
    """Per-stage sum: channel contraction + N grouped 1-D convolutions + output contraction."""
    return sum(s.flops for s in _hocp_stages(spec, rank, input_extents))


def report_regular(spec: ConvSpec, input_extents: Sequence[int]) -> CostReport:
    return CostReport.from_stages(
        [StageCost("dense_conv", params_regular(spec), flops_regular(spec, input_extents))]
    )


def report_hocp(
    spec: ConvSpec,
    rank: int,
    input_extents: Sequence[int],
    include_skip: bool = False,
    activation_stages: Sequence[bool] | None = None,
) -> CostReport:
    """Staged breakdown of the higher-order CP convolution.

    ``activation_stages`` flags which spatial stages carry an activation;
    those appear as zero-parameter, zero-FLOP lines right after their
    convolution stage. The skip factor (C*T parameters) is reported on its
    own line when present, since architecture-level totals may or may not
    include it.
    """
    stages = _hocp_stages(spec, rank, input_extents)
    if activation_stages is not None:
        if len(activation_stages) != spec.n_spatial:
            raise ValueError(
                f"expected one activation flag per spatial mode ({spec.n_spatial}), "
                f"got {len(activation_stages)}"
            )
        # interleave in execution order: activation_i follows conv_mode_i
        for i in reversed(range(spec.n_spatial)):
            if activation_stages[i]:
                stages.insert(2 + i, StageCost(f"activation_{i}", 0, 0))
    if include_skip:
        out_vol = prod(spec.output_extents(input_extents))
        stages.append(
            StageCost(
                "skip",
                spec.in_channels * spec.out_channels,
                2 * spec.in_channels * spec.out_channels * out_vol,
            )
        )
    return CostReport.from_stages(stages)


def report_tucker(spec: ConvSpec, ranks: tuple[int, int], input_extents: Sequence[int]) -> CostReport:
    """Bottleneck accounting: 1x1 down, dense core conv, 1x1 up."""
    r_out, r_in = (_check_rank(r) for r in ranks)
    in_vol = prod(int(d) for d in input_extents)
    out_vol = prod(spec.output_extents(input_extents))
    kernel_vol = prod(spec.kernel_sizes)
    return CostReport.from_stages(
        [
            StageCost("contract_in", r_in * spec.in_channels, 2 * spec.in_channels * r_in * in_vol),
            StageCost("core_conv", r_out * r_in * kernel_vol, 2 * r_in * kernel_vol * r_out * out_vol),
            StageCost("contract_out", spec.out_channels * r_out, 2 * r_out * spec.out_channels * out_vol),
        ]
    )


def report_mobilenet_v1(spec: ConvSpec, input_extents: Sequence[int]) -> CostReport:
    """Depthwise (merged spatial kernel) + pointwise accounting; R == C."""
    out_vol = prod(spec.output_extents(input_extents))
    kernel_vol = prod(spec.kernel_sizes)
    c, t = spec.in_channels, spec.out_channels
    return CostReport.from_stages(
        [
            StageCost("depthwise", kernel_vol * c, 2 * kernel_vol * c * out_vol),
            StageCost("pointwise", t * c, 2 * c * t * out_vol),
        ]
    )


def report_mobilenet_v2(spec: ConvSpec, rank: int, input_extents: Sequence[int]) -> CostReport:
    """Inverted bottleneck accounting: 1x1 down, depthwise, 1x1 up."""
    rank = _check_rank(rank)
    in_vol = prod(int(d) for d in input_extents)
    out_vol = prod(spec.output_extents(input_extents))
    kernel_vol = prod(spec.kernel_sizes)
    c, t = spec.in_channels, spec.out_channels
    return CostReport.from_stages(
        [
            StageCost("contract_in", rank * c, 2 * c * rank * in_vol),
            StageCost("depthwise", kernel_vol * rank, 2 * kernel_vol * rank * out_vol),
            StageCost("contract_out", t * rank, 2 * rank * t * out_vol),
        ]
    )


# ---------------------------------------------------------------------------
# Channel sweep (regular vs HO-CP GFLOPs)
# ---------------------------------------------------------------------------

# Channel pairs swept by default: small-to-large feature widths typical of
# 3-D conv columns. Very small channel counts (C < 4) are excluded: there the
# per-rank spatial stages dominate and the factorized form stops paying off.
DEFAULT_SWEEP_PAIRS: tuple[tuple[int, int], ...] = (
    (4, 8),
    (8, 16),
    (16, 32),
    (32, 64),
    (64, 64),
    (64, 128),
    (128, 128),
    (128, 256),
    (256, 256),
    (256, 512),
    (512, 512),
)


@dataclass(frozen=True)
class SweepRow:
    in_channels: int
    out_channels: int
    flops_regular: int
    flops_hocp: tuple[int, ...]  # aligned with the sweep's rank multipliers


def figure6_sweep(
    channel_pairs: Sequence[tuple[int, int]] = DEFAULT_SWEEP_PAIRS,
    input_extents: Sequence[int] = (32, 32, 16),
    kernel_sizes: Sequence[int] = (3, 3, 3),
    multipliers: Sequence[int] = (3, 6),
) -> list[SweepRow]:
    """FLOP comparison rows for regular vs HO-CP convolution.

    For each (C, T) pair the HO-CP rank is ``multiplier * C``, one column per
    multiplier.
    """
    rows = []
    for c, t in channel_pairs:
        spec = ConvSpec(int(c), int(t), tuple(int(k) for k in kernel_sizes))
        rows.append(
            SweepRow(
                spec.in_channels,
                spec.out_channels,
                flops_regular(spec, input_extents),
                tuple(
                    flops_hocp(spec, int(m) * spec.in_channels, input_extents)
                    for m in multipliers
                ),
            )
        )
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], multipliers: Sequence[int], fp) -> None:
    """Emit sweep rows as CSV (values in GFLOPs), header row first."""
    writer = csv.writer(fp)
    writer.writerow(
        ["in_channels", "out_channels", "gflops_regular"]
        + [f"gflops_hocp_x{m}" for m in multipliers]
    )
    for row in rows:
        writer.writerow(
            [row.in_channels, row.out_channels, row.flops_regular / 1e9]
            + [f / 1e9 for f in row.flops_hocp]
        )


def sweep_csv_text(rows: Sequence[SweepRow], multipliers: Sequence[int]) -> str:
    buf = io.StringIO()
    write_sweep_csv(rows, multipliers, buf)
    return buf.getvalue()


def example_3d_architecture() -> list[ConvSpec]:
    """Four-block 3-D convolutional column with cubic size-3 kernels.

    Channel progression 3 -> 64 -> 128 -> 256 -> 256; the standard rank choice
    for the factorized variant is 6x the input channels of each block.
    """
    pairs = [(3, 64), (64, 128), (128, 256), (256, 256)]
    return [ConvSpec(c, t, (3, 3, 3)) for c, t in pairs]
