import numpy as np
import pytest

from tensorconv import ConvSpec, OpCounter, conv_nd_naive
from tensorconv.costs import (
    CostReport,
    DEFAULT_SWEEP_PAIRS,
    StageCost,
    example_3d_architecture,
    figure6_sweep,
    flops_hocp,
    flops_regular,
    params_hocp,
    params_regular,
    report_hocp,
    report_mobilenet_v1,
    report_mobilenet_v2,
    report_regular,
    report_tucker,
    sweep_csv_text,
)
from tensorconv.errors import RankError
from tensorconv.layers import HoCpConvLayer
from tensorconv.layers import ho_cp_forward_naive

from helpers import random_kruskal
from tensorconv import CpConvLayer


class TestParams:
    def test_regular_examples(self):
        assert params_regular(ConvSpec(3, 64, (3, 3, 3))) == 5184
        assert params_regular(ConvSpec(1, 1, (1,))) == 1

    def test_hocp_examples(self):
        assert params_hocp(ConvSpec(3, 64, (3, 3, 3)), 18) == 1368
        assert params_hocp(ConvSpec(3, 64, (3, 3, 3)), 0) == 0

    def test_negative_rank_rejected(self):
        with pytest.raises(RankError):
            params_hocp(ConvSpec(3, 64, (3, 3, 3)), -1)

    def test_architecture_totals(self):
        blocks = example_3d_architecture()
        regular = sum(params_regular(s) for s in blocks)
        hocp = sum(params_hocp(s, 6 * s.in_channels) for s in blocks)
        assert regular == 2_880_576
        assert hocp == 1_180_632
        assert regular - hocp == 1_699_944

    def test_break_even_boundary(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            c, t = rng.integers(1, 40, 2)
            kernels = tuple(rng.integers(1, 6, int(rng.integers(1, 4))))
            spec = ConvSpec(int(c), int(t), kernels)
            threshold = params_regular(spec) / (c + t + sum(kernels))
            for rank in {1, int(threshold), int(threshold) + 1, int(threshold * 2) + 1}:
                if rank < 1:
                    continue
                cheaper = params_hocp(spec, rank) < params_regular(spec)
                assert cheaper == (rank < threshold)


class TestFlops:
    def test_single_output_element_pointwise(self):
        assert flops_regular(ConvSpec(1, 1, (1,)), (1,)) == 2

    def test_regular_formula_vs_counter(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            c, t = rng.integers(1, 4, 2)
            n = int(rng.integers(1, 3))
            kernels = tuple(int(k) for k in rng.integers(1, 4, n))
            strides = tuple(int(s) for s in rng.integers(1, 3, n))
            pads = tuple(int(p) for p in rng.integers(0, 2, n))
            spec = ConvSpec(int(c), int(t), kernels, strides, pads)
            extents = tuple(k + int(rng.integers(0, 3)) for k in kernels)
            x = rng.standard_normal((c,) + extents)
            w = rng.standard_normal((t, c) + kernels)
            counter = OpCounter()
            conv_nd_naive(x, w, spec, counter)
            assert counter.flops == flops_regular(spec, extents)

    def test_hocp_formula_vs_counter(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            c, t = (int(v) for v in rng.integers(1, 4, 2))
            n = int(rng.integers(1, 3))
            kernels = tuple(int(k) for k in rng.integers(1, 4, n))
            rank = int(rng.integers(1, 5))
            spec = ConvSpec(c, t, kernels, 1, 1)
            layer = HoCpConvLayer(
                CpConvLayer(random_kruskal(rng, (t, c) + kernels, rank), spec)
            )
            extents = tuple(k + 1 for k in kernels)
            x = rng.standard_normal((c,) + extents)
            counter = OpCounter()
            ho_cp_forward_naive(layer, x, counter)
            assert counter.flops == flops_hocp(spec, rank, extents)

    def test_hocp_linear_in_rank(self):
        spec = ConvSpec(16, 32, (3, 3, 3))
        extents = (32, 32, 16)
        base = flops_hocp(spec, 16 * 3, extents)
        assert flops_hocp(spec, 16 * 6, extents) == 2 * base


class TestCostReport:
    def test_totals_equal_stage_sums(self):
        report = CostReport.from_stages(
            [StageCost("a", 3, 10), StageCost("b", 4, 20)]
        )
        assert report.params == 7
        assert report.flops == 30
        assert "multiply-add" in report.convention

    def test_negative_stage_rejected(self):
        with pytest.raises(ValueError):
            CostReport.from_stages([StageCost("a", -1, 0)])

    def test_hocp_report_breakdown(self):
        spec = ConvSpec(3, 4, (3, 3))
        report = report_hocp(
            spec, 5, (8, 8), include_skip=True, activation_stages=(True, True)
        )
        labels = [s.label for s in report.stages]
        assert labels == [
            "contract_in", "conv_mode_0", "activation_0", "conv_mode_1",
            "activation_1", "contract_out", "skip",
        ]
        skip = report.stages[-1]
        assert skip.params == 12
        activations = [s for s in report.stages if s.label.startswith("activation")]
        assert all(s.params == 0 and s.flops == 0 for s in activations)
        no_extras = report_hocp(spec, 5, (8, 8))
        assert no_extras.params == params_hocp(spec, 5)
        assert no_extras.flops == flops_hocp(spec, 5, (8, 8))

    def test_tucker_report_params(self):
        spec = ConvSpec(8, 16, (3, 3))
        report = report_tucker(spec, (4, 5), (10, 10))
        assert report.params == 5 * 8 + 4 * 5 * 9 + 16 * 4

    def test_mobilenet_reports(self):
        spec = ConvSpec(8, 16, (3, 3))
        v1 = report_mobilenet_v1(spec, (10, 10))
        assert v1.params == 9 * 8 + 16 * 8
        v2 = report_mobilenet_v2(spec, 48, (10, 10))
        assert v2.params == 48 * 8 + 9 * 48 + 16 * 48

    def test_regular_report(self):
        spec = ConvSpec(2, 3, (3,))
        report = report_regular(spec, (5,))
        assert report.params == params_regular(spec)
        assert report.flops == flops_regular(spec, (5,))


class TestSweep:
    def test_empty_pairs(self):
        rows = figure6_sweep(())
        assert rows == []
        text = sweep_csv_text(rows, (3, 6))
        lines = text.strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("in_channels,out_channels,gflops_regular")

    def test_default_sweep_hocp_below_regular(self):
        rows = figure6_sweep()
        assert len(rows) == len(DEFAULT_SWEEP_PAIRS)
        for row in rows:
            for hocp in row.flops_hocp:
                assert hocp < row.flops_regular

    def test_monotone_in_channel_product(self):
        rows = figure6_sweep()
        products = [r.in_channels * r.out_channels for r in rows]
        order = np.argsort(products, kind="stable")
        regular = [rows[i].flops_regular for i in order]
        assert all(a <= b for a, b in zip(regular, regular[1:]))
        for col in range(2):
            hocp = [rows[i].flops_hocp[col] for i in order]
            assert all(a <= b for a, b in zip(hocp, hocp[1:]))

    def test_multiplier_three_below_six(self):
        for row in figure6_sweep(multipliers=(3, 6)):
            assert row.flops_hocp[0] < row.flops_hocp[1]

    def test_csv_row_count(self):
        rows = figure6_sweep(((8, 8), (16, 16)))
        text = sweep_csv_text(rows, (3, 6))
        assert len(text.strip().splitlines()) == 3
