import numpy as np
import pytest

from tensorconv import (
    ConvSpec,
    DimensionError,
    OpCounter,
    conv_1x1,
    conv_nd_direct,
    conv_nd_naive,
    mode_conv_1d,
    n_mode_product,
)
from tensorconv.costs import flops_regular

from helpers import rel_error


class TestConvSpec:
    def test_scalar_stride_padding_broadcast(self):
        spec = ConvSpec(2, 3, (3, 5), strides=2, paddings=1)
        assert spec.strides == (2, 2)
        assert spec.paddings == (1, 1)

    def test_per_mode_values(self):
        spec = ConvSpec(2, 3, (3, 5), strides=(1, 2), paddings=(0, 2))
        assert spec.output_extents((8, 9)) == (6, 5)

    def test_invalid_extents(self):
        with pytest.raises(DimensionError):
            ConvSpec(0, 1, (3,))
        with pytest.raises(DimensionError):
            ConvSpec(1, 1, ())
        with pytest.raises(DimensionError):
            ConvSpec(1, 1, (3,), strides=0)
        with pytest.raises(DimensionError):
            ConvSpec(1, 1, (3,), paddings=-1)

    def test_from_kernel(self):
        spec = ConvSpec.from_kernel(np.zeros((4, 2, 3, 3)))
        assert (spec.out_channels, spec.in_channels) == (4, 2)
        assert spec.kernel_sizes == (3, 3)
        with pytest.raises(DimensionError):
            ConvSpec.from_kernel(np.zeros((4, 2)))


class TestConvNdDirect:
    def test_unit_pointwise_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 4, 5))
        w = np.ones((1, 1, 1, 1))
        assert np.array_equal(conv_nd_direct(x, w), x)

    def test_hand_sum_2x2(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # C=1
        w = np.ones((1, 1, 2, 2))
        out = conv_nd_direct(x, w)
        assert np.array_equal(out, np.array([[[10.0]]]))

    def test_zero_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 4, 4))
        out = conv_nd_direct(x, np.zeros((3, 2, 2, 2)))
        assert np.all(out == 0.0)
        assert out.shape == (3, 3, 3)

    def test_channel_mismatch_names_extents(self):
        with pytest.raises(DimensionError, match="3 channels.*expects 2"):
            conv_nd_direct(np.zeros((3, 4, 4)), np.zeros((1, 2, 2, 2)))

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError, match="longer than padded extent"):
            conv_nd_direct(np.zeros((1, 2)), np.zeros((1, 1, 5)))

    def test_matches_naive_randomized(self):
        rng = np.random.default_rng(2)
        configs = [
            dict(c=1, t=1, d=(6,), k=(3,), s=1, p=0),
            dict(c=2, t=3, d=(5, 6), k=(2, 3), s=(2, 1), p=(1, 0)),
            dict(c=3, t=2, d=(4, 4, 5), k=(3, 1, 2), s=1, p=1),
            dict(c=2, t=2, d=(3, 3, 3, 3), k=(2, 2, 2, 2), s=1, p=0),
        ]
        for cfg in configs:
            spec = ConvSpec(cfg["c"], cfg["t"], cfg["k"], cfg["s"], cfg["p"])
            x = rng.standard_normal((cfg["c"],) + cfg["d"])
            w = rng.standard_normal((cfg["t"], cfg["c"]) + cfg["k"])
            np.testing.assert_allclose(
                conv_nd_direct(x, w, spec), conv_nd_naive(x, w, spec), rtol=1e-12
            )

    def test_linear_in_activation_and_kernel(self):
        rng = np.random.default_rng(3)
        spec = ConvSpec(2, 2, (2, 2))
        x, y = rng.standard_normal((2, 2, 4, 4))
        w, v = rng.standard_normal((2, 2, 2, 2, 2))
        lhs = conv_nd_direct(0.5 * x - 2.0 * y, w, spec)
        rhs = 0.5 * conv_nd_direct(x, w, spec) - 2.0 * conv_nd_direct(y, w, spec)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
        lhs = conv_nd_direct(x, 0.5 * w - 2.0 * v, spec)
        rhs = 0.5 * conv_nd_direct(x, w, spec) - 2.0 * conv_nd_direct(x, v, spec)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_single_mode_single_channel_reduces_to_mode_conv(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(9)
        v = rng.standard_normal(3)
        direct = conv_nd_direct(x[None, :], v[None, None, :])
        np.testing.assert_allclose(direct[0], mode_conv_1d(x, v, 0), rtol=1e-14)

    def test_counter_matches_formula(self):
        rng = np.random.default_rng(5)
        spec = ConvSpec(2, 3, (2, 3), strides=(1, 2), paddings=(1, 0))
        x = rng.standard_normal((2, 4, 7))
        w = rng.standard_normal((3, 2, 2, 3))
        counter = OpCounter()
        conv_nd_naive(x, w, spec, counter)
        assert counter.flops == flops_regular(spec, (4, 7))


class TestConv1x1:
    def test_identity(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 4, 4))
        assert np.array_equal(conv_1x1(x, np.eye(3)), x)

    def test_hand_sum(self):
        x = np.array([1.0, 2.0]).reshape(2, 1, 1)
        out = conv_1x1(x, np.array([[1.0, 1.0]]))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 3.0

    def test_three_way_equivalence(self):
        rng = np.random.default_rng(7)
        for spatial in [(5,), (4, 5), (3, 4, 2)]:
            x = rng.standard_normal((3,) + spatial)
            w2d = rng.standard_normal((4, 3))
            via_1x1 = conv_1x1(x, w2d)
            via_nmode = n_mode_product(x, w2d, 0)
            w_full = w2d.reshape((4, 3) + (1,) * len(spatial))
            via_direct = conv_nd_direct(x, w_full)
            assert rel_error(via_1x1, via_nmode) < 1e-12
            assert rel_error(via_1x1, via_direct) < 1e-12

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError, match="2 channels.*expects 3"):
            conv_1x1(np.zeros((2, 4)), np.zeros((5, 3)))
