"""Tensor-factorized N-D convolutions.

Dense N-D convolution plus its tensor-factorized rewritings (separable CP
chains, Tucker bottlenecks, MobileNet-style blocks, higher-order CP layers
with activations and skip factors), CP/Tucker kernel decomposition, and an
analytic parameter/FLOP cost model. Every factorized forward is verifiable by
oracle equivalence against the direct convolution.
"""

from .container import read_tensor, write_tensor
from .convref import ConvSpec, OpCounter, conv_1x1, conv_nd_direct, conv_nd_naive
from .costs import (
    CostReport,
    StageCost,
    figure6_sweep,
    flops_hocp,
    flops_regular,
    params_hocp,
    params_regular,
)
from .decomp import (
    CpResult,
    KruskalTensor,
    TuckerResult,
    TuckerTensor,
    absorb_spatial,
    cp_als,
    kruskal_to_dense,
    merge_spatial_factors,
    tucker_hooi,
    tucker_to_dense,
)
from .dense import fold, khatri_rao, mode_conv_1d, n_mode_product, unfold
from .errors import ContainerError, DimensionError, RankError
from .layers import (
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
    ho_cp_forward_naive,
    mobilenet_v1_forward,
    mobilenet_v2_forward,
    tucker_conv_forward,
)
from .pipeline import (
    CompressionResult,
    EquivalenceReport,
    FactorizedPlan,
    compress,
    execute_plan,
    load_plan,
    save_plan,
    verify_equivalence,
)

__version__ = "0.1.0"
