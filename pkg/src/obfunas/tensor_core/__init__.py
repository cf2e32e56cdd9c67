"""Float64 NCHW runtime: operators, forward evaluation, finite differences."""

from obfunas.tensor_core.network import ConcreteNetwork, NodeParams, forward, numeric_gradient
from obfunas.tensor_core.ops import (
    EPS,
    BatchNormRecord,
    avg_pool,
    batchnorm_inference,
    concat_channels,
    conv2d,
    elementwise_sum,
    fake_swish,
    identity_kernel,
    max_pool,
    relu,
    swish,
)

__all__ = [
    "EPS", "BatchNormRecord", "ConcreteNetwork", "NodeParams", "avg_pool", "batchnorm_inference",
    "concat_channels", "conv2d", "elementwise_sum", "fake_swish", "forward", "identity_kernel",
    "max_pool", "numeric_gradient", "relu", "swish",
]
