"""Minimal tensor library: reverse-mode gradients plus the layers the heads need."""
from .layers import LayerSpec, Network, glorot_uniform
from .ops import (
    EVAL,
    TRAIN,
    BatchNormState,
    batchnorm_forward,
    conv2d_forward,
    dense_forward,
    global_avg_pool,
    l2_normalize,
    log_softmax,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .tensor import Tensor, as_tensor, backward, exp, get_default_dtype, reshape, set_default_dtype

__all__ = [
    "Tensor", "as_tensor", "backward", "exp", "reshape", "get_default_dtype", "set_default_dtype",
    "dense_forward", "conv2d_forward", "relu", "batchnorm_forward", "BatchNormState",
    "global_avg_pool", "l2_normalize", "softmax", "log_softmax", "softmax_cross_entropy",
    "TRAIN", "EVAL", "LayerSpec", "Network", "glorot_uniform",
]
