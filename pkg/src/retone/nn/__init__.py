"""Minimal deterministic tensor engine: forward/backward layers, Adam, gradient checking.

Tensors are plain numpy arrays of shape (N, C, H, W). Every layer is a pair
of pure functions, ``<op>`` returning (output, cache) and ``<op>_backward``
consuming the cache, so the whole engine works in either float32 (training)
or float64 (gradient checking).
"""

from retone.nn.ops import (
    ConvParams,
    BatchNormParams,
    conv2d,
    conv2d_backward,
    conv_transpose2d,
    conv_transpose2d_backward,
    batchnorm,
    batchnorm_backward,
    leaky_relu,
    leaky_relu_backward,
    relu,
    relu_backward,
    concat_channels,
    concat_channels_backward,
    maxpool2d,
    maxpool2d_backward,
    ensure_finite,
)
from retone.nn.adam import AdamState, adam_step
from retone.nn.gradcheck import numeric_gradient, relative_error, GradCheckReport, standard_suite

__all__ = [
    "ConvParams",
    "BatchNormParams",
    "conv2d",
    "conv2d_backward",
    "conv_transpose2d",
    "conv_transpose2d_backward",
    "batchnorm",
    "batchnorm_backward",
    "leaky_relu",
    "leaky_relu_backward",
    "relu",
    "relu_backward",
    "concat_channels",
    "concat_channels_backward",
    "maxpool2d",
    "maxpool2d_backward",
    "ensure_finite",
    "AdamState",
    "adam_step",
    "numeric_gradient",
    "relative_error",
    "GradCheckReport",
    "standard_suite",
]
