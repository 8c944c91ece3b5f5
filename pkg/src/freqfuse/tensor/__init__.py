"""Dense 4-D tensor core: values, autodiff tape, functional ops, layers, file I/O."""
from .convspec import ConvSpec
from .core import OpGraph, Parameter, Tensor, active_graph, backward, record
from .fdt import read_fdt, write_fdt
from .nn import (BatchNorm2d, Conv2d, ConvTranspose2d, Layer, load_weights,
                 save_weights, xavier_uniform)
from .ops import (add, affine, batchnorm, bmm, channel_mean, channel_pool,
                  channel_split, concat_channels, conv2d, conv2d_transpose,
                  embed_dilated, from_tokens, global_avg_pool, mul, pointwise,
                  powf, reduce_mean, reduce_sum, relu, round_half_up, sigmoid,
                  slice_channels, softmax_w, sub, to_tokens, transpose_hw)

__all__ = [
    "Tensor", "Parameter", "OpGraph", "ConvSpec", "record", "backward", "active_graph",
    "add", "sub", "mul", "relu", "sigmoid", "powf", "affine", "pointwise",
    "channel_pool", "global_avg_pool", "channel_mean", "reduce_sum", "reduce_mean",
    "concat_channels", "slice_channels", "channel_split",
    "to_tokens", "from_tokens", "transpose_hw", "bmm", "softmax_w",
    "conv2d", "conv2d_transpose", "batchnorm", "embed_dilated", "round_half_up",
    "Layer", "Conv2d", "ConvTranspose2d", "BatchNorm2d", "xavier_uniform",
    "save_weights", "load_weights", "read_fdt", "write_fdt",
]
