"""Dense tensors with reverse-mode differentiation (numpy storage)."""

from .ops import (
    abs_,
    add,
    as_tensor,
    batch_norm,
    concat_channels,
    conv3d,
    conv_pointwise,
    conv_spatial,
    conv_temporal,
    elementwise,
    global_avg_pool,
    linear,
    mul,
    pool_attention_variant,
    relu,
    reshape,
    sigmoid,
    slice_channels,
    softmax,
    softmax_cross_entropy,
    split_channels,
    sub,
    sum_,
)
from .serialize import FormatError, load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes
from .tensor import (
    Tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
    zero_grad,
)
