"""Pseudo-3D bottleneck block with feature-level residual and channel attention.

Data flow of one block::

    x -> reduce(1x1x1, stride) -> r
    r -> spatial(1x3x3) -> fs          (appearance path)
    r -> temporal(3x1x1) -> fm         (motion path)
    fm -> |fm(t+1) - fm(t)| -> fres    (feature residual, last step 0)
    f = concat(fs, fm, fres)
    f_att = f * sigmoid(W pool(f) + b) + f
    y = relu(restore(f_att) + shortcut(x))
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .layers import BatchNorm, Conv, ConvUnit, Linear, Module, Pointwise
from .tensor import Tensor, ops

BACKENDS = ("pseudo3d", "full3d")


@dataclass(frozen=True)
class P3DBlockConfig:
    in_channels: int
    mid_channels: int
    out_channels: int
    spatial_stride: int = 1
    enable_attention: bool = True
    enable_feature_residual: bool = True
    use_norm: bool = True
    backend: str = "pseudo3d"

    def __post_init__(self):
        if self.spatial_stride not in (1, 2):
            raise ValueError(f"spatial_stride must be 1 or 2, got {self.spatial_stride}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        for field in ("in_channels", "mid_channels", "out_channels"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")

    @property
    def width(self) -> int:
        """Channel width of the concatenated feature (the attention size)."""
        if self.backend == "full3d":
            return self.mid_channels
        return (3 if self.enable_feature_residual else 2) * self.mid_channels

    @property
    def has_attention(self) -> bool:
        return self.backend == "pseudo3d" and self.enable_attention

    @property
    def has_feature_residual(self) -> bool:
        return self.backend == "pseudo3d" and self.enable_feature_residual

    @property
    def needs_projection(self) -> bool:
        return self.in_channels != self.out_channels or self.spatial_stride != 1


# ---------------------------------------------------------------- primitive ops

def feature_residual(fm) -> Tensor:
    """``out[t] = |fm[t+1] - fm[t]|`` along time, with ``out[T-1] = 0``."""
    fm = ops.as_tensor(fm)
    if fm.ndim != 5:
        raise ValueError(f"feature_residual: expected [N,C,T,H,W], got {fm.shape}")
    K = _kernels.impl
    out = K.feature_residual_forward(fm.data)

    def backward(g):
        return (K.feature_residual_backward(fm.data, np.ascontiguousarray(g)),)

    return Tensor.from_op(out, (fm,), backward, "feature_residual")


def attention_mask(f, weight, bias) -> Tensor:
    """``sigmoid(W @ pool(f) + b)`` reshaped to ``[N, width, 1, 1, 1]``."""
    f = ops.as_tensor(f)
    weight = ops.as_tensor(weight)
    width = f.shape[1]
    if weight.shape != (width, width):
        raise ValueError(f"attention_mask: weight must be [{width},{width}] for width {width}, got {weight.shape}")
    pooled = ops.reshape(ops.pool_attention_variant(f), (f.shape[0], width))
    mask = ops.sigmoid(ops.linear(pooled, weight, bias))
    return ops.reshape(mask, (f.shape[0], width, 1, 1, 1))


def apply_attention(f, mask) -> Tensor:
    """``f * mask + f`` with the mask broadcast over (T, H, W)."""
    f, mask = ops.as_tensor(f), ops.as_tensor(mask)
    try:
        np.broadcast_shapes(f.shape, mask.shape)
    except ValueError:
        raise ValueError(f"apply_attention: mask {mask.shape} does not broadcast against feature {f.shape}") from None
    gain = 1 + mask.data

    def backward(g):
        df = g * gain
        dm = ops._unbroadcast(g * f.data, mask.shape) if mask.requires_grad else None
        return df, dm

    return Tensor.from_op(f.data * gain, (f, mask), backward, "apply_attention")


# ---------------------------------------------------------------- block

class P3DBlock(Module):
    """Parameters and forward pass of one bottleneck block."""

    def __init__(self, config: P3DBlockConfig, rng: Optional[np.random.Generator] = None, name: str = "block"):
        rng = rng or np.random.default_rng(0)
        c = config
        self._config = c
        self._name = name
        cm = c.mid_channels
        self.reduce = ConvUnit(Pointwise(c.in_channels, cm, c.spatial_stride, rng), cm, c.use_norm)
        if c.backend == "pseudo3d":
            self.spatial = ConvUnit(Conv(cm, cm, (1, 3, 3), 1, rng), cm, c.use_norm)
            self.temporal = ConvUnit(Conv(cm, cm, (3, 1, 1), 1, rng), cm, c.use_norm)
        else:
            self.conv3d = ConvUnit(Conv(cm, cm, (3, 3, 3), 1, rng), cm, c.use_norm)
        if c.has_attention:
            self.attention = Linear(c.width, c.width, zero=True)
        self.restore = ConvUnit(Pointwise(c.width, c.out_channels, 1, rng), c.out_channels, c.use_norm, act=False)
        if c.needs_projection:
            self.shortcut = ConvUnit(Pointwise(c.in_channels, c.out_channels, c.spatial_stride, rng),
                                     c.out_channels, c.use_norm, act=False)

    @property
    def config(self) -> P3DBlockConfig:
        return self._config

    def transform(self, x: Tensor) -> Tensor:
        """Everything before the restore convolution (the attended feature)."""
        c = self._config
        r = self.reduce(x)
        if c.backend == "full3d":
            return self.conv3d(r)
        fs = self.spatial(r)
        fm = self.temporal(r)
        parts = [fs, fm]
        if c.enable_feature_residual:
            parts.append(feature_residual(fm))
        f = ops.concat_channels(parts)
        if c.enable_attention:
            f = apply_attention(f, attention_mask(f, self.attention.weight, self.attention.bias))
        return f

    def forward(self, x: Tensor) -> Tensor:
        try:
            y = self.restore(self.transform(x))
            skip = self.shortcut(x) if self._config.needs_projection else x
            return ops.relu(ops.add(y, skip))
        except ValueError as exc:
            raise ValueError(f"{self._name}: {exc}") from exc


def block_forward(x, block: P3DBlock) -> Tensor:
    return block(ops.as_tensor(x))


# ---------------------------------------------------------------- cost model

def block_output_shape(config: P3DBlockConfig, input_shape: Tuple[int, int, int, int]) -> Tuple[int, int, int, int]:
    """``(C, T, H, W)`` after the block; stride-2 keeps ``ceil(H/2)``."""
    _, T, H, W = input_shape
    s = config.spatial_stride
    return config.out_channels, T, (H - 1) // s + 1, (W - 1) // s + 1


def block_cost_terms(config: P3DBlockConfig, input_shape) -> list:
    """Per-sub-op ``(name, madds, params)`` rows for one sample.

    Convolutions count ``Cout*Cin*taps`` madds per output position (bias adds
    are free); normalization, activations, the feature residual and the
    attention rescale count one per element; pooling one per element read.
    """
    c = config
    cin, T, H, W = input_shape
    _, _, Ho, Wo = block_output_shape(c, input_shape)
    P = T * Ho * Wo
    cm, cout, w = c.mid_channels, c.out_channels, c.width
    norm = 1 if c.use_norm else 0
    rows = []

    def conv(name, ci, co, taps, act=True):
        rows.append((name, co * ci * taps * P, co * ci * taps + co))
        if norm:
            rows.append((name + ".norm", co * P, 2 * co))
        if act:
            rows.append((name + ".relu", co * P, 0))

    conv("reduce", cin, cm, 1)
    if c.backend == "full3d":
        conv("conv3d", cm, cm, 27)
    else:
        conv("spatial", cm, cm, 9)
        conv("temporal", cm, cm, 3)
        if c.enable_feature_residual:
            rows.append(("feature_residual", cm * P, 0))
        if c.enable_attention:
            rows.append(("attention.pool", w * P, 0))
            rows.append(("attention.linear", w * w, w * w + w))
            rows.append(("attention.sigmoid", w, 0))
            rows.append(("attention.apply", w * P, 0))
    conv("restore", w, cout, 1, act=False)
    if c.needs_projection:
        conv("shortcut", cin, cout, 1, act=False)
    rows.append(("add", cout * P, 0))
    rows.append(("relu", cout * P, 0))
    if P == 0:
        # an empty feature runs nothing, including the pooled attention head
        rows = [(name, 0, params) for name, _, params in rows]
    return rows


def count_block_cost(config: P3DBlockConfig, input_shape) -> Tuple[int, int]:
    """Closed-form ``(madds, params)`` of one block for a single sample."""
    rows = block_cost_terms(config, input_shape)
    return sum(r[1] for r in rows), sum(r[2] for r in rows)


def block_param_count(config: P3DBlockConfig) -> int:
    return count_block_cost(config, (config.in_channels, 1, 1, 1))[1]
