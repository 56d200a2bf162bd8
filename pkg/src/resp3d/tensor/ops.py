"""Differentiable operations over :class:`Tensor`.

Network tensors use the ``[N, C, T, H, W]`` layout. Every function returns a
new tensor; inputs are never mutated (batch-norm running statistics are
the one piece of state, and they live outside the tensor).
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import Tensor

AXES = ("N", "C", "T", "H", "W")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def abs_(a) -> Tensor:
    """|a|; the subgradient at exactly 0 is 0."""
    a = as_tensor(a)

    def backward(g):
        return (g * np.sign(a.data),)

    return Tensor.from_op(np.abs(a.data), (a,), backward, "abs")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0)

    def backward(g):
        return (g * (a.data > 0),)

    return Tensor.from_op(out, (a,), backward, "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(-np.logaddexp(0, -a.data)).astype(a.dtype)

    def backward(g):
        return (g * out * (1 - out),)

    return Tensor.from_op(out, (a,), backward, "sigmoid")


_UNARY = {"abs": abs_, "relu": relu, "sigmoid": sigmoid}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a, b=None) -> Tensor:
    if op in _UNARY:
        if b is not None:
            raise ValueError(f"{op} is unary")
        return _UNARY[op](a)
    if op in _BINARY:
        if b is None:
            raise ValueError(f"{op} needs two operands")
        return _BINARY[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------- reductions / reshapes

def sum_(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(np.asarray(a.data.sum(), dtype=a.dtype), (a,), backward, "sum")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor.from_op(out, (a,), backward, "reshape")


def global_avg_pool(x) -> Tensor:
    """Mean over (T, H, W) per sample and channel: ``[N,C,T,H,W] -> [N,C,1,1,1]``."""
    x = as_tensor(x)
    _require_rank5("global_avg_pool", x)
    count = x.shape[2] * x.shape[3] * x.shape[4]
    out = x.data.mean(axis=(2, 3, 4), keepdims=True, dtype=np.float64).astype(x.dtype)

    def backward(g):
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return Tensor.from_op(out, (x,), backward, "global_avg_pool")


# the attention mask's ``pool``
pool_attention_variant = global_avg_pool


def concat_channels(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_channels: nothing to concatenate")
    for p in parts:
        _require_rank5("concat_channels", p)
    ref = parts[0].shape
    for p in parts[1:]:
        for axis in (0, 2, 3, 4):
            if p.shape[axis] != ref[axis]:
                raise ValueError(
                    f"concat_channels: extent mismatch on axis {AXES[axis]}: {ref[axis]} vs {p.shape[axis]}"
                )
    if len(parts) == 1:
        return parts[0]
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return Tensor.from_op(np.concatenate([p.data for p in parts], axis=1), parts, backward, "concat_channels")


def slice_channels(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor.from_op(x.data[:, start:stop], (x,), backward, "slice_channels")


def split_channels(x, sizes) -> list:
    x = as_tensor(x)
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split_channels: sizes {list(sizes)} do not add up to C={x.shape[1]}")
    bounds = np.cumsum([0] + list(sizes))
    return [slice_channels(x, int(bounds[i]), int(bounds[i + 1])) for i in range(len(sizes))]


# ---------------------------------------------------------------- convolutions

def _require_rank5(op: str, x: Tensor) -> None:
    if x.ndim != 5:
        raise ValueError(f"{op}: expected a rank-5 [N,C,T,H,W] tensor, got shape {x.shape}")


def _check_conv(op, x, w, b, taps):
    _require_rank5(op, x)
    if w.ndim != 5:
        raise ValueError(f"{op}: kernel must be [Cout,Cin,kT,kH,kW], got shape {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"{op}: channel mismatch on axis C: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    for axis, (k, expected) in zip(("T", "H", "W"), zip(w.shape[2:], taps)):
        if expected is not None and k != expected:
            raise ValueError(f"{op}: kernel extent on axis {axis} must be {expected}, got {k}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"{op}: bias shape {b.shape} does not match Cout={w.shape[0]}")


def conv3d(x, w, b=None, stride: int = 1, padding=(0, 0, 0), op: str = "conv3d") -> Tensor:
    """General ``kT x kH x kW`` convolution, zero padded, stride 1 in time and ``stride`` in space."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    _check_conv(op, x, w, b, (None, None, None))
    N, Cin, T, H, W = x.shape
    Cout, _, kt, kh, kw = w.shape
    pt, ph, pw = padding
    for axis, n, k, p in (("T", T, kt, pt), ("H", H, kh, ph), ("W", W, kw, pw)):
        if n + 2 * p < k:
            raise ValueError(f"{op}: kernel extent {k} exceeds padded input extent {n + 2 * p} on axis {axis}")
    K = _kernels.impl
    cols = K.im2col(x.data, kt, kh, kw, pt, ph, pw, stride, stride)
    To, Ho, Wo = K.conv_out_shape(T, H, W, kt, kh, kw, pt, ph, pw, stride, stride)
    wm = w.data.reshape(Cout, -1)
    out = np.matmul(wm, cols)
    if b is not None:
        out += b.data[None, :, None]

    def backward(g):
        gm = g.reshape(N, Cout, -1)
        dw = db = dx = None
        if w.requires_grad:
            dwm = np.zeros_like(wm)
            for n in range(N):
                dwm += gm[n] @ cols[n].T
            dw = dwm.reshape(w.shape)
        if b is not None and b.requires_grad:
            db = gm.sum(axis=(0, 2))
        if x.requires_grad:
            dx = K.col2im(np.matmul(wm.T, gm), x.shape, kt, kh, kw, pt, ph, pw, stride, stride)
        return dx, dw, db

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out.reshape(N, Cout, To, Ho, Wo), parents, backward, op)


def conv_spatial(x, w, b=None, stride_spatial: int = 1, pad_spatial: int = 0) -> Tensor:
    """``1 x kH x kW`` convolution applied to every frame independently."""
    x, w = as_tensor(x), as_tensor(w)
    _check_conv("conv_spatial", x, w, None, (1, None, None))
    return conv3d(x, w, b, stride_spatial, (0, pad_spatial, pad_spatial), op="conv_spatial")


def conv_temporal(x, w, b=None, pad_temporal: int = 0) -> Tensor:
    """``kT x 1 x 1`` convolution along time at every pixel; time stride is 1."""
    x, w = as_tensor(x), as_tensor(w)
    _check_conv("conv_temporal", x, w, None, (None, 1, 1))
    return conv3d(x, w, b, 1, (pad_temporal, 0, 0), op="conv_temporal")


def conv_pointwise(x, w, b=None, stride_spatial: int = 1) -> Tensor:
    """``1 x 1 x 1`` channel mix; ``w`` is ``[Cout, Cin]``."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    _require_rank5("conv_pointwise", x)
    if w.ndim != 2:
        raise ValueError(f"conv_pointwise: kernel must be [Cout,Cin], got shape {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"conv_pointwise: channel mismatch on axis C: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"conv_pointwise: bias shape {b.shape} does not match Cout={w.shape[0]}")
    if stride_spatial not in (1, 2):
        raise ValueError(f"conv_pointwise: stride must be 1 or 2, got {stride_spatial}")
    s = stride_spatial
    N, Cin, T, H, W = x.shape
    xs = x.data if s == 1 else np.ascontiguousarray(x.data[:, :, :, ::s, ::s])
    Ho, Wo = xs.shape[3], xs.shape[4]
    xm = xs.reshape(N, Cin, -1)
    Cout = w.shape[0]
    out = np.matmul(w.data, xm)
    if b is not None:
        out += b.data[None, :, None]

    def backward(g):
        gm = g.reshape(N, Cout, -1)
        dw = db = dx = None
        if w.requires_grad:
            dw = np.zeros_like(w.data)
            for n in range(N):
                dw += gm[n] @ xm[n].T
        if b is not None and b.requires_grad:
            db = gm.sum(axis=(0, 2))
        if x.requires_grad:
            dxs = np.matmul(w.data.T, gm).reshape(N, Cin, T, Ho, Wo)
            if s == 1:
                dx = dxs
            else:
                dx = np.zeros_like(x.data)
                dx[:, :, :, ::s, ::s] = dxs
        return dx, dw, db

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor.from_op(out.reshape(N, Cout, T, Ho, Wo), parents, backward, "conv_pointwise")


# ---------------------------------------------------------------- dense layers

def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``x: [N, Cin]`` and ``weight: [Cout, Cin]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    if x.ndim != 2 or weight.ndim != 2:
        raise ValueError(f"linear: expected [N,Cin] input and [Cout,Cin] weight, got {x.shape} and {weight.shape}")
    if weight.shape[1] != x.shape[1]:
        raise ValueError(f"linear: input width {x.shape[1]} does not match weight Cin={weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"linear: bias shape {bias.shape} does not match Cout={weight.shape[0]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        return g @ weight.data, g.T @ x.data, (g.sum(axis=0) if bias is not None else None)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor.from_op(out, parents, backward, "linear")


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (N, T, H, W).

    In training mode batch statistics are used and the running buffers are
    updated in place (running variance uses the unbiased estimate).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _require_rank5("batch_norm", x)
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm: gamma/beta must have shape ({C},), got {gamma.shape}/{beta.shape}")
    K = _kernels.impl
    m = x.size // C
    if training:
        if m < 2:
            raise ValueError(f"batch_norm: training mode needs at least 2 values per channel, got {m}")
        mean, var = K.bn_stats(x.data)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mean, var = running_mean.astype(x.dtype), running_var.astype(x.dtype)
    invstd = (1.0 / np.sqrt(var.astype(np.float64) + eps)).astype(x.dtype)
    out = K.bn_apply(x.data, mean, invstd, gamma.data, beta.data)

    def backward(g):
        g = np.ascontiguousarray(g)
        if training:
            return K.bn_backward(g, x.data, mean, invstd, gamma.data)
        N = x.shape[0]
        gv = g.reshape(N, C, -1)
        xhat = (x.data.reshape(N, C, -1) - mean[None, :, None]) * invstd[None, :, None]
        dx = (gv * (gamma.data * invstd)[None, :, None]).reshape(x.shape)
        return dx, (gv * xhat).sum(axis=(0, 2)), gv.sum(axis=(0, 2))

    return Tensor.from_op(out, (x, gamma, beta), backward, "batch_norm")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be [N,K], got {logits.shape}")
    N, K = logits.shape
    if labels.shape != (N,):
        raise ValueError(f"softmax_cross_entropy: expected {N} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {K})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logz
    loss = -logp[np.arange(N), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(N), labels] -= 1
        return (p * (g / N),)

    return Tensor.from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "softmax_cross_entropy")
