"""Minimal module system: parameter containers around the tensor ops."""

from __future__ import annotations

from typing import Iterator, Optional, Tuple

import numpy as np

from .tensor import Tensor, default_dtype
from .tensor import ops


class Module:
    """Parameters are ``Tensor`` attributes with ``requires_grad``; buffers are
    ``np.ndarray`` attributes. Children are ``Module`` attributes or lists of them.
    Iteration follows attribute insertion order, so names are deterministic."""

    training = True

    def _children(self) -> Iterator[Tuple[str, object]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            yield key, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, np.ndarray):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{name}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=default_dtype()), requires_grad=True)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv(Module):
    """``kT x kH x kW`` convolution; ``kind`` selects the checked op wrapper."""

    def __init__(self, cin: int, cout: int, kernel: Tuple[int, int, int], stride: int = 1,
                 rng: Optional[np.random.Generator] = None):
        kt, kh, kw = kernel
        if kt % 2 == 0 or kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel extents must be odd, got {kernel}")
        rng = rng or np.random.default_rng(0)
        self.kernel = tuple(kernel)
        self.stride = stride
        self.padding = ((kt - 1) // 2, (kh - 1) // 2, (kw - 1) // 2)
        fan_in = cin * kt * kh * kw
        self.weight = _param(kaiming_uniform(rng, (cout, cin, kt, kh, kw), fan_in))
        self.bias = _param(np.zeros(cout))

    @property
    def kind(self) -> str:
        kt, kh, kw = self.kernel
        if kt == 1 and (kh, kw) != (1, 1):
            return "spatial"
        if (kh, kw) == (1, 1) and kt != 1:
            return "temporal"
        return "full"

    def forward(self, x: Tensor) -> Tensor:
        kind = self.kind
        if kind == "spatial":
            return ops.conv_spatial(x, self.weight, self.bias, self.stride, self.padding[1])
        if kind == "temporal":
            if self.stride != 1:
                raise ValueError("temporal convolution has no spatial stride")
            return ops.conv_temporal(x, self.weight, self.bias, self.padding[0])
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class Pointwise(Module):
    def __init__(self, cin: int, cout: int, stride: int = 1, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.weight = _param(kaiming_uniform(rng, (cout, cin), cin))
        self.bias = _param(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_pointwise(x, self.weight, self.bias, self.stride)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = _param(np.ones(channels))
        self.beta = _param(np.zeros(channels))
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              self.training, self.momentum, self.eps)


class Linear(Module):
    def __init__(self, cin: int, cout: int, rng: Optional[np.random.Generator] = None, zero: bool = False):
        rng = rng or np.random.default_rng(0)
        w = np.zeros((cout, cin)) if zero else kaiming_uniform(rng, (cout, cin), cin)
        self.weight = _param(w)
        self.bias = _param(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class ConvUnit(Module):
    """Convolution followed by optional batch norm and optional ReLU."""

    def __init__(self, conv: Module, channels: int, norm: bool = True, act: bool = True):
        self.conv = conv
        self.norm = BatchNorm(channels) if norm else None
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.norm is not None:
            y = self.norm(y)
        return ops.relu(y) if self.act else y
