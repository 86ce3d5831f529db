"""Minimal module system on top of the tensor substrate.

Modules discover their parameters, buffers and children from instance
attributes (in assignment order), which gives every parameter a stable
dotted name such as ``fusion.stage1.res.conv1.weight``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import ops
from .tensor.rng import stream_rng
from .tensor.tensor import DEFAULT_DTYPE, Tensor


@dataclass(frozen=True)
class Init:
    kind: str  # he_normal | trunc_normal | zeros | ones
    sigma: float = 0.02

    def sample(self, shape: tuple[int, ...], rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
        if self.kind == "zeros":
            return np.zeros(shape, dtype=dtype)
        if self.kind == "ones":
            return np.ones(shape, dtype=dtype)
        if self.kind == "he_normal":
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)
        if self.kind == "trunc_normal":
            vals = rng.standard_normal(int(np.prod(shape)))
            bad = np.abs(vals) > 2.0
            while bad.any():  # resample outside +-2 sigma
                vals[bad] = rng.standard_normal(int(bad.sum()))
                bad = np.abs(vals) > 2.0
            return (vals.reshape(shape) * self.sigma).astype(dtype)
        raise ValueError(f"unknown init kind {self.kind!r}")


HE_NORMAL = Init("he_normal")
TRUNC_NORMAL = Init("trunc_normal", 0.02)
ZEROS = Init("zeros")
ONES = Init("ones")


class Parameter(Tensor):
    __slots__ = ("init_spec",)

    def __init__(self, shape: tuple[int, ...], init: Init, dtype=DEFAULT_DTYPE):
        super().__init__(np.zeros(shape, dtype=dtype), requires_grad=True)
        self.init_spec = init


class Module:
    def __init__(self) -> None:
        self.training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # -- traversal ----------------------------------------------------------
    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)) and val and all(isinstance(v, Module) for v in val):
                for i, v in enumerate(val):
                    yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
        for key, child in self.named_children():
            yield from child.named_parameters(prefix + key + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, val in getattr(self, "_buffers", {}).items():
            yield prefix + key, val
        for key, child in self.named_children():
            yield from child.named_buffers(prefix + key + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    # -- state --------------------------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def initialize(self, seed: int) -> "Module":
        """Draw every parameter from its init spec on a stream named after the parameter."""
        for name, p in self.named_parameters():
            p.data = p.init_spec.sample(p.shape, stream_rng(seed, "init/" + name), p.dtype)
        return self

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            for k, v in getattr(m, "_buffers", {}).items():
                m._buffers[k] = v.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in self.named_parameters():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype).copy()
        for m_prefix, m in self._named_modules():
            for k in list(getattr(m, "_buffers", {})):
                arr = np.asarray(state[m_prefix + k])
                m._buffers[k] = arr.astype(m._buffers[k].dtype).reshape(m._buffers[k].shape).copy()

    def _named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for key, child in self.named_children():
            yield from child._named_modules(prefix + key + ".")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int = 3, bias: bool = True):
        super().__init__()
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        if k not in (1, 3):
            raise ValueError(f"only 1x1 and 3x3 kernels are supported, got {k}")
        self.weight = Parameter((out_ch, in_ch, k, k), HE_NORMAL)
        if bias:
            self.bias = Parameter((out_ch,), ZEROS)
        else:
            self.bias = None
        self.k = k

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.weight = Parameter((channels,), ONES)
        self.bias = Parameter((channels,), ZEROS)
        self.eps = eps
        self.momentum = momentum
        self._buffers = {
            "running_mean": np.zeros(channels, dtype=DEFAULT_DTYPE),
            "running_var": np.ones(channels, dtype=DEFAULT_DTYPE),
            "num_batches_tracked": np.zeros(1, dtype=DEFAULT_DTYPE),
        }

    def set_running_stats(self, mean=0.0, var=1.0) -> None:
        """Install fixed running statistics and mark them as populated."""
        c = self.weight.shape[0]
        self._buffers["running_mean"][...] = np.broadcast_to(mean, (c,))
        self._buffers["running_var"][...] = np.broadcast_to(var, (c,))
        self._buffers["num_batches_tracked"][...] = max(1.0, float(self._buffers["num_batches_tracked"][0]))

    def forward(self, x: Tensor) -> Tensor:
        b = self._buffers
        if self.training:
            out = ops.batchnorm2d(
                x, self.weight, self.bias, b["running_mean"], b["running_var"], True, self.eps, self.momentum
            )
            b["num_batches_tracked"] += 1
            return out
        populated = b["num_batches_tracked"][0] > 0
        return ops.batchnorm2d(
            x,
            self.weight,
            self.bias,
            b["running_mean"] if populated else None,
            b["running_var"] if populated else None,
            False,
            self.eps,
            self.momentum,
        )


class Linear(Module):
    def __init__(self, k_in: int, k_out: int, bias: bool = True, init: Init = TRUNC_NORMAL):
        super().__init__()
        self.weight = Parameter((k_in, k_out), init)
        self.bias = Parameter((k_out,), ZEROS) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, k: int, eps: float = 1e-6):
        super().__init__()
        self.weight = Parameter((k,), ONES)
        self.bias = Parameter((k,), ZEROS)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layernorm(x, self.weight, self.bias, self.eps)
