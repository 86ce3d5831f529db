"""Bias-corrected Adam."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor.tensor import NonFiniteError, Tensor


class Adam:
    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(named_params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        """One update.  Parameters without a gradient are left untouched."""
        for name, p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient for parameter {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / c1
            vhat = v / c2
            p.data = (p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype, copy=False)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.t], dtype=np.float32)}
        for name, _ in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["adam.step"][0])
        for name, p in self.params:
            self.m[name] = np.asarray(state[f"adam.m.{name}"], dtype=p.dtype).reshape(p.shape).copy()
            self.v[name] = np.asarray(state[f"adam.v.{name}"], dtype=p.dtype).reshape(p.shape).copy()
