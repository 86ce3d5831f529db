"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor, no_grad


def _scalarize(out: Tensor, weights: np.ndarray | None) -> Tensor:
    if out.size == 1:
        return out.reshape(())
    from . import ops

    return ops.sum(ops.mul(out, Tensor(weights)))


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    delta: float = 1e-4,
    seed: int = 0,
    max_coords: int | None = None,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``fn(*inputs)`` may return any shape; non-scalar outputs are reduced with a
    fixed random projection so every output element contributes.  Only inputs
    with ``requires_grad`` are perturbed.  For each coordinate the error is
    ``|a - n| / max(|a|, |n|, 1e-8)``.  ``max_coords`` caps the number of
    coordinates probed per input (chosen by ``seed``).
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("gradcheck needs float64 inputs")
        t.data = np.ascontiguousarray(t.data)  # perturbations go through a flat view
    rng = np.random.default_rng(seed)

    probe = fn(*inputs)
    if not np.all(np.isfinite(probe.data)):
        raise NonFiniteError("gradcheck: function output is not finite")
    weights = rng.standard_normal(probe.shape) if probe.size > 1 else None

    for t in inputs:
        t.grad = None
    _scalarize(fn(*inputs), weights).backward()
    analytic = [None if t.grad is None else t.grad.copy() for t in inputs]

    def value() -> float:
        with no_grad():
            v = float(_scalarize(fn(*inputs), weights).data)
        if not np.isfinite(v):
            raise NonFiniteError("gradcheck: perturbed output is not finite")
        return v

    worst = 0.0
    for t, a in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        if a is None:
            a = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_flat = a.reshape(-1)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + delta
            fp = value()
            flat[k] = orig - delta
            fm = value()
            flat[k] = orig
            num = (fp - fm) / (2 * delta)
            an = float(a_flat[k])
            err = abs(an - num) / max(abs(an), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
