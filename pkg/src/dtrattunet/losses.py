"""Hybrid segmentation loss: lesion CE + lesion soft Dice + weighted organ CE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .tensor import ops
from .tensor.tensor import Tensor, make_result

DICE_EPS = 1.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.3

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")


def _check_target(logits: Tensor, target: np.ndarray) -> np.ndarray:
    n, c, h, w = logits.shape
    target = np.asarray(target)
    if target.shape != (n, h, w):
        raise ValueError(f"target shape {target.shape} does not match logits {logits.shape}")
    n_classes = 2 if c == 1 else c
    if target.size and (target.min() < 0 or target.max() >= n_classes):
        raise ValueError(f"target holds class index {int(target.max())} but logits cover {n_classes} classes")
    return target.astype(np.intp, copy=False)


def ce_loss(logits: Tensor, target) -> Tensor:
    """Mean per-pixel negative log-likelihood.

    One channel means binary (sigmoid) semantics, evaluated in logit space;
    more channels mean softmax over the channel axis.
    """
    t = _check_target(logits, target)
    z = logits.data
    dtype = z.dtype
    if z.shape[1] == 1:
        z0 = z[:, 0]
        y = t.astype(dtype)
        per_pixel = np.maximum(z0, 0) - z0 * y + np.log1p(np.exp(-np.abs(z0)))
        count = per_pixel.size
        value = per_pixel.sum(dtype=np.float64) / count

        def backward(g):
            return ((g / count) * (special.expit(z) - y[:, None]).astype(dtype),)

    else:
        zmax = z.max(axis=1, keepdims=True)
        e = np.exp(z - zmax)
        s = e.sum(axis=1, keepdims=True)
        lse = (np.log(s) + zmax)[:, 0]
        picked = np.take_along_axis(z, t[:, None], axis=1)[:, 0]
        count = picked.size
        value = (lse - picked).sum(dtype=np.float64) / count

        def backward(g):
            p = e / s
            np.put_along_axis(p, t[:, None], np.take_along_axis(p, t[:, None], axis=1) - 1, axis=1)
            return ((g / count) * p.astype(dtype, copy=False),)

    return make_result(np.asarray(value, dtype=dtype), (logits,), backward, "ce_loss")


def dice_loss(probs: Tensor, target, eps: float = DICE_EPS) -> Tensor:
    """Soft Dice over the whole batch, averaged over foreground classes.

    ``probs`` is (N, 1, H, W) foreground probability for binary tasks, or the
    (N, C, H, W) softmax output for multi-class ones (class 0 is background).
    """
    t = _check_target(probs, target)
    p = probs.data
    dtype = p.dtype
    c = p.shape[1]
    classes = [1] if c == 1 else list(range(1, c))
    chans = [0] if c == 1 else classes
    grads = np.zeros_like(p)
    total = 0.0
    for cls, ch in zip(classes, chans):
        pc = p[:, ch].astype(np.float64)
        gc = (t == cls).astype(np.float64)
        inter = (pc * gc).sum()
        denom = pc.sum() + gc.sum() + eps
        total += 1.0 - (2.0 * inter + eps) / denom
        grads[:, ch] = (-(2.0 * gc * denom - (2.0 * inter + eps)) / (denom * denom)).astype(dtype)
    k = len(classes)
    grads /= k

    return make_result(np.asarray(total / k, dtype=dtype), (probs,), lambda g: (g * grads,), "dice_loss")


def lesion_probabilities(logits: Tensor) -> Tensor:
    if logits.shape[1] == 1:
        return ops.sigmoid(logits)
    return ops.softmax(logits, axis=1)


def hybrid_loss(
    lesion_logits: Tensor,
    organ_logits: Tensor | None,
    lesion_target,
    organ_target=None,
    w: LossWeights = LossWeights(),
    terms: dict | None = None,
) -> Tensor:
    """alpha*CE_les + beta*Dice_les + gamma*CE_organ.

    The organ term is left out of the graph entirely when there is no organ
    decoder or gamma is zero.  If ``terms`` is given it receives the
    unweighted term values as floats.
    """
    if organ_logits is not None and organ_target is None:
        raise ValueError("organ logits given without an organ target")
    ce = ce_loss(lesion_logits, lesion_target)
    dice = dice_loss(lesion_probabilities(lesion_logits), lesion_target)
    total = ops.add(ops.mul(ce, w.alpha), ops.mul(dice, w.beta))
    if terms is not None:
        terms["ce_lesion"] = float(ce.data)
        terms["dice_lesion"] = float(dice.data)
    if organ_logits is not None:
        ce_o = ce_loss(organ_logits, organ_target)
        if terms is not None:
            terms["ce_organ"] = float(ce_o.data)
        if w.gamma != 0:
            total = ops.add(total, ops.mul(ce_o, w.gamma))
    return total
