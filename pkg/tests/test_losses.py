"""Cross-entropy, soft Dice and the hybrid loss against direct scalar evaluation."""

import math

import numpy as np
import pytest

from dtrattunet.losses import LossWeights, ce_loss, dice_loss, hybrid_loss
from dtrattunet.tensor import Tensor, gradcheck, ops
from conftest import f64


def _ce_scalar(z, t):
    n, c, h, w = z.shape
    total = 0.0
    for b in range(n):
        for i in range(h):
            for j in range(w):
                if c == 1:
                    p = 1 / (1 + math.exp(-z[b, 0, i, j]))
                    total -= math.log(p) if t[b, i, j] == 1 else math.log(1 - p)
                else:
                    logits = z[b, :, i, j]
                    total -= logits[t[b, i, j]] - math.log(sum(math.exp(v) for v in logits))
    return total / (n * h * w)


def _dice_scalar(p, t, eps=1.0):
    c = p.shape[1]
    classes = [(1, 0)] if c == 1 else [(k, k) for k in range(1, c)]
    vals = []
    for cls, ch in classes:
        inter = sum(float(a) * (b == cls) for a, b in zip(p[:, ch].ravel(), t.ravel()))
        vals.append(1 - (2 * inter + eps) / (p[:, ch].sum() + (t == cls).sum() + eps))
    return sum(vals) / len(vals)


def test_ce_confident_logits():
    t = np.array([[[0, 1], [1, 0]]])
    z = np.where(t == 1, 20.0, -20.0)[:, None].astype(np.float64)
    assert float(ce_loss(Tensor(z), t).data) <= 1e-6
    zm = np.full((1, 3, 2, 2), -20.0)
    np.put_along_axis(zm, t[:, None], 20.0, axis=1)
    assert float(ce_loss(Tensor(zm), t).data) <= 1e-6


def test_ce_uniform_is_log_c():
    t = np.array([[[0, 1], [2, 0]]])
    assert float(ce_loss(Tensor(np.zeros((1, 3, 2, 2))), t).data) == pytest.approx(math.log(3), abs=1e-12)


@pytest.mark.parametrize("c", [1, 3])
def test_ce_matches_scalar_formula(rng, c):
    z = rng.standard_normal((2, c, 3, 3)) * 3
    t = rng.integers(0, 2 if c == 1 else c, size=(2, 3, 3))
    assert float(ce_loss(Tensor(z), t).data) == pytest.approx(_ce_scalar(z, t), rel=1e-12)


def test_ce_stable_for_huge_logits():
    z = Tensor(np.array([[[[1e4, -1e4]]], [[[-1e4, 1e4]]]], dtype=np.float32).reshape(2, 1, 1, 2))
    v = float(ce_loss(z, np.array([[[1, 0]], [[1, 0]]])).data)
    assert np.isfinite(v) and v == pytest.approx(1e4 / 2, rel=1e-6)


def test_ce_rejects_bad_target():
    with pytest.raises(ValueError):
        ce_loss(Tensor(np.zeros((1, 3, 2, 2))), np.full((1, 2, 2), 3))
    with pytest.raises(ValueError):
        ce_loss(Tensor(np.zeros((1, 1, 2, 2))), np.full((1, 2, 2), 2))
    with pytest.raises(ValueError):
        ce_loss(Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 3, 3)))


@pytest.mark.parametrize("c", [1, 3])
def test_ce_gradcheck(rng, c):
    t = rng.integers(0, 2 if c == 1 else c, size=(2, 3, 3))
    assert gradcheck(lambda z: ce_loss(z, t), [f64(rng, 2, c, 3, 3)]) <= 1e-5


def test_dice_perfect_prediction():
    t = np.zeros((1, 40, 40), dtype=int)
    t[0, :25, :] = 1  # 1000 foreground pixels
    assert float(dice_loss(Tensor(t[:, None].astype(np.float64)), t).data) < 1e-3


def test_dice_inverted_half_mask():
    t = np.zeros((1, 4, 4), dtype=int)
    t[0, :2] = 1
    p = (1 - t)[:, None].astype(np.float64)
    # intersection 0, |p| = 8, |g| = 8
    assert float(dice_loss(Tensor(p), t).data) == pytest.approx(1 - 1 / 17)


@pytest.mark.parametrize("c", [1, 3])
def test_dice_matches_scalar_formula(rng, c):
    p = rng.uniform(size=(2, c, 4, 4))
    t = rng.integers(0, 2 if c == 1 else c, size=(2, 4, 4))
    assert float(dice_loss(Tensor(p), t).data) == pytest.approx(_dice_scalar(p, t), rel=1e-12)


@pytest.mark.parametrize("c", [1, 3])
def test_dice_gradcheck(rng, c):
    t = rng.integers(0, 2 if c == 1 else c, size=(2, 3, 3))
    p = Tensor(rng.uniform(0.05, 0.95, size=(2, c, 3, 3)), requires_grad=True)
    assert gradcheck(lambda q: dice_loss(q, t), [p]) <= 1e-5


def test_hybrid_default_weights_match_scalar(rng):
    zl = rng.standard_normal((2, 1, 3, 3))
    zo = rng.standard_normal((2, 1, 3, 3))
    tl = rng.integers(0, 2, size=(2, 3, 3))
    to = rng.integers(0, 2, size=(2, 3, 3))
    probs = 1 / (1 + np.exp(-zl))
    ref = 0.5 * _ce_scalar(zl, tl) + 0.5 * _dice_scalar(probs, tl) + 0.3 * _ce_scalar(zo, to)
    terms = {}
    got = float(hybrid_loss(Tensor(zl), Tensor(zo), tl, to, LossWeights(), terms).data)
    assert got == pytest.approx(ref, rel=1e-12)
    assert set(terms) == {"ce_lesion", "dice_lesion", "ce_organ"}


def test_hybrid_without_organ_omits_term(rng):
    zl = Tensor(rng.standard_normal((1, 3, 2, 2)))
    t = rng.integers(0, 3, size=(1, 2, 2))
    a = float(hybrid_loss(zl, None, t, None).data)
    b = 0.5 * float(ce_loss(zl, t).data) + 0.5 * float(dice_loss(ops.softmax(zl, axis=1), t).data)
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ValueError):
        hybrid_loss(zl, zl, t, None)


def test_gamma_zero_gives_zero_organ_gradient(rng):
    zl = f64(rng, 1, 1, 3, 3)
    zo = f64(rng, 1, 1, 3, 3)
    t = rng.integers(0, 2, size=(1, 3, 3))
    hybrid_loss(zl, zo, t, t, LossWeights(gamma=0.0)).backward()
    assert zo.grad is None or not zo.grad.any()
    assert zl.grad.any()


def test_lesion_weights_zero_leave_lesion_logits_untouched(rng):
    zl = f64(rng, 1, 1, 3, 3)
    zo = f64(rng, 1, 1, 3, 3)
    t = rng.integers(0, 2, size=(1, 3, 3))
    hybrid_loss(zl, zo, t, t, LossWeights(0.0, 0.0, 1.0)).backward()
    assert not zl.grad.any()
    assert zo.grad.any()


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=-1)
    with pytest.raises(ValueError):
        LossWeights(gamma=float("nan"))


def test_losses_non_negative_and_small_when_perfect(rng):
    t = rng.integers(0, 2, size=(2, 32, 32))
    t[:, :16] = 1
    z = np.where(t == 1, 20.0, -20.0)[:, None]
    assert float(hybrid_loss(Tensor(z), Tensor(z), t, t).data) <= 1e-3
    for _ in range(5):
        zr = Tensor(rng.standard_normal((2, 1, 8, 8)))
        tr = rng.integers(0, 2, size=(2, 8, 8))
        assert float(ce_loss(zr, tr).data) >= 0
        assert float(dice_loss(ops.sigmoid(zr), tr).data) >= 0
