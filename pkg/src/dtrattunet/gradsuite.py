"""Finite-difference gradient suite over every primitive and composite block.

All cases run in float64.  ``run_suite`` yields ``(name, max_rel_error, tol)``.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .decoder import AttentionGate, AttentionGateSpec
from .fusion import ResBlock, UpResBlock
from .losses import LossWeights, ce_loss, dice_loss, hybrid_loss
from .nn import Module
from .tensor import ops
from .tensor.gradcheck import gradcheck
from .tensor.tensor import Tensor
from .transformer import TransformerConfig, TransformerLayer

OP_TOL = 1e-4
MODEL_TOL = 1e-3


def _t(rng, shape, scale=1.0, shift=0.0):
    return Tensor(rng.standard_normal(shape) * scale + shift, requires_grad=True, dtype=np.float64)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return Tensor(np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x), requires_grad=True, dtype=np.float64)


def _distinct(rng, shape):
    # well separated values so max pooling has no near-ties
    x = rng.permutation(int(np.prod(shape))).reshape(shape) * 0.1
    return Tensor(x.astype(np.float64), requires_grad=True)


def _module_case(
    module: Module, seed: int, inputs: list[Tensor], call: Callable, max_coords: int, delta: float, skip=()
):
    module.initialize(seed).to(np.float64).train()
    params = [p for n, p in module.named_parameters() if n not in skip]
    return gradcheck(lambda *a: call(), inputs + params, delta=delta, seed=seed, max_coords=max_coords)


def primitive_cases(seed: int = 0) -> Iterator[tuple[str, Callable[[], float]]]:
    rng = np.random.default_rng(seed)

    def case(fn, *inputs, **kw):
        return lambda: gradcheck(fn, list(inputs), seed=seed, **kw)

    a, b = _t(rng, (3, 4)), _t(rng, (1, 4))
    yield "add", case(ops.add, a, b)
    yield "sub", case(ops.sub, a, b)
    yield "mul", case(ops.mul, _t(rng, (2, 3, 4)), _t(rng, (3, 1)))
    yield "sum", case(ops.sum, _t(rng, (3, 5)))
    yield "mean", case(ops.mean, _t(rng, (3, 5)))
    yield "reshape", case(lambda x: ops.reshape(x, (6, 2)), _t(rng, (3, 4)))
    yield "permute", case(lambda x: ops.permute(x, (2, 0, 1)), _t(rng, (2, 3, 4)))
    yield "matmul", case(ops.matmul, _t(rng, (2, 3, 4)), _t(rng, (2, 4, 5)))
    yield "relu", case(ops.relu, _away_from_zero(rng, (4, 5)))
    yield "sigmoid", case(ops.sigmoid, _t(rng, (4, 5), 2.0))
    yield "gelu", case(ops.gelu, _t(rng, (4, 5), 2.0))
    yield "linear", case(ops.linear, _t(rng, (2, 3, 5)), _t(rng, (5, 4)), _t(rng, (4,)))
    yield "layernorm", case(ops.layernorm, _t(rng, (3, 6)), _t(rng, (6,), 0.5, 1.0), _t(rng, (6,)))
    yield "softmax", case(lambda x: ops.softmax(x, axis=1), _t(rng, (2, 4, 3)))
    yield "conv2d_3x3", case(ops.conv2d, _t(rng, (2, 3, 5, 5)), _t(rng, (4, 3, 3, 3), 0.3), _t(rng, (4,)))
    yield "conv2d_1x1", case(ops.conv2d, _t(rng, (2, 3, 4, 4)), _t(rng, (2, 3, 1, 1)), _t(rng, (2,)))

    rm, rv = np.zeros(4), np.ones(4)
    yield "batchnorm2d", case(
        lambda x, g, bb: ops.batchnorm2d(x, g, bb, rm, rv, True),
        _t(rng, (2, 4, 3, 3)), _t(rng, (4,), 0.5, 1.0), _t(rng, (4,)),
    )
    yield "maxpool2x2", case(ops.maxpool2x2, _distinct(rng, (2, 2, 4, 6)))
    yield "upsample2x", case(ops.upsample_bilinear2x, _t(rng, (2, 2, 3, 4)))
    yield "concat", case(lambda x, y: ops.concat_channels([x, y]), _t(rng, (2, 2, 3, 3)), _t(rng, (2, 3, 3, 3)))

    tb = rng.integers(0, 2, size=(2, 4, 4))
    tm = rng.integers(0, 3, size=(2, 4, 4))
    yield "ce_binary", case(lambda z: ce_loss(z, tb), _t(rng, (2, 1, 4, 4), 2.0))
    yield "ce_multiclass", case(lambda z: ce_loss(z, tm), _t(rng, (2, 3, 4, 4), 2.0))
    p_bin = Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 4, 4)), requires_grad=True, dtype=np.float64)
    yield "dice_binary", case(lambda p: dice_loss(p, tb), p_bin)
    p_multi = Tensor(rng.uniform(0.05, 0.95, size=(2, 3, 4, 4)), requires_grad=True, dtype=np.float64)
    yield "dice_multiclass", case(lambda p: dice_loss(p, tm), p_multi)
    org = rng.integers(0, 2, size=(2, 4, 4))
    yield "hybrid_loss", case(
        lambda zl, zo: hybrid_loss(zl, zo, tm, org, LossWeights()), _t(rng, (2, 3, 4, 4)), _t(rng, (2, 1, 4, 4))
    )


def block_cases(seed: int = 0) -> Iterator[tuple[str, Callable[[], float]]]:
    rng = np.random.default_rng(seed + 1)

    def res_case():
        block = ResBlock(3, 4)
        x = _t(rng, (2, 3, 6, 6))
        return _module_case(block, seed, [x], lambda: block(x), max_coords=25, delta=1e-6)

    def upr_case():
        block = UpResBlock(4, 3)
        z = _t(rng, (2, 4, 3, 3))
        return _module_case(block, seed, [z], lambda: block(z), max_coords=25, delta=1e-6)

    def gate_case():
        gate = AttentionGate(AttentionGateSpec(4, 6))
        x, g = _t(rng, (2, 4, 4, 4)), _t(rng, (2, 6, 4, 4))
        # psi.bias feeds a BatchNorm, so its gradient is identically zero and a
        # relative error on it only measures finite-difference noise
        return _module_case(
            gate, seed, [x, g], lambda: gate(x, g), max_coords=25, delta=1e-6, skip=("psi.bias",)
        )

    def layer_case():
        layer = TransformerLayer(TransformerConfig(layers=1, heads=2, embed_dim=8, mlp_dim=16, tap_layers=(1,)))
        z = _t(rng, (2, 5, 8))
        return _module_case(layer, seed, [z], lambda: layer(z), max_coords=20, delta=1e-4)

    yield "resblock", res_case
    yield "upresblock", upr_case
    yield "attention_gate", gate_case
    yield "transformer_layer", layer_case


def model_probe(seed: int = 0, n_coords: int = 10) -> float:
    """Hybrid-loss gradient of a tiny full model on ``n_coords`` random parameter entries."""
    from .model import ModelVariantConfig, build_model

    cfg = ModelVariantConfig(base_width=2, image_size=32, lesion_classes=3, transformer=_probe_transformer())
    model = build_model(cfg, seed).to(np.float64).train()
    rng = np.random.default_rng(seed + 7)
    x = Tensor(rng.uniform(0, 1, size=(2, 3, 32, 32)), dtype=np.float64)
    les = rng.integers(0, 3, size=(2, 32, 32))
    org = rng.integers(0, 2, size=(2, 32, 32))

    def loss():
        lesion, organ = model(x)
        return hybrid_loss(lesion, organ, les, org)

    named = model.named_parameters()
    params = [p for _, p in named]
    sizes = np.array([p.size for p in params], dtype=np.float64)
    picks = rng.choice(len(params), size=n_coords, replace=False, p=sizes / sizes.sum())
    worst = 0.0
    for i in picks:
        worst = max(worst, gradcheck(lambda *a: loss(), [params[i]], delta=1e-6, seed=int(i), max_coords=1))
    return worst


def _probe_transformer() -> TransformerConfig:
    return TransformerConfig(layers=4, heads=2, embed_dim=8, mlp_dim=16, tap_layers=(1, 2, 3, 4))


def run_suite(seed: int = 0, include_model: bool = True) -> Iterator[tuple[str, float, float]]:
    for name, fn in primitive_cases(seed):
        yield name, fn(), OP_TOL
    for name, fn in block_cases(seed):
        yield name, fn(), OP_TOL
    if include_model:
        yield "model_probe", model_probe(seed), MODEL_TOL
