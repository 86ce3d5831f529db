import numpy as np
import pytest

from dtrattunet.model import ModelVariantConfig
from dtrattunet.transformer import TransformerConfig


def tiny_transformer() -> TransformerConfig:
    return TransformerConfig(layers=4, heads=2, embed_dim=8, mlp_dim=16, tap_layers=(1, 2, 3, 4))


def tiny_config(variant: str = "dtrattunet", size: int = 32, base_width: int = 2, classes: int = 1):
    return ModelVariantConfig.from_variant(
        variant, base_width=base_width, image_size=size, lesion_classes=classes, transformer=tiny_transformer()
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def f64(rng, *shape, scale=1.0):
    from dtrattunet.tensor import Tensor

    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


def warm_up(model, size, batch=2, seed=0):
    """One train-mode forward so BatchNorm running statistics exist."""
    from dtrattunet.tensor import Tensor, no_grad

    x = np.random.default_rng(seed).uniform(size=(batch, model.cfg.in_channels, size, size)).astype(np.float32)
    model.train()
    with no_grad():
        model(Tensor(x))
    return model
