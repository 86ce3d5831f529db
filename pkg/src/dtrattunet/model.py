"""Model assembly for the six ablation variants."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace

from .decoder import DualDecoder
from .fusion import EncoderFeatures, EncodersFusion, FusionConfig
from .nn import Module
from .tensor.tensor import Tensor
from .transformer import TransformerConfig, TransformerEncoder

# (ag, dd, trec) for each row of the ablation tables
VARIANTS: dict[str, tuple[bool, bool, bool]] = {
    "unet": (False, False, False),
    "attunet": (True, False, False),
    "dtrunet": (False, True, True),
    "dattunet": (True, True, False),
    "trattunet": (True, False, True),
    "dtrattunet": (True, True, True),
}

DISPLAY_NAMES = {
    "unet": "U-Net",
    "attunet": "AttUnet",
    "dtrunet": "D-TrUnet",
    "dattunet": "D-AttUnet",
    "trattunet": "TrAttUnet",
    "dtrattunet": "D-TrAttUnet",
}


@dataclass(frozen=True)
class ModelVariantConfig:
    ag: bool = True
    dd: bool = True
    trec: bool = True
    base_width: int = 64
    image_size: int = 224
    lesion_classes: int = 1
    in_channels: int = 3
    transformer: TransformerConfig = field(default_factory=TransformerConfig)

    def __post_init__(self):
        if self.lesion_classes not in (1, 3):
            raise ValueError(f"lesion_classes must be 1 or 3, got {self.lesion_classes}")
        if self.image_size % 16:
            raise ValueError(f"image size {self.image_size} must be divisible by 16")
        if self.base_width < 1:
            raise ValueError("base width must be positive")
        if self.trec:
            self.transformer.check_image(self.image_size, self.image_size)
            if self.image_size // self.transformer.patch != self.image_size // 16:
                raise ValueError("transformer grid must match the H/16 fusion resolution (patch size 16)")

    @classmethod
    def from_variant(cls, name: str, **kw) -> "ModelVariantConfig":
        try:
            ag, dd, trec = VARIANTS[name]
        except KeyError:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
        return cls(ag=ag, dd=dd, trec=trec, **kw)

    @property
    def variant(self) -> str:
        for name, flags in VARIANTS.items():
            if flags == (self.ag, self.dd, self.trec):
                return name
        raise ValueError(f"flags {(self.ag, self.dd, self.trec)} match no ablation row")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transformer"]["tap_layers"] = list(self.transformer.tap_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelVariantConfig":
        d = dict(d)
        t = dict(d.pop("transformer"))
        t["tap_layers"] = tuple(t["tap_layers"])
        return cls(transformer=TransformerConfig(**t), **d)

    def with_(self, **kw) -> "ModelVariantConfig":
        return replace(self, **kw)


class SegmentationModel(Module):
    def __init__(self, cfg: ModelVariantConfig):
        super().__init__()
        self.cfg = cfg
        fusion_cfg = FusionConfig(cfg.base_width)
        if cfg.trec:
            self.transformer = TransformerEncoder(cfg.in_channels, cfg.image_size, cfg.transformer)
            tap_ch = cfg.transformer.embed_dim
        else:
            self.transformer = None
            tap_ch = None
        self.fusion = EncodersFusion(cfg.in_channels, fusion_cfg, tap_ch)
        self.decoder = DualDecoder(fusion_cfg.widths, cfg.lesion_classes, attention=cfg.ag, dual=cfg.dd)

    def encode(self, x: Tensor) -> EncoderFeatures:
        taps = self.transformer.encode_multilevel(x) if self.transformer is not None else None
        return self.fusion(x, taps)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor | None]:
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"model expects {self.cfg.in_channels} input channels, got {x.shape[1]}")
        if x.shape[2] != self.cfg.image_size or x.shape[3] != self.cfg.image_size:
            if self.transformer is not None or x.shape[2] % 16 or x.shape[3] % 16:
                raise ValueError(
                    f"input {x.shape[2]}x{x.shape[3]} does not fit model image size {self.cfg.image_size}"
                )
        return self.decoder(self.encode(x))


def build_model(cfg: ModelVariantConfig, seed: int = 0) -> SegmentationModel:
    return SegmentationModel(cfg).initialize(seed)


PREFIXES = ("transformer.", "fusion.", "decoder.lesion.", "decoder.organ.")


def params_count(model_or_cfg) -> "OrderedDict[str, int]":
    """Parameter element counts per top-level prefix plus ``total``."""
    model = model_or_cfg if isinstance(model_or_cfg, Module) else SegmentationModel(model_or_cfg)
    counts: OrderedDict[str, int] = OrderedDict((p, 0) for p in PREFIXES)
    total = 0
    for name, p in model.named_parameters():
        total += p.size
        for prefix in PREFIXES:
            if name.startswith(prefix):
                counts[prefix] += p.size
                break
    counts["total"] = total
    return counts
