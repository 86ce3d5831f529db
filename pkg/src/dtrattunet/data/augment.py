"""Training-time augmentation: one shared rotation and flips for image and masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .manifest import SegmentationSample


@dataclass(frozen=True)
class AugmentationConfig:
    p_rotate: float = 0.10
    max_angle: float = 35.0
    p_hflip: float = 0.20
    p_vflip: float = 0.20

    def __post_init__(self):
        for name in ("p_rotate", "p_hflip", "p_vflip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.max_angle < 0:
            raise ValueError("max_angle must be non-negative")


@dataclass(frozen=True)
class AugmentDraw:
    angle: float | None
    hflip: bool
    vflip: bool

    @classmethod
    def sample(cls, cfg: AugmentationConfig, rng: np.random.Generator) -> "AugmentDraw":
        # always consume the same number of draws so streams stay aligned
        u = rng.random(3)
        angle = rng.uniform(-cfg.max_angle, cfg.max_angle)
        return cls(angle if u[0] < cfg.p_rotate else None, bool(u[1] < cfg.p_hflip), bool(u[2] < cfg.p_vflip))


def rotate_plane(a: np.ndarray, angle: float, order: int) -> np.ndarray:
    """Rotate the last two axes about the image centre; outside pixels become 0."""
    return ndimage.rotate(a, angle, axes=(-1, -2), reshape=False, order=order, mode="constant", cval=0)


def apply_draw(sample: SegmentationSample, d: AugmentDraw) -> SegmentationSample:
    image, lesion, organ = sample.image, sample.lesion, sample.organ
    if d.angle is not None and d.angle != 0.0:
        image = rotate_plane(image, d.angle, order=1).clip(0.0, 1.0).astype(sample.image.dtype)
        lesion = rotate_plane(lesion, d.angle, order=0)
        organ = rotate_plane(organ, d.angle, order=0)
    if d.hflip:
        image, lesion, organ = image[..., ::-1], lesion[:, ::-1], organ[:, ::-1]
    if d.vflip:
        image, lesion, organ = image[..., ::-1, :], lesion[::-1], organ[::-1]
    return SegmentationSample(
        sample.id, np.ascontiguousarray(image), np.ascontiguousarray(lesion), np.ascontiguousarray(organ)
    )


def augment(sample: SegmentationSample, cfg: AugmentationConfig, rng: np.random.Generator) -> SegmentationSample:
    return apply_draw(sample, AugmentDraw.sample(cfg, rng))
