"""Synthetic organ/lesion images with exact ground truth.

Each sample has a smooth textured background, an organ made of one or two
ellipses in its own intensity band, and up to four brighter lesion blobs
clipped to the organ.  In multi-class mode blobs are either diffuse
(class 1, GGO-like) or dense (class 2, consolidation-like).
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..tensor.rng import stream_rng
from .folds import kfold_split
from .manifest import DatasetManifest, ManifestRecord, SegmentationSample
from .pgm import quantize, write_pgm

NOISE_SIGMA = 0.05
P_LESION_FREE = 0.2
MAX_LESIONS = 4


def _ellipse(yy, xx, cy, cx, ry, rx, theta):
    c, s = np.cos(theta), np.sin(theta)
    dy, dx = yy - cy, xx - cx
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    return u * u + v * v <= 1.0


def _texture(rng, yy, xx, size, amp, waves=3, max_freq=3.0):
    out = np.zeros_like(yy)
    for _ in range(waves):
        fy, fx = rng.uniform(-max_freq, max_freq, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        out += np.sin(2 * np.pi * (fy * yy + fx * xx) / size + phase)
    return amp * out / waves


def make_sample(sample_id: str, size: int, classes: str, rng: np.random.Generator) -> SegmentationSample:
    if classes not in ("binary", "multi"):
        raise ValueError(f"classes must be 'binary' or 'multi', got {classes!r}")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    image = 0.15 + _texture(rng, yy, xx, size, 0.06)

    organ = np.zeros((size, size), dtype=bool)
    for _ in range(rng.integers(1, 3)):
        cy, cx = rng.uniform(0.35 * size, 0.65 * size, size=2)
        ry, rx = rng.uniform(0.18 * size, 0.3 * size, size=2)
        organ |= _ellipse(yy, xx, cy, cx, ry, rx, rng.uniform(0, np.pi))
    image = np.where(organ, 0.45 + _texture(rng, yy, xx, size, 0.04, max_freq=6.0), image)

    lesion = np.zeros((size, size), dtype=np.uint8)
    n_lesions = 0 if rng.random() < P_LESION_FREE else int(rng.integers(1, MAX_LESIONS + 1))
    organ_pix = np.argwhere(organ)
    organ_area = len(organ_pix)
    for _ in range(n_lesions):
        cy, cx = organ_pix[rng.integers(len(organ_pix))]
        ry, rx = rng.uniform(0.05 * size, 0.11 * size, size=2)
        blob = _ellipse(yy, xx, cy, cx, ry, rx, rng.uniform(0, np.pi)) & organ
        label = 1 if classes == "binary" else int(rng.integers(1, 3))
        trial = lesion.copy()
        trial[blob] = label
        if np.count_nonzero(trial) >= organ_area:
            continue
        lesion = trial
    if classes == "binary":
        image = np.where(lesion == 1, 0.8, image)
    else:
        ggo = 0.68 + _texture(rng, yy, xx, size, 0.05, waves=4, max_freq=10.0)
        image = np.where(lesion == 1, ggo, image)
        image = np.where(lesion == 2, 0.93, image)

    image = image + rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    # keep the in-memory image identical to what a PGM round-trip yields
    image = quantize(image).astype(np.float32) / np.float32(255)
    return SegmentationSample(sample_id, image.astype(np.float32), lesion, organ.astype(np.uint8))


def sample_id(i: int) -> str:
    return f"s{i:05d}"


def generate_samples(n: int, size: int, classes: str = "binary", seed: int = 0) -> list[SegmentationSample]:
    if size % 16:
        raise ValueError(f"image size {size} must be divisible by 16")
    if n < 1:
        raise ValueError("need at least one sample")
    return [make_sample(sample_id(i), size, classes, stream_rng(seed, f"synthetic/{i}")) for i in range(n)]


def generate_synthetic(
    out_dir: str | os.PathLike, n: int, size: int, classes: str = "binary", seed: int = 0, k: int = 5
) -> DatasetManifest:
    """Write ``n`` samples as PGM files plus ``manifest.tsv`` under ``out_dir``."""
    root = Path(out_dir)
    samples = generate_samples(n, size, classes, seed)
    folds = kfold_split(n, k, seed) if n >= k else np.zeros(n, dtype=np.int64)
    for sub in ("images", "lesion", "organ"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(root)
    for s, fold in zip(samples, folds):
        rec = ManifestRecord(s.id, f"images/{s.id}.pgm", f"lesion/{s.id}.pgm", f"organ/{s.id}.pgm", int(fold))
        write_pgm(root / rec.image, s.image[0], "image")
        write_pgm(root / rec.lesion, s.lesion, "mask")
        write_pgm(root / rec.organ, s.organ, "mask")
        manifest.records.append(rec)
    manifest.write()
    return manifest
