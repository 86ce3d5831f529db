"""Batching with seeded shuffling and per-sample augmentation streams."""

from __future__ import annotations

from typing import Iterator, NamedTuple, Sequence

import numpy as np

from ..tensor.rng import stream_rng
from .augment import AugmentationConfig, augment
from .manifest import SegmentationSample, stack_channels


class Batch(NamedTuple):
    ids: list[str]
    images: np.ndarray  # (B, C, H, W) float32
    lesion: np.ndarray  # (B, H, W) int64
    organ: np.ndarray  # (B, H, W) int64


def collate(samples: Sequence[SegmentationSample], channels: int) -> Batch:
    return Batch(
        [s.id for s in samples],
        np.stack([stack_channels(s.image, channels) for s in samples]).astype(np.float32),
        np.stack([s.lesion for s in samples]).astype(np.int64),
        np.stack([s.organ for s in samples]).astype(np.int64),
    )


def batch_iter(
    samples: Sequence[SegmentationSample],
    batch_size: int,
    *,
    train: bool,
    seed: int = 0,
    epoch: int = 0,
    aug: AugmentationConfig | None = None,
    channels: int = 3,
) -> Iterator[Batch]:
    """Yield batches; the final short batch is kept.

    Training mode shuffles with stream ``shuffle/<epoch>`` and augments each
    sample with stream ``augment/<epoch>/<id>``.  Evaluation mode keeps the
    given order and never augments.
    """
    if not samples:
        raise ValueError("cannot iterate over an empty split")
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    order = np.arange(len(samples))
    if train:
        order = stream_rng(seed, f"shuffle/{epoch}").permutation(len(samples))
        aug = aug or AugmentationConfig()
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        if train:
            chunk = [augment(s, aug, stream_rng(seed, f"augment/{epoch}/{s.id}")) for s in chunk]
        yield collate(chunk, channels)
