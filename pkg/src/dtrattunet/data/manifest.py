"""Samples and the tab-separated dataset manifest."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pgm import read_pgm

MANIFEST_HEADER = "dtrattunet-manifest v1"
MANIFEST_NAME = "manifest.tsv"


@dataclass
class SegmentationSample:
    id: str
    image: np.ndarray  # (C, H, W) float32 in [0, 1]
    lesion: np.ndarray  # (H, W) class indices
    organ: np.ndarray  # (H, W) in {0, 1}

    def __post_init__(self):
        if self.image.ndim == 2:
            self.image = self.image[None]
        if self.image.shape[1:] != self.lesion.shape or self.lesion.shape != self.organ.shape:
            raise ValueError(
                f"sample {self.id}: image {self.image.shape} and masks {self.lesion.shape}/{self.organ.shape} disagree"
            )


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: str
    lesion: str
    organ: str
    fold: int


@dataclass
class DatasetManifest:
    root: Path
    records: list[ManifestRecord] = field(default_factory=list)
    version: str = MANIFEST_HEADER

    @property
    def num_folds(self) -> int:
        return max((r.fold for r in self.records), default=-1) + 1

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def write(self, path: str | os.PathLike | None = None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        lines = [self.version]
        for r in self.records:
            lines.append("\t".join([r.id, r.image, r.lesion, r.organ, str(r.fold)]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def load_sample(self, record: ManifestRecord) -> SegmentationSample:
        return SegmentationSample(
            record.id,
            read_pgm(self.resolve(record.image), "image"),
            read_pgm(self.resolve(record.lesion), "mask"),
            read_pgm(self.resolve(record.organ), "mask"),
        )

    def split(self, fold: int | None) -> tuple[list[ManifestRecord], list[ManifestRecord]]:
        """(train records, held-out records); ``fold=None`` keeps everything for training."""
        if fold is None:
            return list(self.records), []
        if not 0 <= fold < max(self.num_folds, 1):
            raise ValueError(f"fold {fold} outside [0, {self.num_folds})")
        train = [r for r in self.records if r.fold != fold]
        held = [r for r in self.records if r.fold == fold]
        return train, held


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ValueError(f"{path}: missing manifest header {MANIFEST_HEADER!r}")
    manifest = DatasetManifest(path.parent)
    ids = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        rid, image, lesion, organ, fold = parts
        try:
            fold_i = int(fold)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: fold {fold!r} is not an integer") from None
        if fold_i < 0:
            raise ValueError(f"{path}:{lineno}: negative fold index")
        if rid in ids:
            raise ValueError(f"{path}:{lineno}: duplicate id {rid!r}")
        ids.add(rid)
        for rel in (image, lesion, organ):
            if not (manifest.root / rel).is_file():
                raise FileNotFoundError(f"{path}:{lineno}: missing file {rel}")
        manifest.records.append(ManifestRecord(rid, image, lesion, organ, fold_i))
    return manifest


def stack_channels(image: np.ndarray, channels: int) -> np.ndarray:
    """Replicate a one-channel (1, H, W) image to ``channels`` planes."""
    if image.shape[0] == channels:
        return image
    if image.shape[0] != 1:
        raise ValueError(f"cannot map {image.shape[0]} image channels onto {channels}")
    return np.repeat(image, channels, axis=0)
