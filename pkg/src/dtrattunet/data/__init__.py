"""Synthetic data, PGM/PPM files, augmentation, folds and batching."""

from .augment import AugmentationConfig, AugmentDraw, apply_draw, augment
from .folds import fold_members, kfold_split
from .loader import Batch, batch_iter, collate
from .manifest import (
    MANIFEST_HEADER,
    DatasetManifest,
    ManifestRecord,
    SegmentationSample,
    read_manifest,
    stack_channels,
)
from .pgm import PNMFormatError, read_pgm, read_ppm, write_pgm, write_ppm
from .synthetic import generate_samples, generate_synthetic, make_sample

__all__ = [
    "MANIFEST_HEADER",
    "AugmentDraw",
    "AugmentationConfig",
    "Batch",
    "DatasetManifest",
    "ManifestRecord",
    "PNMFormatError",
    "SegmentationSample",
    "apply_draw",
    "augment",
    "batch_iter",
    "collate",
    "fold_members",
    "generate_samples",
    "generate_synthetic",
    "kfold_split",
    "make_sample",
    "read_manifest",
    "read_pgm",
    "read_ppm",
    "stack_channels",
    "write_pgm",
    "write_ppm",
]
