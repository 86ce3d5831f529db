"""Training loop, evaluation and prediction export."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .checkpoint import load_checkpoint, save_checkpoint
from .data.augment import AugmentationConfig
from .data.loader import Batch, batch_iter
from .data.manifest import DatasetManifest, SegmentationSample, stack_channels
from .data.pgm import quantize, read_pgm, write_pgm, write_ppm
from .losses import LossWeights, hybrid_loss
from .metrics import MetricsReport, segmentation_report
from .model import ModelVariantConfig, SegmentationModel, build_model
from .optim import Adam
from .tensor.tensor import NonFiniteError, Tensor, no_grad

log = logging.getLogger(__name__)

RUN_LOG = "run.log"
BEST_CKPT = "best.ckpt"
FINAL_CKPT = "final.ckpt"


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch: int = 8
    lr: float = 1e-3
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    out_dir: str | None = None
    eval_batch: int = 16

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ValueError("learning rate must be positive")
        if self.batch < 1:
            raise ValueError("batch size must be >= 1")

    @classmethod
    def paper_recipe(cls, **kw) -> "TrainConfig":
        return cls(epochs=100, batch=16, lr=0.1, **kw)


@dataclass
class TrainResult:
    log_lines: list[str]
    best_val_dice: float
    best_epoch: int
    final_report: MetricsReport | None = None


def load_samples(manifest: DatasetManifest, fold: int | None) -> tuple[list[SegmentationSample], list[SegmentationSample]]:
    train_recs, val_recs = manifest.split(fold)
    return [manifest.load_sample(r) for r in train_recs], [manifest.load_sample(r) for r in val_recs]


def train_step(model: SegmentationModel, opt: Adam, batch: Batch, weights: LossWeights) -> float:
    model.train()
    lesion, organ = model(Tensor(batch.images))
    loss = hybrid_loss(lesion, organ, batch.lesion, batch.organ if organ is not None else None, weights)
    opt.zero_grad()
    loss.backward()
    opt.step()
    return float(loss.data)


def lesion_mask(logits: np.ndarray) -> np.ndarray:
    """Class indices from (N, C, H, W) logits: threshold 0.5 on the sigmoid, or argmax."""
    if logits.shape[1] == 1:
        return (logits[:, 0] > 0).astype(np.uint8)
    return logits.argmax(axis=1).astype(np.uint8)


def predict_arrays(model: SegmentationModel, images: np.ndarray, batch: int = 16) -> tuple[np.ndarray, np.ndarray | None]:
    model.eval()
    les, org = [], []
    with no_grad():
        for start in range(0, len(images), batch):
            lesion, organ = model(Tensor(np.ascontiguousarray(images[start : start + batch], dtype=np.float32)))
            les.append(lesion_mask(lesion.data))
            if organ is not None:
                org.append(lesion_mask(organ.data))
    return np.concatenate(les), (np.concatenate(org) if org else None)


def evaluate_samples(model: SegmentationModel, samples: Sequence[SegmentationSample], batch: int = 16) -> MetricsReport:
    channels = model.cfg.in_channels
    images = np.stack([stack_channels(s.image, channels) for s in samples])
    lesion_pred, organ_pred = predict_arrays(model, images, batch)
    return segmentation_report(
        [s.lesion for s in samples],
        list(lesion_pred),
        model.cfg.lesion_classes,
        [s.organ for s in samples] if organ_pred is not None else None,
        list(organ_pred) if organ_pred is not None else None,
    )


def format_log_line(epoch: int, train_loss: float, val_dice: float) -> str:
    return f"epoch={epoch} train_loss={train_loss:.6f} val_dice={val_dice:.6f}"


def train(
    model_cfg: ModelVariantConfig,
    cfg: TrainConfig,
    train_samples: Sequence[SegmentationSample],
    val_samples: Sequence[SegmentationSample],
    model: SegmentationModel | None = None,
) -> TrainResult:
    """Adam on the hybrid loss; keeps the checkpoint with the best validation lesion Dice."""
    if not train_samples:
        raise ValueError("empty training split")
    if not val_samples:
        raise ValueError("empty validation split")
    n_classes = 2 if model_cfg.lesion_classes == 1 else model_cfg.lesion_classes
    if max(int(s.lesion.max()) for s in train_samples) >= n_classes:
        raise ValueError(f"data holds lesion classes beyond the model's {model_cfg.lesion_classes} output(s)")
    out = Path(cfg.out_dir) if cfg.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = build_model(model_cfg, cfg.seed)
    opt = Adam(model.named_parameters(), lr=cfg.lr)
    lines: list[str] = []
    best, best_epoch = -1.0, 0
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        batches = batch_iter(
            train_samples, cfg.batch, train=True, seed=cfg.seed, epoch=epoch,
            aug=cfg.augmentation, channels=model_cfg.in_channels,
        )
        for i, batch in enumerate(batches):
            try:
                loss = train_step(model, opt, batch, cfg.weights)
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch} batch {i}: {exc}") from exc
            if not math.isfinite(loss):
                raise TrainingError(f"epoch {epoch} batch {i}: loss is {loss}")
            total += loss * len(batch.ids)
            count += len(batch.ids)
        report = evaluate_samples(model, val_samples, cfg.eval_batch)
        val_dice = report.mean("dice", "lesion")
        line = format_log_line(epoch, total / count, val_dice)
        lines.append(line)
        log.info(line)
        if out is not None:
            with open(out / RUN_LOG, "a" if epoch > 1 else "w", encoding="utf-8") as fh:
                fh.write(line + "\n")
        if val_dice > best:
            best, best_epoch = val_dice, epoch
            if out is not None:
                save_checkpoint(out / BEST_CKPT, model, epoch, cfg.seed)
    if out is not None:
        save_checkpoint(out / FINAL_CKPT, model, cfg.epochs, cfg.seed, opt.state_tensors())
    return TrainResult(lines, best, best_epoch, report)


def evaluate(checkpoint: str | os.PathLike, samples: Sequence[SegmentationSample], batch: int = 16) -> MetricsReport:
    ck = load_checkpoint(checkpoint)
    classes = 2 if ck.config.lesion_classes == 1 else ck.config.lesion_classes
    if samples and max(int(s.lesion.max()) for s in samples) >= classes:
        raise ValueError("checkpoint lesion classes do not match the data")
    return evaluate_samples(ck.build(), samples, batch)


LESION_COLOURS = {1: (0, 255, 0), 2: (255, 0, 0)}
ORGAN_COLOUR = (0, 0, 255)


def overlay(image: np.ndarray, lesion: np.ndarray, organ: np.ndarray | None = None) -> np.ndarray:
    """Grayscale image as RGB with lesion classes filled and the organ outlined."""
    gray = quantize(image)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    if organ is not None:
        o = organ.astype(bool)
        edge = o & ~ndimage.binary_erosion(o, border_value=0)
        rgb[edge] = ORGAN_COLOUR
    for cls, colour in LESION_COLOURS.items():
        rgb[lesion == cls] = colour
    return rgb


def predict(checkpoint: str | os.PathLike, image_path: str | os.PathLike, out_dir: str | os.PathLike) -> dict[str, Path]:
    ck = load_checkpoint(checkpoint)
    model = ck.build()
    image = read_pgm(image_path, "image")
    h, w = image.shape
    if h % 16 or w % 16:
        raise ValueError(f"image {h}x{w}: extents must be divisible by 16")
    x = stack_channels(image[None], model.cfg.in_channels)[None]
    lesion, organ = predict_arrays(model, x)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    paths = {"lesion": out / f"{stem}_lesion.pgm", "overlay": out / f"{stem}_overlay.ppm"}
    write_pgm(paths["lesion"], lesion[0], "mask")
    if organ is not None:
        paths["organ"] = out / f"{stem}_organ.pgm"
        write_pgm(paths["organ"], organ[0], "mask")
    write_ppm(paths["overlay"], overlay(image, lesion[0], organ[0] if organ is not None else None))
    return paths
