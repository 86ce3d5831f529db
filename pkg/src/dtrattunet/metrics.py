"""Segmentation metrics: micro F1/IoU, per-image macro Dice and HD95."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel counts for one class over some scope (an image or a whole split)."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_masks(cls, gt, pred, label: int = 1) -> "ConfusionCounts":
        g = np.asarray(gt) == label
        p = np.asarray(pred) == label
        if g.shape != p.shape:
            raise ValueError(f"mask shapes differ: {g.shape} vs {p.shape}")
        tp = int(np.count_nonzero(g & p))
        fp = int(np.count_nonzero(p & ~g))
        fn = int(np.count_nonzero(g & ~p))
        return cls(tp, fp, fn, g.size - tp - fp - fn)


def f1_micro(counts: ConfusionCounts) -> float:
    den = 2 * counts.tp + counts.fp + counts.fn
    return 100.0 * 2 * counts.tp / den if den else 0.0


def iou(counts: ConfusionCounts) -> float:
    den = counts.tp + counts.fp + counts.fn
    return 100.0 * counts.tp / den if den else 0.0


def dice_image(counts: ConfusionCounts) -> float:
    den = 2 * counts.tp + counts.fp + counts.fn
    # nothing to find and nothing predicted counts as a perfect image
    return 100.0 * 2 * counts.tp / den if den else 100.0


def dice_macro(per_image) -> float:
    per_image = list(per_image)
    if not per_image:
        return 0.0
    return float(np.mean([dice_image(c) for c in per_image]))


def _directed_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    # distance from every pixel to the nearest foreground pixel of dst
    dist = ndimage.distance_transform_edt(~dst)
    return dist[src]


def hd95(gt, pred) -> float | None:
    """95th percentile of the pooled nearest-neighbour distances, both directions.

    Returns 0.0 when both masks are empty and None (undefined) when exactly
    one is.
    """
    g = np.asarray(gt).astype(bool)
    p = np.asarray(pred).astype(bool)
    if g.shape != p.shape:
        raise ValueError(f"mask shapes differ: {g.shape} vs {p.shape}")
    g_any, p_any = g.any(), p.any()
    if not g_any and not p_any:
        return 0.0
    if not g_any or not p_any:
        return None
    d = np.concatenate([_directed_distances(g, p), _directed_distances(p, g)])
    return float(np.percentile(d, 95))


@dataclass
class ClassScores:
    f1: float
    dice: float
    iou: float
    hd95: float | None
    hd95_undefined: int


def class_scores(gts, preds, label: int = 1) -> ClassScores:
    """Scores for one class over a list of (gt, pred) image pairs."""
    per_image = [ConfusionCounts.from_masks(g, p, label) for g, p in zip(gts, preds)]
    pooled = sum(per_image, ConfusionCounts())
    hds = [hd95(np.asarray(g) == label, np.asarray(p) == label) for g, p in zip(gts, preds)]
    defined = [h for h in hds if h is not None]
    return ClassScores(
        f1=f1_micro(pooled),
        dice=dice_macro(per_image),
        iou=iou(pooled),
        hd95=float(np.mean(defined)) if defined else None,
        hd95_undefined=len(hds) - len(defined),
    )


@dataclass
class MetricsReport:
    """Per-class scores keyed by a label such as ``lesion.1`` or ``organ.1``."""

    samples: int
    classes: dict[str, ClassScores] = field(default_factory=dict)

    def mean(self, metric: str, prefix: str = "lesion") -> float | None:
        vals = [getattr(s, metric) for k, s in self.classes.items() if k.startswith(prefix + ".")]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self) -> dict[str, object]:
        out: dict[str, object] = {"samples": self.samples}
        for key, s in self.classes.items():
            out[f"{key}.f1"] = s.f1
            out[f"{key}.dice"] = s.dice
            out[f"{key}.iou"] = s.iou
            out[f"{key}.hd95"] = s.hd95
            out[f"{key}.hd95_undefined"] = s.hd95_undefined
        for prefix in sorted({k.split(".")[0] for k in self.classes}):
            for metric in ("f1", "dice", "iou", "hd95"):
                out[f"mean.{prefix}.{metric}"] = self.mean(metric, prefix)
        return out

    def to_lines(self) -> list[str]:
        def fmt(v):
            if v is None:
                return "undefined"
            if isinstance(v, float):
                return f"{v:.6f}"
            return str(v)

        return [f"{k}={fmt(v)}" for k, v in sorted(self.to_dict().items())]

    def to_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


def segmentation_report(lesion_gt, lesion_pred, lesion_classes: int, organ_gt=None, organ_pred=None) -> MetricsReport:
    labels = [1] if lesion_classes == 1 else list(range(1, lesion_classes))
    report = MetricsReport(samples=len(lesion_gt))
    for label in labels:
        report.classes[f"lesion.{label}"] = class_scores(lesion_gt, lesion_pred, label)
    if organ_pred is not None:
        report.classes["organ.1"] = class_scores(organ_gt, organ_pred, 1)
    return report
