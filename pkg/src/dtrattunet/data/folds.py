"""Seeded k-fold assignment."""

from __future__ import annotations

import numpy as np

from ..tensor.rng import stream_rng


def kfold_split(n: int, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index for each of ``n`` items: seeded shuffle, then round-robin."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} folds")
    perm = stream_rng(seed, "kfold").permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def fold_members(folds: np.ndarray, fold: int) -> tuple[np.ndarray, np.ndarray]:
    """(train indices, held-out indices) for one fold."""
    folds = np.asarray(folds)
    return np.flatnonzero(folds != fold), np.flatnonzero(folds == fold)
