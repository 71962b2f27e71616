"""Manifest-driven training entry point and history serialization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..poison import DatasetManifest, ManifestError
from .classifier import ConvNetClassifier


@dataclass(frozen=True)
class TrainConfig:
    stage1_epochs: int = 30
    stage2_epochs: int = 30
    lr_stage1: float = 1e-2
    lr_stage2: float = 1e-3
    batch_size: int = 32
    momentum: float = 0.9
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ValueError("both stages need at least one epoch")
        if self.lr_stage1 <= 0 or self.lr_stage2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        return self


def split_arrays(manifest: DatasetManifest, split: str):
    examples = manifest.by_split(split)
    if not examples:
        raise ManifestError(f"manifest has no {split!r} split")
    X = np.stack([e.image for e in examples])
    y = np.array([e.label for e in examples])
    return X, y


def train(manifest: DatasetManifest, config: TrainConfig) -> ConvNetClassifier:
    """Fit the two-stage classifier on a split manifest; history on .history_."""
    config.validate()
    X_train, y_train = split_arrays(manifest, "train")
    X_val, y_val = split_arrays(manifest, "val")
    clf = ConvNetClassifier(
        image_size=X_train.shape[1],
        stage1_epochs=config.stage1_epochs,
        stage2_epochs=config.stage2_epochs,
        lr_stage1=config.lr_stage1,
        lr_stage2=config.lr_stage2,
        batch_size=config.batch_size,
        momentum=config.momentum,
        seed=config.seed,
    )
    return clf.fit(X_train, y_train, X_val=X_val, y_val=y_val)


HISTORY_FIELDS = ("epoch", "stage", "train_loss", "train_acc", "val_loss", "val_acc")


def save_history(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in HISTORY_FIELDS})
