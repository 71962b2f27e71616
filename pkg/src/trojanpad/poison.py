"""Dataset splitting, training-set poisoning, and the manifest format.

Poisoning selects a seeded fraction of eligible train-split examples,
embeds the trigger, and flips their label to the attack target. Manifest
transformations are pure: they return new manifests and never touch
validation or test records.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .images import (
    SAFE_PAD,
    UNSAFE_ZONE,
    LABELS,
    load_png,
    round_half_away,
    save_png,
    to_uint8,
)
from .scenegen import LabeledExample, sample_scene_params
from .trigger import TriggerSpec, embed_trigger


SPLITS = ("train", "val", "test")
SOURCE_FILTERS = ("safe_pad_only", "any")
MANIFEST_NAME = "manifest.tsv"
_MANIFEST_MAGIC = "# trojanpad-manifest v1"


class ManifestError(ValueError):
    """Invalid manifest structure, split, or poison configuration."""


@dataclass(frozen=True)
class PoisonConfig:
    fraction: float = 0.30
    trigger: TriggerSpec = field(default_factory=TriggerSpec)
    target_label: str = UNSAFE_ZONE
    source_label_filter: str = "safe_pad_only"
    seed: int = 0

    def validate(self) -> "PoisonConfig":
        if not 0.0 <= self.fraction <= 1.0:
            raise ManifestError(f"fraction {self.fraction} outside [0, 1]")
        if self.target_label not in LABELS:
            raise ManifestError(f"unknown target label {self.target_label!r}")
        if self.source_label_filter not in SOURCE_FILTERS:
            raise ManifestError(
                f"unknown source_label_filter {self.source_label_filter!r}"
            )
        self.trigger.validate()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["trigger"] = dataclasses.asdict(self.trigger)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonConfig":
        t = d.get("trigger", {})
        pos = t.get("position", "pad_center")
        if isinstance(pos, list):
            pos = tuple(pos)
        trigger = TriggerSpec(
            cells=t.get("cells", 5),
            cell_px=t.get("cell_px", 2),
            position=pos,
            colors=tuple(t.get("colors", (0.0, 1.0))),
            alpha=t.get("alpha", 1.0),
        )
        return cls(
            fraction=d.get("fraction", 0.30),
            trigger=trigger,
            target_label=d.get("target_label", UNSAFE_ZONE),
            source_label_filter=d.get("source_label_filter", "safe_pad_only"),
            seed=d.get("seed", 0),
        ).validate()


@dataclass
class DatasetManifest:
    examples: list[LabeledExample]
    split_ratios: tuple[float, float, float] = (0.60, 0.20, 0.20)
    poison_config: PoisonConfig | None = None

    def sorted_examples(self) -> list[LabeledExample]:
        return sorted(self.examples, key=lambda e: e.example_id)

    def by_split(self, split: str) -> list[LabeledExample]:
        return [e for e in self.examples if e.split == split]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for ex in self.sorted_examples():
            rec = f"{ex.example_id}\t{ex.label}\t{ex.split}\t{int(ex.poisoned)}\t{ex.scene_seed}\n"
            h.update(rec.encode())
            h.update(to_uint8(ex.image).tobytes())
        return h.hexdigest()

    def validate_splits(self) -> None:
        tags = {e.split for e in self.examples}
        if not tags <= set(SPLITS):
            raise ManifestError(f"unknown split tags: {tags - set(SPLITS)}")
        ids = [e.example_id for e in self.examples]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate example ids in manifest")


def scene_pad_center(example: LabeledExample) -> tuple[float, float]:
    """Recover the pad center of a generated scene from its seed.

    The geometry draws precede the label-dependent draws, and a horizontal
    or vertical flip mirrors the coordinate.
    """
    size = example.image.shape[0]
    params = sample_scene_params(example.label, example.scene_seed, size=size)
    cx, cy = params.pad_center
    if params.flip == "horizontal":
        cx = (size - 1) - cx
    elif params.flip == "vertical":
        cy = (size - 1) - cy
    return cx, cy


def split_dataset(
    examples: list[LabeledExample],
    ratios: tuple[float, float, float] = (0.60, 0.20, 0.20),
    seed: int = 0,
) -> DatasetManifest:
    """Stratified seeded shuffle, then contiguous train/val/test assignment."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ManifestError(f"split ratios {ratios} do not sum to 1")
    n = len(examples)
    if n < 3:
        raise ManifestError(f"need at least 3 examples to split, got {n}")
    n_train = round_half_away(ratios[0] * n)
    n_val = round_half_away(ratios[1] * n)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ManifestError(f"degenerate split sizes ({n_train}, {n_val}, {n_test})")

    rng = np.random.default_rng(seed)
    ordered: list[tuple[float, str, LabeledExample]] = []
    for label in sorted({e.label for e in examples}):
        group = [e for e in examples if e.label == label]
        perm = rng.permutation(len(group))
        # Spreading each class uniformly over [0, 1) keeps every contiguous
        # block near the global class balance.
        for pos, idx in enumerate(perm):
            ordered.append(((pos + 0.5) / len(group), label, group[idx]))
    ordered.sort(key=lambda t: (t[0], t[1]))

    out = []
    for i, (_, _, ex) in enumerate(ordered):
        copy = dataclasses.replace(ex)
        copy.split = "train" if i < n_train else "val" if i < n_train + n_val else "test"
        out.append(copy)
    return DatasetManifest(examples=out, split_ratios=tuple(ratios))


def poison_dataset(manifest: DatasetManifest, config: PoisonConfig) -> DatasetManifest:
    """Poison round(fraction * eligible) train examples; leave the rest alone."""
    config.validate()
    manifest.validate_splits()
    eligible = [
        e
        for e in manifest.examples
        if e.split == "train"
        and (config.source_label_filter == "any" or e.label == SAFE_PAD)
    ]
    k = round_half_away(config.fraction * len(eligible))
    if config.fraction > 0 and k < 1:
        warnings.warn(
            f"fraction {config.fraction} of {len(eligible)} eligible examples "
            "rounds to zero; nothing poisoned",
            stacklevel=2,
        )

    rng = np.random.default_rng(config.seed)
    chosen_ids: set[str] = set()
    if k > 0:
        idx = rng.choice(len(eligible), size=k, replace=False)
        chosen_ids = {eligible[i].example_id for i in idx}

    # Embed first so a footprint violation aborts before any record changes.
    poisoned_images = {}
    for ex in manifest.examples:
        if ex.example_id in chosen_ids:
            poisoned_images[ex.example_id] = embed_trigger(
                ex.image, config.trigger, pad_center=scene_pad_center(ex)
            )

    out = []
    for ex in manifest.examples:
        copy = dataclasses.replace(ex)
        if ex.example_id in chosen_ids:
            copy.image = poisoned_images[ex.example_id]
            copy.label = config.target_label
            copy.poisoned = True
        out.append(copy)
    return DatasetManifest(
        examples=out,
        split_ratios=manifest.split_ratios,
        poison_config=config,
    )


def build_triggered_testset(
    manifest: DatasetManifest, trigger: TriggerSpec
) -> list[LabeledExample]:
    """Trigger-embedded copies of the test split, ground-truth labels kept."""
    test = manifest.by_split("test")
    if not test:
        raise ManifestError("manifest has no test split")
    out = []
    for ex in test:
        copy = dataclasses.replace(ex)
        copy.image = embed_trigger(ex.image, trigger, pad_center=scene_pad_center(ex))
        copy.example_id = f"{ex.example_id}-trig"
        copy.source_id = ex.example_id
        out.append(copy)
    return out


def save_manifest(manifest: DatasetManifest, out_dir: str | Path) -> Path:
    """Write PNGs plus the line-delimited manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for ex in manifest.examples:
        rel = f"images/{ex.example_id}.png"
        save_png(ex.image, out_dir / rel)
        ex.path = rel

    pc = manifest.poison_config
    lines = [
        _MANIFEST_MAGIC,
        f"# tool_version: {__version__}",
        f"# split_ratios: {json.dumps(list(manifest.split_ratios))}",
        f"# poison_config: {json.dumps(pc.to_dict()) if pc else 'none'}",
        f"# content_hash: {manifest.content_hash()}",
    ]
    for ex in manifest.sorted_examples():
        lines.append(
            f"{ex.example_id}\t{ex.path}\t{ex.label}\t{ex.split}"
            f"\t{int(ex.poisoned)}\t{ex.scene_seed}"
        )
    path = out_dir / MANIFEST_NAME
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(out_dir: str | Path) -> DatasetManifest:
    out_dir = Path(out_dir)
    path = out_dir / MANIFEST_NAME
    if not path.is_file():
        raise ManifestError(f"no {MANIFEST_NAME} in {out_dir}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _MANIFEST_MAGIC:
        raise ManifestError(f"{path} is not a trojanpad manifest")

    header: dict[str, str] = {}
    records = []
    for line in lines[1:]:
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            header[key] = value
        elif line.strip():
            records.append(line.split("\t"))

    ratios = tuple(json.loads(header.get("split_ratios", "[0.6, 0.2, 0.2]")))
    pc_raw = header.get("poison_config", "none")
    poison_config = None if pc_raw == "none" else PoisonConfig.from_dict(json.loads(pc_raw))

    examples = []
    for rec in records:
        if len(rec) != 6:
            raise ManifestError(f"malformed manifest record: {rec}")
        ex_id, rel, label, split, poisoned, scene_seed = rec
        examples.append(
            LabeledExample(
                example_id=ex_id,
                image=load_png(out_dir / rel),
                label=label,
                scene_seed=int(scene_seed),
                poisoned=bool(int(poisoned)),
                split=split,
                path=rel,
            )
        )
    manifest = DatasetManifest(
        examples=examples, split_ratios=ratios, poison_config=poison_config
    )
    stored = header.get("content_hash")
    if stored and stored != manifest.content_hash():
        raise ManifestError(f"content hash mismatch in {path}")
    return manifest
