"""Run configuration: one versioned YAML file drives every pipeline stage.

All randomness flows from the master seed through labeled sub-seeds
(scene / split / poison / train), so stages can be rerun independently
yet reproducibly. Parsing then emitting a config is canonical and
byte-stable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .images import UNSAFE_ZONE, derive_seed
from .nn.train import TrainConfig
from .poison import PoisonConfig
from .trigger import NoisePatchSpec, TriggerSpec


CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


@dataclass(frozen=True)
class SceneConfig:
    size: int = 64
    count: int = 2000
    class_balance: float = 0.5

    def validate(self):
        if self.size < 16:
            raise ConfigError(f"scene.size {self.size} too small (min 16)")
        if self.count < 2:
            raise ConfigError(f"scene.count {self.count} must be >= 2")
        if not 0.0 < self.class_balance < 1.0:
            raise ConfigError(f"scene.class_balance {self.class_balance} outside (0,1)")
        return self


@dataclass(frozen=True)
class EvalConfig:
    scan_threshold: float = 0.5
    scan_probe_limit: int = 200
    candidates: tuple = ()

    def validate(self):
        if not 0.0 <= self.scan_threshold <= 1.0:
            raise ConfigError(f"eval.scan_threshold {self.scan_threshold} outside [0,1]")
        if self.scan_probe_limit < 1:
            raise ConfigError("eval.scan_probe_limit must be >= 1")
        return self


def default_candidates() -> tuple:
    """Scan candidates probe several chessboard scales plus noise controls.

    Candidates anchor at a corner, away from the pad: the backdoor response
    survives translation (global average pooling), while an honest model's
    prediction only changes when the patch occludes the pad marking.
    """
    return (
        {"kind": "chessboard", "cells": 5, "cell_px": 2, "position": "top_left"},
        {"kind": "chessboard", "cells": 10, "cell_px": 1, "position": "top_left"},
        {"kind": "chessboard", "cells": 15, "cell_px": 1, "position": "top_left"},
        {"kind": "noise", "size_px": 10, "seed": 1, "position": "top_left"},
        {"kind": "noise", "size_px": 10, "seed": 2, "position": "top_left"},
    )


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    split_ratios: tuple[float, float, float] = (0.60, 0.20, 0.20)
    trigger: dict = field(
        default_factory=lambda: {
            "cells": 5,
            "cell_px": 2,
            "position": "pad_center",
            "colors": (0.0, 1.0),
            "alpha": 1.0,
        }
    )
    poison_fraction: float = 0.30
    target_label: str = UNSAFE_ZONE
    source_label_filter: str = "safe_pad_only"
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=lambda: EvalConfig(candidates=default_candidates()))

    # ---- derived objects -------------------------------------------------

    def seed(self, *labels) -> int:
        return derive_seed(self.master_seed, *labels)

    def trigger_spec(self) -> TriggerSpec:
        t = dict(self.trigger)
        pos = t.get("position", "pad_center")
        if isinstance(pos, list):
            pos = tuple(pos)
        return TriggerSpec(
            cells=int(t.get("cells", 5)),
            cell_px=int(t.get("cell_px", 2)),
            position=pos,
            colors=tuple(t.get("colors", (0.0, 1.0))),
            alpha=float(t.get("alpha", 1.0)),
        ).validate()

    def poison_config(self) -> PoisonConfig:
        return PoisonConfig(
            fraction=self.poison_fraction,
            trigger=self.trigger_spec(),
            target_label=self.target_label,
            source_label_filter=self.source_label_filter,
            seed=self.seed("poison"),
        ).validate()

    def train_config(self, role: str) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed("train", role)).validate()

    def candidate_specs(self) -> list:
        out = []
        for c in self.eval.candidates or default_candidates():
            kind = c.get("kind", "chessboard")
            if kind == "chessboard":
                out.append(
                    TriggerSpec(
                        cells=int(c.get("cells", 5)),
                        cell_px=int(c.get("cell_px", 2)),
                        position=c.get("position", "pad_center"),
                    ).validate()
                )
            elif kind == "noise":
                out.append(
                    NoisePatchSpec(
                        size_px=int(c.get("size_px", 5)),
                        seed=int(c.get("seed", 0)),
                        position=c.get("position", "pad_center"),
                    ).validate()
                )
            else:
                raise ConfigError(f"unknown candidate kind {kind!r}")
        return out

    def validate(self) -> "RunConfig":
        self.scene.validate()
        self.eval.validate()
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split_ratios {self.split_ratios} do not sum to 1")
        self.trigger_spec()
        self.poison_config()
        self.train.validate()
        self.candidate_specs()
        return self

    # ---- (de)serialization ----------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "master_seed": self.master_seed,
            "scene": dataclasses.asdict(self.scene),
            "split_ratios": list(self.split_ratios),
            "trigger": _trigger_dict(self.trigger_spec()),
            "poison": {
                "fraction": self.poison_fraction,
                "target_label": self.target_label,
                "source_label_filter": self.source_label_filter,
            },
            "train": dataclasses.asdict(self.train),
            "eval": {
                "scan_threshold": self.eval.scan_threshold,
                "scan_probe_limit": self.eval.scan_probe_limit,
                "candidates": [dict(c) for c in self.eval.candidates],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a mapping")
        version = d.get("version")
        if version != CONFIG_VERSION:
            raise ConfigError(
                f"config version {version!r} unsupported (expected {CONFIG_VERSION})"
            )
        try:
            scene = SceneConfig(**d.get("scene", {}))
            p = d.get("poison", {})
            train_d = d.get("train", {})
            train_d.pop("seed", None)
            ev = d.get("eval", {})
            cfg = cls(
                master_seed=int(d.get("master_seed", 0)),
                scene=scene,
                split_ratios=tuple(d.get("split_ratios", (0.6, 0.2, 0.2))),
                trigger=d.get("trigger", {}) or cls().trigger,
                poison_fraction=float(p.get("fraction", 0.30)),
                target_label=p.get("target_label", UNSAFE_ZONE),
                source_label_filter=p.get("source_label_filter", "safe_pad_only"),
                train=TrainConfig(**train_d),
                eval=EvalConfig(
                    scan_threshold=float(ev.get("scan_threshold", 0.5)),
                    scan_probe_limit=int(ev.get("scan_probe_limit", 200)),
                    candidates=tuple(ev.get("candidates", default_candidates())),
                ),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc
        return cfg.validate()


def _trigger_dict(spec: TriggerSpec) -> dict:
    pos = spec.position
    return {
        "cells": spec.cells,
        "cell_px": spec.cell_px,
        "position": list(pos) if isinstance(pos, tuple) else pos,
        "colors": [float(c) for c in spec.colors],
        "alpha": float(spec.alpha),
    }


def emit_config(config: RunConfig) -> str:
    """Canonical YAML emission; parse -> emit is byte-stable."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    return RunConfig.from_dict(raw)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(emit_config(config))
