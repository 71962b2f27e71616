"""Procedural landing-pad scene synthesis.

Scenes are flat-shaded primitives with 1-pixel anti-aliasing: a textured
background, a circular landing pad, an optional dark marking (H or ring),
and optional orange obstacles. Safe scenes show an unobstructed marked pad;
unsafe scenes either lack the marking or have an obstacle on the pad.
Everything is a pure function of its seed, so generation parallelizes and
any single example can be regenerated without the rest of the set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .images import (
    DEFAULT_SIZE,
    LABELS,
    SAFE_PAD,
    UNSAFE_ZONE,
    derive_seed,
    round_half_away,
)


MARKINGS = ("h_mark", "circle", "none")
BACKGROUNDS = ("asphalt", "grass", "roof")
FLIPS = ("none", "horizontal", "vertical")

# Unlit palette. Kept strictly inside [0, 1] so the brightness multiplier is
# the only clamp-sensitive step.
_BG_COLORS = {
    "asphalt": (0.35, 0.35, 0.37),
    "grass": (0.18, 0.46, 0.20),
    "roof": (0.46, 0.30, 0.26),
}
_PAD_COLOR = (0.78, 0.78, 0.78)
_MARK_COLOR = (0.08, 0.08, 0.08)
_OBSTACLE_COLOR = (0.85, 0.35, 0.08)
_BG_NOISE = 0.04


class SceneParamError(ValueError):
    """Invalid scene geometry or label/field combination."""


@dataclass(frozen=True)
class SceneParams:
    label: str
    pad_radius_frac: float
    pad_center: tuple[float, float]
    marking: str
    background: str
    brightness: float
    rotation_deg: float
    flip: str
    obstacle_count: int
    rng_seed: int
    size: int = DEFAULT_SIZE

    def validate(self) -> "SceneParams":
        if self.label not in LABELS:
            raise SceneParamError(f"unknown label {self.label!r}")
        if self.marking not in MARKINGS:
            raise SceneParamError(f"unknown marking {self.marking!r}")
        if self.background not in BACKGROUNDS:
            raise SceneParamError(f"unknown background {self.background!r}")
        if self.flip not in FLIPS:
            raise SceneParamError(f"unknown flip {self.flip!r}")
        if not 0.15 <= self.pad_radius_frac <= 0.4:
            raise SceneParamError(
                f"pad_radius_frac {self.pad_radius_frac} outside [0.15, 0.4]"
            )
        if not 0.6 <= self.brightness <= 1.4:
            raise SceneParamError(f"brightness {self.brightness} outside [0.6, 1.4]")
        if not 0.0 <= self.rotation_deg < 360.0:
            raise SceneParamError(f"rotation_deg {self.rotation_deg} outside [0, 360)")
        if self.obstacle_count < 0:
            raise SceneParamError("obstacle_count must be >= 0")
        r = self.pad_radius_frac * self.size
        cx, cy = self.pad_center
        if cx - r < 1 or cy - r < 1 or cx + r > self.size - 1 or cy + r > self.size - 1:
            raise SceneParamError(
                f"pad disc (center={self.pad_center}, radius={r:.1f}) "
                f"extends outside a {self.size}x{self.size} image"
            )
        if self.label == SAFE_PAD and self.marking == "none":
            raise SceneParamError("safe_pad scenes require a pad marking")
        if (
            self.label == UNSAFE_ZONE
            and self.marking != "none"
            and self.obstacle_count < 1
        ):
            raise SceneParamError(
                "unsafe_zone scenes with a marking need at least one obstacle"
            )
        return self

    @property
    def pad_radius_px(self) -> float:
        return self.pad_radius_frac * self.size


@dataclass
class LabeledExample:
    example_id: str
    image: np.ndarray
    label: str
    scene_seed: int
    poisoned: bool = False
    split: str | None = None
    source_id: str | None = None
    path: str | None = None

    def copy(self) -> "LabeledExample":
        out = replace(self)
        out.image = self.image.copy()
        return out


def _coverage_disc(xx, yy, cx, cy, radius):
    d = np.hypot(xx - cx, yy - cy)
    return np.clip(radius + 0.5 - d, 0.0, 1.0)


def _coverage_box(u, v, u0, v0, half_w, half_h):
    # Chebyshev box distance gives a 1px soft edge, good enough for AA.
    d = np.maximum(np.abs(u - u0) - half_w, np.abs(v - v0) - half_h)
    return np.clip(0.5 - d, 0.0, 1.0)


def _blend(img, coverage, color):
    img *= (1.0 - coverage)[..., None]
    img += coverage[..., None] * np.asarray(color)


def _draw_marking(img, xx, yy, params: SceneParams) -> None:
    cx, cy = params.pad_center
    r = params.pad_radius_px
    theta = np.deg2rad(params.rotation_deg)
    u = np.cos(theta) * (xx - cx) + np.sin(theta) * (yy - cy)
    v = -np.sin(theta) * (xx - cx) + np.cos(theta) * (yy - cy)
    if params.marking == "h_mark":
        bar = 0.16 * r
        arm = 0.65 * r
        off = 0.45 * r
        cov = np.maximum(
            _coverage_box(u, v, -off, 0.0, bar, arm),
            _coverage_box(u, v, off, 0.0, bar, arm),
        )
        cov = np.maximum(cov, _coverage_box(u, v, 0.0, 0.0, off, bar))
    else:  # circle: a ring at 0.6r
        d = np.hypot(u, v)
        cov = np.clip(0.5 + 0.1 * r - np.abs(d - 0.6 * r), 0.0, 1.0)
    _blend(img, cov, _MARK_COLOR)


def _obstacle_geometry(params: SceneParams, rng: np.random.Generator):
    """Sample obstacle discs honoring the label semantics.

    Unsafe scenes with a marking get their first obstacle centered on the
    pad; safe scenes keep every obstacle clear of the pad disc.
    """
    size = params.size
    cx, cy = params.pad_center
    pad_r = params.pad_radius_px
    out = []
    for i in range(params.obstacle_count):
        radius = rng.uniform(0.08, 0.15) * size
        must_overlap = params.label == UNSAFE_ZONE and i == 0
        for _ in range(200):
            x = rng.uniform(radius, size - radius)
            y = rng.uniform(radius, size - radius)
            dist = np.hypot(x - cx, y - cy)
            if must_overlap:
                if dist < pad_r * 0.6:
                    break
            elif params.label == SAFE_PAD:
                if dist > pad_r + radius + 2.0:
                    break
            else:
                break
        else:
            # Fall back to a position that trivially satisfies the constraint.
            x, y = (cx, cy) if must_overlap else (radius, radius)
        out.append((x, y, radius))
    return out


def generate_scene(params: SceneParams) -> LabeledExample:
    """Render one labeled scene; deterministic in params."""
    params.validate()
    size = params.size
    rng = np.random.default_rng(params.rng_seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = _BG_COLORS[params.background]
    img += rng.uniform(-_BG_NOISE, _BG_NOISE, size=img.shape)
    np.clip(img, 0.02, 0.96, out=img)

    cx, cy = params.pad_center
    _blend(img, _coverage_disc(xx, yy, cx, cy, params.pad_radius_px), _PAD_COLOR)
    if params.marking != "none":
        _draw_marking(img, xx, yy, params)
    for ox, oy, orad in _obstacle_geometry(params, rng):
        _blend(img, _coverage_disc(xx, yy, ox, oy, orad), _OBSTACLE_COLOR)

    # Lighting last: the lit render is exactly clamp(unlit * brightness).
    np.clip(img * params.brightness, 0.0, 1.0, out=img)

    if params.flip == "horizontal":
        img = img[:, ::-1, :].copy()
    elif params.flip == "vertical":
        img = img[::-1, :, :].copy()

    return LabeledExample(
        example_id=f"scene-{params.rng_seed:016x}",
        image=img,
        label=params.label,
        scene_seed=params.rng_seed,
    )


def sample_scene_params(label: str, seed: int, size: int = DEFAULT_SIZE) -> SceneParams:
    """Draw a valid SceneParams for the given label from one seed."""
    rng = np.random.default_rng(seed)
    radius_frac = rng.uniform(0.18, 0.32)
    r = radius_frac * size
    cx = rng.uniform(r + 1.5, size - 1.5 - r)
    cy = rng.uniform(r + 1.5, size - 1.5 - r)
    if label == SAFE_PAD:
        marking = "h_mark" if rng.random() < 0.6 else "circle"
        obstacles = int(rng.integers(0, 3))
    else:
        if rng.random() < 0.5:
            marking = "none"
            obstacles = int(rng.integers(0, 3))
        else:
            marking = "h_mark" if rng.random() < 0.6 else "circle"
            obstacles = int(rng.integers(1, 4))
    return SceneParams(
        label=label,
        pad_radius_frac=radius_frac,
        pad_center=(cx, cy),
        marking=marking,
        background=BACKGROUNDS[int(rng.integers(0, len(BACKGROUNDS)))],
        brightness=rng.uniform(0.6, 1.4),
        rotation_deg=rng.uniform(0.0, 360.0),
        flip=FLIPS[int(rng.integers(0, len(FLIPS)))],
        obstacle_count=obstacles,
        rng_seed=seed,
        size=size,
    )


def apply_augment(
    image: np.ndarray,
    rot_quarters: int,
    flip: str,
    color_scale: tuple[float, float, float],
    small_angle_deg: float = 0.0,
) -> np.ndarray:
    """Deterministic augmentation core: rotation, flip, per-channel scale."""
    out = np.rot90(image, k=rot_quarters % 4, axes=(0, 1))
    if small_angle_deg:
        out = ndimage.rotate(
            out, small_angle_deg, axes=(1, 0), reshape=False, order=1, mode="nearest"
        )
    if flip == "horizontal":
        out = out[:, ::-1, :]
    elif flip == "vertical":
        out = out[::-1, :, :]
    out = out * np.asarray(color_scale, dtype=np.float64)
    return np.clip(out, 0.0, 1.0)


def augment(
    example: LabeledExample, aug_seed: int, small_angle: bool = False
) -> LabeledExample:
    """Seeded rotation/flip/color-variation copy of an example."""
    rng = np.random.default_rng(aug_seed)
    rot = int(rng.integers(0, 4))
    angle = float(rng.uniform(-10.0, 10.0)) if small_angle else 0.0
    flip = FLIPS[int(rng.integers(0, len(FLIPS)))]
    scale = tuple(rng.uniform(0.8, 1.2, size=3))
    out = example.copy()
    out.image = apply_augment(example.image, rot, flip, scale, angle)
    out.example_id = f"{example.example_id}-a{aug_seed & 0xFFFFFFFFFFFFFFFF:016x}"
    out.source_id = example.example_id
    return out


def generate_dataset(
    n: int,
    class_balance: float = 0.5,
    master_seed: int = 0,
    size: int = DEFAULT_SIZE,
) -> list[LabeledExample]:
    """Generate n labeled scenes with an exact class split."""
    if n < 2:
        raise SceneParamError(f"need at least 2 examples, got {n}")
    if not 0.0 < class_balance < 1.0:
        raise SceneParamError(f"class_balance {class_balance} outside (0, 1)")
    n_safe = round_half_away(n * class_balance)
    if n_safe == 0 or n_safe == n:
        raise SceneParamError(
            f"n={n} with balance={class_balance} leaves one class empty"
        )
    examples = []
    for i in range(n):
        label = SAFE_PAD if i < n_safe else UNSAFE_ZONE
        seed = derive_seed(master_seed, "scene", i)
        params = sample_scene_params(label, seed, size=size)
        ex = generate_scene(params)
        ex.example_id = f"ex{i:06d}"
        examples.append(ex)
    return examples
