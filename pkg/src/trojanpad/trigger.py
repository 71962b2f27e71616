"""Chessboard Trojan triggers and patch embedding.

A trigger is a k x k chessboard patch blended into an image at a resolved
anchor. Everything here is pure and stateless; embedding never mutates its
input image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import DEFAULT_SIZE, check_image


SYMBOLIC_POSITIONS = ("pad_center", "top_left", "bottom_right")
_CORNER_INSET = 2


class TriggerError(ValueError):
    """Trigger footprint or spec violation."""


def default_cell_px(image_size: int) -> int:
    """Scale the trigger footprint with the image: 2px cells at 64x64.

    A 5x5 trigger then covers ~16% of the image width, small enough to
    stay inside the pad but large enough to survive the pooling stack.
    """
    return max(1, round(image_size / 32))


@dataclass(frozen=True)
class TriggerSpec:
    cells: int = 5
    cell_px: int = 2
    position: str | tuple[int, int] = "pad_center"
    colors: tuple[float, float] = (0.0, 1.0)
    alpha: float = 1.0

    def validate(self) -> "TriggerSpec":
        if self.cells < 1:
            raise TriggerError(f"cells must be >= 1, got {self.cells}")
        if self.cell_px < 1:
            raise TriggerError(f"cell_px must be >= 1, got {self.cell_px}")
        if not 0.0 <= self.alpha <= 1.0:
            raise TriggerError(f"alpha {self.alpha} outside [0, 1]")
        dark, light = self.colors
        if dark == light:
            raise TriggerError("dark and light colors must differ")
        for c in self.colors:
            if not 0.0 <= c <= 1.0:
                raise TriggerError(f"color {c} outside [0, 1]")
        if isinstance(self.position, str):
            if self.position not in SYMBOLIC_POSITIONS:
                raise TriggerError(f"unknown position {self.position!r}")
        return self

    @property
    def footprint_px(self) -> int:
        return self.cells * self.cell_px

    def describe(self) -> str:
        return f"{self.cells}x{self.cells} chessboard ({self.footprint_px}px)"


def render_trigger(spec: TriggerSpec) -> np.ndarray:
    """Render the chessboard patch: cell (i, j) dark when i + j is even."""
    spec.validate()
    dark, light = spec.colors
    i, j = np.indices((spec.cells, spec.cells))
    cells = np.where((i + j) % 2 == 0, dark, light).astype(np.float64)
    patch = np.kron(cells, np.ones((spec.cell_px, spec.cell_px)))
    return np.repeat(patch[:, :, None], 3, axis=2)


def resolve_position(
    position: str | tuple[int, int],
    image: np.ndarray,
    footprint: int,
    pad_center: tuple[float, float] | None = None,
) -> tuple[int, int]:
    """Resolve a symbolic anchor to top-left pixel coordinates."""
    check_image(image)
    h, w = image.shape[:2]
    if isinstance(position, str):
        if position == "top_left":
            x, y = _CORNER_INSET, _CORNER_INSET
        elif position == "bottom_right":
            x = w - _CORNER_INSET - footprint
            y = h - _CORNER_INSET - footprint
        elif position == "pad_center":
            cx, cy = pad_center if pad_center is not None else (w / 2, h / 2)
            x = int(round(cx)) - footprint // 2
            y = int(round(cy)) - footprint // 2
        else:
            raise TriggerError(f"unknown position {position!r}")
    else:
        x, y = int(position[0]), int(position[1])
    if x < 0 or y < 0 or x + footprint > w or y + footprint > h:
        raise TriggerError(
            f"trigger footprint {footprint}px at ({x}, {y}) does not fit "
            f"a {w}x{h} image"
        )
    return x, y


def embed_trigger(
    image: np.ndarray,
    spec: TriggerSpec,
    pad_center: tuple[float, float] | None = None,
) -> np.ndarray:
    """Alpha-blend the trigger patch onto a copy of the image."""
    check_image(image)
    spec.validate()
    fp = spec.footprint_px
    x, y = resolve_position(spec.position, image, fp, pad_center=pad_center)
    patch = render_trigger(spec)
    out = image.copy()
    region = out[y : y + fp, x : x + fp, :]
    out[y : y + fp, x : x + fp, :] = (1.0 - spec.alpha) * region + spec.alpha * patch
    return out


@dataclass(frozen=True)
class NoisePatchSpec:
    """Uniform-noise patch; a scan control candidate, not an attack trigger."""

    size_px: int = 5
    seed: int = 0
    position: str | tuple[int, int] = "pad_center"
    alpha: float = 1.0

    def validate(self) -> "NoisePatchSpec":
        if self.size_px < 1:
            raise TriggerError(f"size_px must be >= 1, got {self.size_px}")
        if not 0.0 <= self.alpha <= 1.0:
            raise TriggerError(f"alpha {self.alpha} outside [0, 1]")
        return self

    @property
    def footprint_px(self) -> int:
        return self.size_px

    def describe(self) -> str:
        return f"{self.size_px}px noise patch (seed {self.seed})"


def render_noise_patch(spec: NoisePatchSpec) -> np.ndarray:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return rng.uniform(0.0, 1.0, size=(spec.size_px, spec.size_px, 3))


def embed_patch(
    image: np.ndarray,
    spec: "TriggerSpec | NoisePatchSpec",
    pad_center: tuple[float, float] | None = None,
) -> np.ndarray:
    """Embed either patch kind; the scan treats candidates uniformly."""
    if isinstance(spec, TriggerSpec):
        return embed_trigger(image, spec, pad_center=pad_center)
    spec.validate()
    fp = spec.footprint_px
    x, y = resolve_position(spec.position, image, fp, pad_center=pad_center)
    patch = render_noise_patch(spec)
    out = image.copy()
    region = out[y : y + fp, x : x + fp, :]
    out[y : y + fp, x : x + fp, :] = (1.0 - spec.alpha) * region + spec.alpha * patch
    return out
