"""Image tensor conventions, validation helpers, and PNG round-tripping.

All pixel data in this package is float64, shape (H, W, 3), channel-last,
intensities in [0, 1]. Files on disk are 8-bit-per-channel PNG with
intensity = round(v * 255).
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


DEFAULT_SIZE = 64

SAFE_PAD = "safe_pad"
UNSAFE_ZONE = "unsafe_zone"
LABELS = (SAFE_PAD, UNSAFE_ZONE)


class ImageValidationError(ValueError):
    """Raised when an array does not satisfy the image tensor contract."""


def check_image(image: np.ndarray, size: int | None = None) -> np.ndarray:
    """Validate a single image tensor and return it unchanged."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageValidationError(
            f"expected shape (H, W, 3), got {arr.shape}"
        )
    if size is not None and arr.shape[:2] != (size, size):
        raise ImageValidationError(
            f"expected {size}x{size} image, got {arr.shape[0]}x{arr.shape[1]}"
        )
    if not np.issubdtype(arr.dtype, np.floating):
        raise ImageValidationError(f"expected float dtype, got {arr.dtype}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ImageValidationError(
            f"intensities outside [0, 1]: min={arr.min()}, max={arr.max()}"
        )
    return arr


def check_images(images: np.ndarray, size: int | None = None) -> np.ndarray:
    """Validate a batch of images, shape (N, H, W, 3)."""
    arr = np.asarray(images)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ImageValidationError(
            f"expected batch shape (N, H, W, 3), got {arr.shape}"
        )
    check_image(arr[0], size=size) if len(arr) else None
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ImageValidationError("batch intensities outside [0, 1]")
    return arr


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize to the on-disk 8-bit representation."""
    return np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def save_png(image: np.ndarray, path) -> None:
    check_image(image)
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        raw = np.asarray(im.convert("RGB"))
    return from_uint8(raw)


def image_digest(image: np.ndarray) -> str:
    """Stable content hash of the quantized pixels."""
    return hashlib.sha256(to_uint8(image).tobytes()).hexdigest()


def derive_seed(master_seed: int, *labels) -> int:
    """Deterministic 64-bit sub-seed from a master seed and a label path.

    Labeled derivation lets any stage (scene/split/poison/init/shuffle)
    be rerun independently of the others.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"\x00")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def round_half_away(x: float) -> int:
    """Round half away from zero; the single rounding rule for all counts."""
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))
