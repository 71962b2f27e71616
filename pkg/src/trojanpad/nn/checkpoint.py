"""Versioned binary checkpoint format for fitted classifiers.

Layout: magic, format version, JSON header (architecture, normalization
stats, training metadata), little-endian float64 parameter payload,
little-endian float64 momentum payload, trailing SHA-256 over everything
before it. Save -> load round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..images import SAFE_PAD, UNSAFE_ZONE
from .classifier import ConvNetClassifier
from .network import Network


MAGIC = b"TPADCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


def _flat_velocities(clf: ConvNetClassifier) -> np.ndarray:
    parts = []
    for i, name, shape in clf.network_.segments():
        v = clf.velocities_.get((i, name))
        parts.append(np.zeros(int(np.prod(shape))) if v is None else v.ravel())
    return np.concatenate(parts)


def _unflatten_velocities(clf: ConvNetClassifier, flat: np.ndarray) -> dict:
    out = {}
    offset = 0
    for i, name, shape in clf.network_.segments():
        n = int(np.prod(shape))
        out[(i, name)] = flat[offset : offset + n].reshape(shape).copy()
        offset += n
    return out


def save_checkpoint(clf: ConvNetClassifier, path: str | Path) -> None:
    clf._check_fitted()
    params = clf.network_.get_flat_params()
    velocities = _flat_velocities(clf)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": clf.network_.architecture,
        "image_size": clf.image_size,
        "epoch": clf.epoch_,
        "seed": clf.seed,
        "norm_mean": clf.norm_mean_.tolist(),
        "norm_std": clf.norm_std_.tolist(),
        "param_count": int(params.size),
        "estimator_params": clf.get_params(),
        "history": clf.history_,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = (
        MAGIC
        + struct.pack("<II", FORMAT_VERSION, len(header_bytes))
        + header_bytes
        + params.astype("<f8").tobytes()
        + velocities.astype("<f8").tobytes()
    )
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(path: str | Path) -> ConvNetClassifier:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a trojanpad checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path} is corrupt (content hash mismatch)")
    version, header_len = struct.unpack_from("<II", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format v{version} unsupported (expected v{FORMAT_VERSION})"
        )
    start = len(MAGIC) + 8
    header = json.loads(body[start : start + header_len])
    payload = np.frombuffer(body[start + header_len :], dtype="<f8")

    est_params = header["estimator_params"]
    clf = ConvNetClassifier(**est_params)
    clf.network_ = Network(header["architecture"])
    n = clf.network_.param_count()
    if header["param_count"] != n or payload.size != 2 * n:
        raise CheckpointError(
            f"{path} parameter payload does not match its architecture"
        )
    clf.network_.set_flat_params(payload[:n])
    clf.velocities_ = _unflatten_velocities(clf, payload[n:])
    clf.classes_ = np.array([SAFE_PAD, UNSAFE_ZONE])
    clf.norm_mean_ = np.asarray(header["norm_mean"], dtype=np.float64)
    clf.norm_std_ = np.asarray(header["norm_std"], dtype=np.float64)
    clf.epoch_ = header["epoch"]
    clf.history_ = header["history"]
    clf.initial_params_ = None
    return clf


def checkpoint_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
