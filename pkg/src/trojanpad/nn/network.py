"""Architecture descriptors and the sequential network container.

Parameters live in a flat float64 vector view with named per-layer
segments, which keeps checkpointing, gradient checking, and freezing
masks simple.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    Conv2d,
    Dense,
    GlobalAvgPool,
    Layer,
    MaxPool2x2,
    NonFiniteActivationError,
    ReLU,
    sigmoid,
)


class ArchitectureError(ValueError):
    """Incompatible or malformed architecture descriptor."""


def default_architecture() -> list[dict]:
    """Compact conv / max-pool / GAP / dense stack with one sigmoid output."""
    return [
        {"type": "conv", "in": 3, "out": 16},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "conv", "in": 16, "out": 32},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "conv", "in": 32, "out": 64},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "gap"},
        {"type": "dense", "in": 64, "out": 32},
        {"type": "relu"},
        {"type": "dense", "in": 32, "out": 1},
    ]


# Layer indices of the default architecture's training stages. Stage 1
# trains the dense head only; stage 2 additionally unfreezes the last
# convolution block.
HEAD_LAYERS = (10, 12)
STAGE2_LAYERS = (6, 10, 12)
GAP_INDEX = 9
LAST_CONV_INDEX = 6


def build_layer(spec: dict) -> Layer:
    kind = spec.get("type")
    if kind == "conv":
        return Conv2d(spec["in"], spec["out"], spec.get("ksize", 3), spec.get("pad", 1))
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool2x2()
    if kind == "gap":
        return GlobalAvgPool()
    if kind == "dense":
        return Dense(spec["in"], spec["out"])
    raise ArchitectureError(f"unknown layer type {kind!r}")


class Network:
    def __init__(self, architecture: list[dict]):
        self.architecture = architecture
        self.layers = [build_layer(s) for s in architecture]
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ArchitectureError("network must end in a dense layer")
        if self.layers[-1].out_dim != 1:
            raise ArchitectureError("binary classifier needs one output unit")

    # ---- parameter bookkeeping -------------------------------------------

    def segments(self) -> list[tuple[int, str, tuple]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out.append((i, name, arr.shape))
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, _, shape in self.segments())

    def get_flat_params(self) -> np.ndarray:
        parts = [
            layer.params()[name].ravel() for i, name, _ in self.segments()
            for layer in (self.layers[i],)
        ]
        return np.concatenate(parts) if parts else np.zeros(0)

    def set_flat_params(self, flat: np.ndarray) -> None:
        if flat.shape != (self.param_count(),):
            raise ArchitectureError(
                f"expected {self.param_count()} parameters, got {flat.shape}"
            )
        offset = 0
        for i, name, shape in self.segments():
            n = int(np.prod(shape))
            setattr(
                self.layers[i],
                name,
                flat[offset : offset + n].reshape(shape).astype(np.float64).copy(),
            )
            offset += n

    def get_flat_grads(self, trainable: set[int] | None = None) -> np.ndarray:
        parts = []
        for i, name, shape in self.segments():
            g = self.layers[i].grads()[name]
            if trainable is not None and i not in trainable:
                g = np.zeros(shape)
            parts.append(np.asarray(g).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            if hasattr(layer, "init_params"):
                layer.init_params(rng)

    # ---- passes ----------------------------------------------------------

    def forward_logits(self, x: np.ndarray, check_finite: bool = False) -> np.ndarray:
        out = x
        for layer in self.layers:
            out = layer.forward(out)
            if check_finite and not np.all(np.isfinite(out)):
                raise NonFiniteActivationError(layer.name)
        return out[:, 0]

    def forward_proba(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.forward_logits(x))

    def backward_from_logits(self, dlogits: np.ndarray) -> None:
        """Propagate d(loss)/d(logits); fills each layer's grad buffers."""
        grad = dlogits[:, None]
        first_param_layer = next(
            i for i, layer in enumerate(self.layers) if layer.params()
        )
        for i in range(len(self.layers) - 1, -1, -1):
            grad = self.layers[i].backward(grad, need_input_grad=i > first_param_layer)
