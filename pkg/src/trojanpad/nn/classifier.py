"""Two-stage convolutional classifier with an sklearn-style estimator API.

Stage 1 trains only the dense head with the convolutional backbone frozen
at its initialization; stage 2 unfreezes the last convolution block at a
reduced learning rate. Because frozen layers never change within a stage,
their activations are computed once per stage and cached, which keeps
CPU training fast without changing any numbers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..images import SAFE_PAD, UNSAFE_ZONE, check_images, derive_seed
from .layers import (
    NonFiniteActivationError,
    bce_with_logits,
    bce_with_logits_grad,
    sigmoid,
)
from .network import (
    GAP_INDEX,
    HEAD_LAYERS,
    LAST_CONV_INDEX,
    STAGE2_LAYERS,
    Network,
    default_architecture,
)


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


def _forward_layers(layers, x):
    out = x
    for layer in layers:
        out = layer.forward(out)
    return out


def _backward_layers(layers, dlogits):
    grad = dlogits[:, None]
    first_param = next(i for i, l in enumerate(layers) if l.params())
    for i in range(len(layers) - 1, -1, -1):
        grad = layers[i].backward(grad, need_input_grad=i > first_param)


class ConvNetClassifier(BaseEstimator, ClassifierMixin):
    """Binary landing-zone classifier; positive class is the unsafe zone."""

    def __init__(
        self,
        image_size: int = 64,
        stage1_epochs: int = 30,
        stage2_epochs: int = 30,
        lr_stage1: float = 1e-2,
        lr_stage2: float = 1e-3,
        batch_size: int = 32,
        momentum: float = 0.9,
        seed: int = 0,
        eval_chunk: int = 64,
    ):
        self.image_size = image_size
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.lr_stage1 = lr_stage1
        self.lr_stage2 = lr_stage2
        self.batch_size = batch_size
        self.momentum = momentum
        self.seed = seed
        self.eval_chunk = eval_chunk

    # ---- label handling --------------------------------------------------

    @staticmethod
    def _encode(y) -> np.ndarray:
        arr = np.asarray(y)
        if arr.dtype.kind in "US":
            return (arr == UNSAFE_ZONE).astype(np.float64)
        return arr.astype(np.float64)

    # ---- fitting ---------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_images(X, size=self.image_size).astype(np.float64)
        yt = self._encode(y)
        if len(X) != len(yt) or len(X) == 0:
            raise ValueError("X and y must be non-empty and equally long")
        if X_val is not None:
            X_val = check_images(X_val, size=self.image_size).astype(np.float64)
            yv = self._encode(y_val)
            if len(X_val) == 0:
                raise ValueError("validation split is empty")
        else:
            yv = None

        self.classes_ = np.array([SAFE_PAD, UNSAFE_ZONE])
        self.norm_mean_ = X.mean(axis=(0, 1, 2))
        self.norm_std_ = np.maximum(X.std(axis=(0, 1, 2)), 1e-8)

        self.network_ = Network(default_architecture())
        self.network_.init_params(
            np.random.default_rng(derive_seed(self.seed, "init"))
        )
        self.initial_params_ = self.network_.get_flat_params().copy()
        self.velocities_ = {}
        self.history_ = []
        self.epoch_ = 0

        Xn = self._normalize(X)
        Xvn = self._normalize(X_val) if X_val is not None else None

        self._run_stage(1, GAP_INDEX + 1, HEAD_LAYERS, self.lr_stage1,
                        self.stage1_epochs, Xn, yt, Xvn, yv)
        self._run_stage(2, LAST_CONV_INDEX, STAGE2_LAYERS, self.lr_stage2,
                        self.stage2_epochs, Xn, yt, Xvn, yv)

        # Re-measure the final epoch through the full checkpoint path so the
        # recorded numbers match later evaluation exactly.
        final = self.history_[-1]
        final["train_loss"], final["train_acc"] = self._full_metrics(Xn, yt)
        if Xvn is not None:
            final["val_loss"], final["val_acc"] = self._full_metrics(Xvn, yv)
        return self

    def _normalize(self, X):
        return (X - self.norm_mean_) / self.norm_std_

    def _chunked(self, fn, X):
        outs = [fn(X[i : i + self.eval_chunk]) for i in range(0, len(X), self.eval_chunk)]
        return np.concatenate(outs)

    def _full_metrics(self, Xn, y):
        z = self._chunked(
            lambda b: self.network_.forward_logits(b), Xn
        )
        loss = bce_with_logits(z, y)
        acc = float(np.mean((z >= 0.0).astype(np.float64) == y))
        return loss, acc

    def _run_stage(self, stage, split, trainable, lr, epochs, Xn, yt, Xvn, yv):
        prefix = self.network_.layers[:split]
        suffix = self.network_.layers[split:]
        feats = self._chunked(lambda b: _forward_layers(prefix, b), Xn)
        feats_val = (
            self._chunked(lambda b: _forward_layers(prefix, b), Xvn)
            if Xvn is not None
            else None
        )
        param_layers = [
            (i, self.network_.layers[i]) for i in trainable
        ]
        for i, layer in param_layers:
            for name, arr in layer.params().items():
                self.velocities_.setdefault((i, name), np.zeros_like(arr))

        n = len(Xn)
        for _ in range(epochs):
            self.epoch_ += 1
            order = np.random.default_rng(
                derive_seed(self.seed, "shuffle", self.epoch_)
            ).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                z = _forward_layers(suffix, feats[idx])[:, 0]
                if not np.all(np.isfinite(z)):
                    raise TrainingDivergedError(
                        f"non-finite logits at epoch {self.epoch_}", self.history_
                    )
                _backward_layers(suffix, bce_with_logits_grad(z, yt[idx]))
                for i, layer in param_layers:
                    for name, grad in layer.grads().items():
                        v = self.velocities_[(i, name)]
                        v *= self.momentum
                        v -= lr * grad
                        layer.params()[name] += v

            row = {"epoch": self.epoch_, "stage": stage}
            row["train_loss"], row["train_acc"] = self._stage_metrics(suffix, feats, yt)
            if feats_val is not None:
                row["val_loss"], row["val_acc"] = self._stage_metrics(
                    suffix, feats_val, yv
                )
            else:
                row["val_loss"] = row["val_acc"] = float("nan")
            if not np.isfinite(row["train_loss"]):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {self.epoch_}", self.history_
                )
            self.history_.append(row)

    def _stage_metrics(self, suffix, feats, y):
        z = self._chunked(lambda b: _forward_layers(suffix, b)[:, 0], feats)
        return bce_with_logits(z, y), float(np.mean((z >= 0.0).astype(np.float64) == y))

    # ---- inference -------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise RuntimeError("classifier is not fitted")

    def decision_function(self, X):
        self._check_fitted()
        X = check_images(X, size=self.image_size).astype(np.float64)
        return self._chunked(
            lambda b: self.network_.forward_logits(b), self._normalize(X)
        )

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        # Ties at exactly 0.5 classify as unsafe: the conservative call for
        # a landing system.
        z = self.decision_function(X)
        return np.where(z >= 0.0, UNSAFE_ZONE, SAFE_PAD)

    def param_count(self) -> int:
        self._check_fitted()
        return self.network_.param_count()
