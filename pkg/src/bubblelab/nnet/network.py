"""Two stacked bidirectional LSTM layers, a 2-unit dense layer, softmax and cross-entropy.

Class index ``k`` of the softmax output is label ``k``: column 0 is the
bubble (strict local martingale) probability, column 1 the true-martingale
probability.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .features import FeatureStats
from .lstm import LstmLayerParams, layer_backward, layer_forward

PROB_FLOOR = 1e-12
LAYERS = ("layer1_fwd", "layer1_bwd", "layer2_fwd", "layer2_bwd")


@dataclass
class LstmModel:
    layer1_fwd: LstmLayerParams
    layer1_bwd: LstmLayerParams
    layer2_fwd: LstmLayerParams
    layer2_bwd: LstmLayerParams
    fc_weights: np.ndarray
    fc_bias: np.ndarray
    feature_stats: FeatureStats = field(default_factory=FeatureStats)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fc_weights = np.asarray(self.fc_weights, dtype=float)
        self.fc_bias = np.asarray(self.fc_bias, dtype=float)
        h = self.hidden_dim
        for name in LAYERS:
            layer = getattr(self, name)
            if layer.hidden_dim != h:
                raise ValidationError(f"{name} hidden dim {layer.hidden_dim} != {h}")
        for name in ("layer1_bwd",):
            if getattr(self, name).input_dim != self.input_dim:
                raise ValidationError("layer1 directions disagree on input dim")
        for name in ("layer2_fwd", "layer2_bwd"):
            if getattr(self, name).input_dim != 2 * h:
                raise ValidationError(f"{name} must take the 2*hidden concatenated outputs")
        if self.fc_weights.shape != (2, 2 * h) or self.fc_bias.shape != (2,):
            raise ValidationError("classification head must map 2*hidden features to 2 logits")

    @property
    def input_dim(self) -> int:
        return self.layer1_fwd.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layer1_fwd.hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, gen: np.random.Generator, **kw):
        layers = [LstmLayerParams.init(d, hidden_dim, gen)
                  for d in (input_dim, input_dim, 2 * hidden_dim, 2 * hidden_dim)]
        k = 1.0 / np.sqrt(2 * hidden_dim)
        fc_w = gen.uniform(-k, k, (2, 2 * hidden_dim))
        return cls(*layers, fc_w, np.zeros(2), **kw)

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in checkpoint order (live references)."""
        out = {}
        for name in LAYERS:
            for k, v in getattr(self, name).arrays().items():
                out[f"{name}.{k}"] = v
        out["fc.W"] = self.fc_weights
        out["fc.b"] = self.fc_bias
        return out

    def copy(self) -> "LstmModel":
        layers = [LstmLayerParams(p.W.copy(), p.U.copy(), p.b.copy())
                  for p in (getattr(self, n) for n in LAYERS)]
        return LstmModel(*layers, self.fc_weights.copy(), self.fc_bias.copy(),
                         self.feature_stats, dict(self.metadata))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(features, model):
    X = np.asarray(features, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValidationError("features must be a non-empty (T, D) or (T, B, D) array")
    if X.shape[2] != model.input_dim:
        raise ValidationError(f"model expects {model.input_dim} input features, got {X.shape[2]}")
    return X


def _bidir_forward(fwd, bwd, X):
    Hf, cf = layer_forward(fwd, X)
    Hb, cb = layer_forward(bwd, X[::-1])
    return np.concatenate([Hf, Hb[::-1]], axis=2), (cf, cb)


def _bidir_backward(fwd, bwd, caches, dH):
    h = fwd.hidden_dim
    cf, cb = caches
    dXf, gf = layer_backward(fwd, cf, dH[:, :, :h])
    dXb, gb = layer_backward(bwd, cb, np.ascontiguousarray(dH[::-1, :, h:]))
    return dXf + dXb[::-1], gf, gb


def forward_batch(model: LstmModel, features):
    """Probabilities of shape (T, B, 2) plus the cache needed by :func:`backward_batch`."""
    X = _as_batch(features, model)
    H1, c1 = _bidir_forward(model.layer1_fwd, model.layer1_bwd, X)
    H2, c2 = _bidir_forward(model.layer2_fwd, model.layer2_bwd, H1)
    logits = H2 @ model.fc_weights.T + model.fc_bias
    probs = softmax(logits)
    return probs, (c1, c2, H2)


def network_forward(model: LstmModel, features) -> np.ndarray:
    """Per-step class probabilities (T, 2) for one feature sequence (T, D)."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError("features must be a (T, D) array")
    probs, _ = forward_batch(model, X)
    return probs[:, 0, :]


def cross_entropy(probs, labels) -> float:
    """Mean over steps of -log p(true class), with ``p`` floored at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[1] != 2 or probs.shape[0] != labels.shape[0]:
        raise ValidationError(f"probs {probs.shape} and labels {labels.shape} are misaligned")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be binary")
    p = probs[np.arange(labels.size), labels.astype(np.int64)]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


def backward_batch(model: LstmModel, features, labels):
    """Loss and gradients for a batch of equal-length sequences.

    ``features`` is (T, B, D) and ``labels`` (T, B). The loss is the sum over
    sequences of each sequence's mean cross-entropy; gradients are of that
    sum. Returns (loss, grads, probs) with grads keyed like
    :meth:`LstmModel.parameters`.
    """
    X = _as_batch(features, model)
    Y = np.asarray(labels).astype(np.int64)
    if Y.ndim == 1:
        Y = Y[:, None]
    T, B, _ = X.shape
    if Y.shape != (T, B):
        raise ValidationError(f"labels shape {Y.shape} does not match features {(T, B)}")
    probs, (c1, c2, H2) = forward_batch(model, X)
    onehot = np.stack([1 - Y, Y], axis=2).astype(float)
    p_true = np.take_along_axis(probs, Y[:, :, None], axis=2)[:, :, 0]
    loss = float(np.sum(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR)), axis=0)))
    # below the floor the loss is constant in the logits
    live = (p_true >= PROB_FLOOR)[:, :, None]
    dlogits = np.where(live, probs - onehot, 0.0) / T

    grads = {
        "fc.W": dlogits.reshape(T * B, 2).T @ H2.reshape(T * B, -1),
        "fc.b": dlogits.sum(axis=(0, 1)),
    }
    dH2 = dlogits @ model.fc_weights
    dH1, g2f, g2b = _bidir_backward(model.layer2_fwd, model.layer2_bwd, c2, dH2)
    _, g1f, g1b = _bidir_backward(model.layer1_fwd, model.layer1_bwd, c1, dH1)
    for name, g in zip(LAYERS, (g1f, g1b, g2f, g2b)):
        for k, v in g.items():
            grads[f"{name}.{k}"] = v
    return loss, grads, probs


def backward(model: LstmModel, features, labels):
    """Loss and exact gradients of ``cross_entropy(network_forward(...), labels)``."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError("features must be a (T, D) array")
    loss, grads, _ = backward_batch(model, X[:, None, :], np.asarray(labels)[:, None])
    return loss, grads


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax over the two classes; ties go to label 1 (true martingale)."""
    return (probs[..., 1] >= probs[..., 0]).astype(np.int64)
