"""Adam training over fixed-length chunks, and per-point classification of price paths."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..simkit import PricePath, RngSpec
from .features import FeatureStats, featurize
from .network import LstmModel, backward_batch, forward_batch, predict_labels

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 10
    chunk_len: int = 512
    grad_clip_norm: float = 1.0
    rng: RngSpec = field(default_factory=lambda: RngSpec(0))
    hidden_dim: int = 16
    batch_size: int = 16

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if self.chunk_len < 2 or self.epochs < 0 or self.batch_size < 1 or self.hidden_dim < 1:
            raise ValidationError("chunk_len >= 2, epochs >= 0, batch_size >= 1, hidden_dim >= 1 required")
        if not self.grad_clip_norm > 0:
            raise ValidationError("grad_clip_norm must be positive")


@dataclass
class TrainResult:
    model: LstmModel
    history: list[dict]


def chunk_bounds(n: int, chunk_len: int) -> list[tuple[int, int]]:
    """Consecutive chunks of ``chunk_len``; a ragged tail becomes one final chunk aligned to the end."""
    if n <= chunk_len:
        return [(0, n)]
    bounds = [(s, s + chunk_len) for s in range(0, n - chunk_len + 1, chunk_len)]
    if bounds[-1][1] < n:
        bounds.append((n - chunk_len, n))
    return bounds


def _chunks(dataset, chunk_len):
    groups = defaultdict(list)
    for features, labels in dataset:
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ValidationError("each dataset item must be (features (T, D), labels (T,))")
        for a, b in chunk_bounds(features.shape[0], chunk_len):
            groups[b - a].append((features[a:b], labels[a:b]))
    return groups


class Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> float:
        cfg = self.cfg
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = cfg.grad_clip_norm / norm if norm > cfg.grad_clip_norm else 1.0
        self.t += 1
        c1 = 1 - cfg.beta1 ** self.t
        c2 = 1 - cfg.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k] * scale
            self.m[k] = cfg.beta1 * self.m[k] + (1 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + cfg.adam_epsilon)
        return norm


def train(dataset, cfg: TrainConfig, stats: FeatureStats | None = None,
          model: LstmModel | None = None, metadata: dict | None = None) -> TrainResult:
    """Fit the network to ``dataset``, a sequence of (features, labels) pairs.

    Sequences are cut into ``cfg.chunk_len`` chunks that are shuffled into
    minibatches every epoch. History rows hold the epoch's mean chunk loss
    and point accuracy, both measured before each minibatch's update.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("training dataset is empty")
    input_dim = np.asarray(dataset[0][0]).shape[1]
    if model is None:
        model = LstmModel.init(input_dim, cfg.hidden_dim, cfg.rng.generator(0))
    else:
        model = model.copy()
    if stats is not None:
        model.feature_stats = stats
    if metadata:
        model.metadata.update(metadata)
    groups = _chunks(dataset, cfg.chunk_len)
    params = model.parameters()
    opt = Adam(params, cfg)
    gen = cfg.rng.generator(1)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        batches = []
        for length in sorted(groups):
            items = groups[length]
            order = gen.permutation(len(items))
            for i in range(0, len(items), cfg.batch_size):
                batches.append([items[j] for j in order[i:i + cfg.batch_size]])
        total_loss, n_chunks, correct, n_points = 0.0, 0, 0, 0
        for bi in gen.permutation(len(batches)):
            batch = batches[bi]
            X = np.stack([f for f, _ in batch], axis=1)
            Y = np.stack([y for _, y in batch], axis=1)
            loss, grads, probs = backward_batch(model, X, Y)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch of {len(batch)} "
                                    f"chunks of length {X.shape[0]}")
            b = len(batch)
            opt.step({k: g / b for k, g in grads.items()})
            total_loss += loss
            n_chunks += b
            correct += int(np.sum(predict_labels(probs) == Y))
            n_points += Y.size
        row = {"epoch": epoch, "loss": total_loss / n_chunks, "accuracy": correct / n_points}
        history.append(row)
        log.info("epoch %d loss %.6f accuracy %.4f", epoch, row["loss"], row["accuracy"])
    return TrainResult(model, history)


def dataset_from_paths(pairs, stats: FeatureStats):
    """(features, labels) items from (PricePath, per-point labels) pairs.

    The feature at step t describes the move from t-1 to t, so it is paired
    with the label of point t.
    """
    out = []
    for path, labels in pairs:
        labels = np.asarray(labels)
        if labels.shape != (len(path),):
            raise ValidationError("labels must align with the path")
        out.append((featurize(path.prices, stats), labels[1:]))
    return out


def _spread(step_probs: np.ndarray) -> np.ndarray:
    return np.concatenate([step_probs[:1], step_probs], axis=0)


def classify_paths(model: LstmModel, paths: list[PricePath], window: int | None = None):
    """Labels and probabilities for several paths, batching equal lengths together.

    Point 0 has no incoming return and copies the result of point 1.
    ``window`` runs the network over consecutive windows of that many
    steps instead of the whole sequence at once.
    """
    results: list = [None] * len(paths)
    by_len = defaultdict(list)
    for i, p in enumerate(paths):
        if len(p) < 2:
            raise ValidationError("path must have at least two points to classify")
        by_len[len(p)].append(i)
    for n, idx in by_len.items():
        X = np.stack([featurize(paths[i].prices, model.feature_stats) for i in idx], axis=1)
        if window is None:
            probs, _ = forward_batch(model, X)
        else:
            probs = np.empty(X.shape[:2] + (2,))
            for a, b in chunk_bounds(X.shape[0], window):
                probs[a:b], _ = forward_batch(model, X[a:b])
        for j, i in enumerate(idx):
            pr = _spread(probs[:, j, :])
            results[i] = (predict_labels(pr), pr)
    return results


def classify_sequence(model: LstmModel, path: PricePath, window: int | None = None):
    """Per-point labels (1 = true martingale) and (n, 2) probabilities for one path."""
    return classify_paths(model, [path], window)[0]
