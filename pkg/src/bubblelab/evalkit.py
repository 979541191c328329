"""Point-level detection scores and the network-vs-estimator comparison harness."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import DatasetSpec, streams_disjoint
from .errors import ValidationError
from .estimator import EstimatorConfig, pe_classify
from .simkit import PricePath


@dataclass(frozen=True)
class ConfusionReport:
    """Counts are keyed truth_as_predicted; label 1 is a true martingale (TM)."""

    tm_as_tm: int
    tm_as_slm: int
    slm_as_slm: int
    slm_as_tm: int

    @property
    def n_points(self) -> int:
        return self.tm_as_tm + self.tm_as_slm + self.slm_as_slm + self.slm_as_tm

    @property
    def n_correct(self) -> int:
        return self.tm_as_tm + self.slm_as_slm

    @property
    def detection_pct(self) -> float:
        return 100.0 * self.n_correct / self.n_points if self.n_points else float("nan")

    @property
    def spurious_pct(self) -> float:
        return 100.0 - self.detection_pct

    @property
    def detection_se_pct(self) -> float:
        """Binomial standard error of the detection rate, in percent."""
        p = self.detection_pct / 100.0
        return 100.0 * math.sqrt(p * (1 - p) / self.n_points)

    def __add__(self, other: "ConfusionReport") -> "ConfusionReport":
        return ConfusionReport(self.tm_as_tm + other.tm_as_tm, self.tm_as_slm + other.tm_as_slm,
                               self.slm_as_slm + other.slm_as_slm, self.slm_as_tm + other.slm_as_tm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(n_points=self.n_points, detection_pct=self.detection_pct,
                 spurious_pct=self.spurious_pct, detection_se_pct=self.detection_se_pct)
        return d


def score(predicted, truth) -> ConfusionReport:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValidationError(f"predicted {predicted.shape} and truth {truth.shape} must be equal-length 1-D")
    for name, v in (("predicted", predicted), ("truth", truth)):
        if not np.all((v == 0) | (v == 1)):
            raise ValidationError(f"{name} labels must be binary")
    tm = truth == 1
    return ConfusionReport(
        int(np.sum(tm & (predicted == 1))), int(np.sum(tm & (predicted == 0))),
        int(np.sum(~tm & (predicted == 0))), int(np.sum(~tm & (predicted == 1))))


def aggregate(reports) -> ConfusionReport:
    """Point-weighted aggregate (sum of counts), in input order."""
    total = ConfusionReport(0, 0, 0, 0)
    for r in reports:
        total = total + r
    return total


def macro_detection(reports) -> float:
    return float(np.mean([r.detection_pct for r in reports]))


@dataclass
class Corpus:
    items: list[tuple[PricePath, np.ndarray]]
    manifest: DatasetSpec | None = None

    def __post_init__(self):
        for path, labels in self.items:
            if np.asarray(labels).shape != (len(path),):
                raise ValidationError("corpus labels must align with their paths")
        if self.manifest is not None:
            m = self.manifest
            if len(self.items) != m.n_paths:
                raise ValidationError(f"corpus has {len(self.items)} paths, manifest says {m.n_paths}")
            if any(len(p) != m.n_steps + 1 for p, _ in self.items):
                raise ValidationError("corpus path lengths disagree with the manifest")

    @property
    def paths(self) -> list[PricePath]:
        return [p for p, _ in self.items]

    def manifest_hash(self) -> str | None:
        return None if self.manifest is None else self.manifest.digest()


@dataclass
class ComparisonResult:
    network: ConfusionReport
    estimator: ConfusionReport
    network_per_path: list[ConfusionReport]
    estimator_per_path: list[ConfusionReport]
    timings: dict
    digests: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "estimator": self.estimator.to_dict(),
            "network_macro_detection_pct": macro_detection(self.network_per_path),
            "estimator_macro_detection_pct": macro_detection(self.estimator_per_path),
            "timings_s": self.timings,
            "digests": self.digests,
        }

    def report_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _config_digest(cfg: EstimatorConfig) -> str:
    d = {"window_len": cfg.window_len, "stride": cfg.stride, "gamma1_grid": list(cfg.gamma1_grid),
         "transition": cfg.hmm.transition.tolist(), "emission": cfg.hmm.emission.tolist(),
         "initial": cfg.hmm.initial.tolist(), "smooth": cfg.smooth}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def check_held_out(corpus: Corpus, model) -> None:
    """Refuse to score a model on the corpus it was trained on."""
    train_manifest = getattr(model, "metadata", {}).get("train_dataset")
    if train_manifest is None or corpus.manifest is None:
        return
    if not streams_disjoint(DatasetSpec.from_dict(train_manifest), corpus.manifest):
        raise ValidationError("evaluation corpus overlaps the model's training corpus")


def compare_methods(corpus: Corpus, network_model, estimator_config: EstimatorConfig | None = None,
                    window: int | None = None, threads: int = 1) -> ComparisonResult:
    """Score the network and the smoothed parametric estimator on the same corpus.

    ``network_model`` is an :class:`~bubblelab.nnet.LstmModel` or any callable
    mapping a list of paths to a list of per-point label arrays.
    """
    from .nnet import LstmModel, classify_paths
    from .nnet.checkpoint import to_bytes

    estimator_config = estimator_config or EstimatorConfig()
    paths = corpus.paths
    truth = [np.asarray(y) for _, y in corpus.items]
    digests = {"estimator_config": _config_digest(estimator_config),
               "corpus_manifest": corpus.manifest_hash()}
    if isinstance(network_model, LstmModel):
        check_held_out(corpus, network_model)
        digests["model"] = hashlib.sha256(to_bytes(network_model)).hexdigest()
        t = time.perf_counter()
        net_labels = [lab for lab, _ in classify_paths(network_model, paths, window)]
    else:
        t = time.perf_counter()
        net_labels = list(network_model(paths))
    t_net = time.perf_counter() - t

    t = time.perf_counter()
    pe_labels = [pe_classify(p, estimator_config, threads) for p in paths]
    t_pe = time.perf_counter() - t

    net = [score(p, y) for p, y in zip(net_labels, truth)]
    pe = [score(p, y) for p, y in zip(pe_labels, truth)]
    return ComparisonResult(aggregate(net), aggregate(pe), net, pe,
                            {"network": t_net, "estimator": t_pe}, digests)
