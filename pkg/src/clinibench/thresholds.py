"""Per-class decision thresholds tuned on validation scores.

For every class the candidate cutoffs are the observed validation scores
(plus one sentinel below the minimum so predict-everything is reachable);
the tuned threshold maximizes F1 along that precision-recall sweep. Two
degenerate branches apply: a class that never classifies successfully gets
a threshold above every observed score (and at least 0.5), and a class
whose sweep is flat gets one below every observed score (and at most 0.5).
Otherwise the threshold is the midpoint between the F1-maximizing score
and the next larger observed score, with F1 ties broken toward the higher
cutoff to favor precision. Predictions use strict score > threshold.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ClassMismatch, DimensionMismatch, InvalidVector

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6


@dataclass
class ScoreMatrix:
    example_ids: list[str]
    class_ids: list[str]
    scores: np.ndarray  # (n_examples, n_classes) float

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.example_ids), len(self.class_ids)):
            raise DimensionMismatch(
                f"score matrix {self.scores.shape} does not match "
                f"{len(self.example_ids)} examples x {len(self.class_ids)} classes"
            )
        if not np.all(np.isfinite(self.scores)):
            raise InvalidVector("score matrix contains non-finite entries")

    def column(self, class_id: str) -> np.ndarray:
        return self.scores[:, self.class_ids.index(class_id)]

    def write(self, path) -> None:
        header = json.dumps({"classes": self.class_ids, "count": len(self.example_ids)})
        with open(path, "wb") as fh:
            fh.write(header.encode("utf-8") + b"\n")
            for i, example_id in enumerate(self.example_ids):
                id_bytes = example_id.encode("utf-8")
                fh.write(struct.pack("<H", len(id_bytes)))
                fh.write(id_bytes)
                fh.write(self.scores[i].astype("<f4").tobytes())

    @classmethod
    def read(cls, path) -> "ScoreMatrix":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            class_ids = [str(c) for c in header["classes"]]
            count = int(header["count"])
            example_ids = []
            rows = []
            for _ in range(count):
                (id_len,) = struct.unpack("<H", fh.read(2))
                example_ids.append(fh.read(id_len).decode("utf-8"))
                buf = fh.read(4 * len(class_ids))
                rows.append(np.frombuffer(buf, dtype="<f4").astype(np.float64))
        return cls(example_ids, class_ids, np.stack(rows))


@dataclass
class ThresholdVector:
    per_class: dict[str, float]
    epsilon: float = DEFAULT_EPSILON
    defaulted: list[str] = field(default_factory=list)  # classes that fell back to 0.5

    def to_json(self) -> str:
        return json.dumps(
            {
                "epsilon": self.epsilon,
                "thresholds": dict(sorted(self.per_class.items())),
                "defaulted": sorted(self.defaulted),
            },
            separators=(",", ":"),
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ThresholdVector":
        obj = json.loads(text)
        return cls(
            per_class={k: float(v) for k, v in obj["thresholds"].items()},
            epsilon=float(obj.get("epsilon", DEFAULT_EPSILON)),
            defaulted=list(obj.get("defaulted", [])),
        )


def _f1_sweep(y: np.ndarray, gold: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """F1 of predicting (score > t) for each candidate t, via the sorted
    prefix trick."""
    order = np.argsort(-y, kind="stable")
    y_sorted = y[order]
    gold_sorted = gold[order].astype(np.int64)
    tp_prefix = np.concatenate([[0], np.cumsum(gold_sorted)])
    positives = int(gold.sum())
    # number of scores strictly greater than each candidate
    ks = np.searchsorted(-y_sorted, -candidates, side="left")
    tp = tp_prefix[ks]
    fp = ks - tp
    fn = positives - tp
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def tune_class(y: np.ndarray, gold: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> float:
    """Tuned threshold for one class from observed scores and gold flags."""
    observed = np.unique(y)  # ascending
    candidates = np.concatenate([[observed[0] - epsilon], observed])
    f1 = _f1_sweep(y, gold, candidates)
    max_f1 = float(f1.max())
    if max_f1 == 0.0:
        return max(float(observed[-1]) + epsilon, 0.5)
    if float(f1.min()) == max_f1:
        return min(float(observed[0]) - epsilon, 0.5)
    best_idx = int(np.flatnonzero(f1 == max_f1)[-1])  # ties -> higher cutoff
    if best_idx + 1 >= len(candidates):  # unreachable: top cutoff predicts nothing
        return float(candidates[best_idx])
    return float((candidates[best_idx] + candidates[best_idx + 1]) / 2.0)


def tune(
    val_scores: ScoreMatrix,
    val_labels: Mapping[str, Sequence[str]],
    classes: Sequence[str] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> ThresholdVector:
    """Tune one threshold per class on the validation split."""
    classes = list(classes) if classes is not None else list(val_scores.class_ids)
    label_sets = {ex: frozenset(val_labels.get(ex, ())) for ex in val_scores.example_ids}
    per_class: dict[str, float] = {}
    defaulted: list[str] = []
    for class_id in classes:
        if class_id not in val_scores.class_ids:
            log.warning("class %s has no validation scores; threshold defaults to 0.5", class_id)
            per_class[class_id] = 0.5
            defaulted.append(class_id)
            continue
        y = val_scores.column(class_id)
        gold = np.array([class_id in label_sets[ex] for ex in val_scores.example_ids])
        per_class[class_id] = tune_class(y, gold, epsilon)
    return ThresholdVector(per_class=per_class, epsilon=epsilon, defaulted=defaulted)


@dataclass
class AppliedPredictions:
    """Thresholded predictions plus the untuned full ranking per example."""

    thresholded: dict[str, list[str]]  # score > threshold, by descending score
    ranked: dict[str, list[str]]  # every class by descending score


def apply(test_scores: ScoreMatrix, thresholds: ThresholdVector) -> AppliedPredictions:
    if set(test_scores.class_ids) != set(thresholds.per_class):
        missing = set(test_scores.class_ids) ^ set(thresholds.per_class)
        raise ClassMismatch(f"threshold/score class sets differ on {sorted(missing)[:5]}")
    thr = np.array([thresholds.per_class[c] for c in test_scores.class_ids])
    classes = np.array(test_scores.class_ids)
    thresholded: dict[str, list[str]] = {}
    ranked: dict[str, list[str]] = {}
    for i, example_id in enumerate(test_scores.example_ids):
        row = test_scores.scores[i]
        # descending score, ties by class id for determinism
        order = sorted(range(len(classes)), key=lambda j: (-row[j], classes[j]))
        ranked[example_id] = [str(classes[j]) for j in order]
        thresholded[example_id] = [str(classes[j]) for j in order if row[j] > thr[j]]
    return AppliedPredictions(thresholded=thresholded, ranked=ranked)
