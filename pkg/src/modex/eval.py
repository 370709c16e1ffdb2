"""Threshold-free detection metrics and the three uncertainty tasks.

Scores follow the "higher means more likely positive" convention, so the
tasks feed negative uncertainties: -AU for misclassification detection
(correct = 1) and -EU for OOD and shift detection (in-distribution = 1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import LabeledDataset, corrupt
from .nnet import ModelState
from .trainer import predict_arrays


@dataclass(frozen=True)
class DetectionResult:
    auroc: float
    aupr: float
    n_pos: int
    n_neg: int
    score_convention: str

    def as_dict(self) -> dict:
        return asdict(self)


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be binary")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise ValueError("both positive and negative labels are required")
    return s, y


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate of P(positive outranks negative), ties counted 1/2."""
    s, y = _check(scores, labels)
    _, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    first = np.cumsum(counts) - counts
    ranks = (first + (counts + 1) / 2.0)[inv]
    P = int(y.sum())
    N = y.size - P
    U = ranks[y].sum() - P * (P + 1) / 2.0
    return float(U / (P * N))


def aupr(scores, labels) -> float:
    """Step-wise area under the precision-recall curve (average precision).

    Thresholds sweep the distinct scores from high to low; tied scores
    enter together.  Each group adds its recall increment times the
    precision reached once the group is included.
    """
    s, y = _check(scores, labels)
    uniq, inv = np.unique(-s, return_inverse=True)
    pos_per = np.bincount(inv, weights=y, minlength=uniq.size).astype(np.int64)
    all_per = np.bincount(inv, minlength=uniq.size)
    tp = np.cumsum(pos_per)
    pp = np.cumsum(all_per)
    P = int(y.sum())
    return math.fsum(float(dt) / P * (float(t) / float(p))
                     for dt, t, p in zip(pos_per, tp, pp) if dt)


def detect(scores, labels, convention: str) -> DetectionResult:
    y = np.asarray(labels).astype(bool)
    return DetectionResult(auroc(scores, y.astype(int)), aupr(scores, y.astype(int)),
                           int(y.sum()), int((~y).sum()), convention)


def accuracy(model: ModelState, ds: LabeledDataset) -> float:
    cls, *_ = predict_arrays(model, ds.features)
    return float(np.mean(cls == ds.labels))


def misclassification_detection(au, correct) -> DetectionResult:
    """Score ``-AU``; positives are correctly classified inputs."""
    correct = np.asarray(correct, dtype=bool)
    if correct.all():
        raise ValueError("every prediction is correct; misclassification metrics are undefined")
    if not correct.any():
        raise ValueError("every prediction is wrong; misclassification metrics are undefined")
    return detect(-np.asarray(au, dtype=np.float64), correct, "-AU, correct=1")


def ood_detection(eu_id, eu_ood) -> DetectionResult:
    """Score ``-EU``; in-distribution inputs are positives."""
    eu_id = np.asarray(eu_id, dtype=np.float64)
    eu_ood = np.asarray(eu_ood, dtype=np.float64)
    if eu_id.size == 0 or eu_ood.size == 0:
        raise ValueError("both ID and OOD sets must be non-empty")
    scores = -np.concatenate([eu_id, eu_ood])
    labels = np.concatenate([np.ones(eu_id.size, bool), np.zeros(eu_ood.size, bool)])
    return detect(scores, labels, "-EU, ID=1")


def misclassification_task(model: ModelState, test: LabeledDataset) -> DetectionResult:
    cls, _, au, _ = predict_arrays(model, test.features)
    return misclassification_detection(au, cls == test.labels)


def ood_task(model: ModelState, id_test: LabeledDataset, ood_features) -> DetectionResult:
    *_, eu_id = predict_arrays(model, id_test.features)
    *_, eu_ood = predict_arrays(model, np.asarray(ood_features, dtype=np.float64))
    return ood_detection(eu_id, eu_ood)


def shift_task(model: ModelState, clean_test: LabeledDataset, severities,
               seed: int = 0) -> list[DetectionResult]:
    """One result per severity: clean inputs positive, corrupted copies negative."""
    severities = list(severities)
    if any(s not in (1, 2, 3, 4, 5) for s in severities):
        raise ValueError("severities must be drawn from 1..5")
    *_, eu_clean = predict_arrays(model, clean_test.features)
    out = []
    for sev in severities:
        shifted = corrupt(clean_test, sev, seed)
        *_, eu_shift = predict_arrays(model, shifted.features)
        out.append(ood_detection(eu_clean, eu_shift))
    return out
