"""Average precision, per-band mAP, and box-pair matching for detection scoring.

AP is non-interpolated: items are ranked by descending score with ties broken
by ascending original index (a stable sort), and AP is the mean of
precision@k over the ranks k holding positives.  Classes without any positive
are undefined and excluded from every mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .taxonomy import FrequencyBands

IOU_MATCH_THRESHOLD = 0.5


class UndefinedAveragePrecision(ValueError):
    """Raised when AP is requested for a list with no positives."""


def average_precision(scores, positives) -> float:
    """Non-interpolated AP of one ranked list.

    scores: real-valued, higher ranks earlier; ties keep original order.
    positives: boolean flags, at least one True.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError(f"shape mismatch: {scores.shape} scores vs {positives.shape} flags")
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise UndefinedAveragePrecision("no positives: AP is undefined for this class")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    cum_hits = np.cumsum(hits)
    ranks = np.arange(1, scores.size + 1)
    return float((cum_hits[hits] / ranks[hits]).sum() / n_pos)


@dataclass(frozen=True)
class MeanApResult:
    """Per-class APs (NaN where undefined), their mean, and per-band means.

    A band mean is None when no band member has a defined AP.
    """

    per_class_ap: np.ndarray
    overall: float
    band_maps: dict[int, float | None]
    n_defined: int


def mean_ap(
    scores: np.ndarray,
    labels: np.ndarray,
    bands: FrequencyBands | None = None,
) -> MeanApResult:
    """Mean AP over classes with test positives, plus per-band restrictions.

    scores: (N, C) real scores; labels: (N, C) sign labels.  Classes with no
    +1 test label are excluded from the overall mean and from every band mean
    alike.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs labels {labels.shape}")
    n_classes = scores.shape[1]
    per_class = np.full(n_classes, np.nan)
    for c in range(n_classes):
        positives = labels[:, c] == 1
        if positives.any():
            per_class[c] = average_precision(scores[:, c], positives)
    defined = ~np.isnan(per_class)
    if not defined.any():
        raise ValueError("AP is undefined for every class (no test positives at all)")
    overall = float(per_class[defined].mean())
    band_maps: dict[int, float | None] = {}
    if bands is not None:
        for t in bands.thresholds:
            members = np.array(sorted(bands.band(t)), dtype=np.int64)
            usable = members[defined[members]] if members.size else members
            band_maps[t] = float(per_class[usable].mean()) if usable.size else None
    return MeanApResult(per_class, overall, band_maps, int(defined.sum()))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in image coordinates; must have positive area."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


class PairPrediction(NamedTuple):
    human: Box
    object: Box
    class_id: int
    score: float


class PairTruth(NamedTuple):
    human: Box
    object: Box
    class_id: int


def match_pairs(
    predictions: Sequence[PairPrediction],
    truths: Sequence[PairTruth],
) -> list[bool]:
    """Greedy TP/FP assignment of predicted human-object pairs.

    Per class, predictions are visited in descending score (ties by input
    order).  A prediction is a true positive when an unmatched ground-truth
    pair of the same class overlaps it with IoU above 0.5 on the human box
    AND on the object box; among qualifying truths the one with the largest
    min(human IoU, object IoU) is consumed.  Flags align with the input order
    and feed ``average_precision`` for detection mAP.
    """
    predictions = [PairPrediction(*p) for p in predictions]
    truths = [PairTruth(*t) for t in truths]
    flags = [False] * len(predictions)
    matched = [False] * len(truths)
    truths_of_class: dict[int, list[int]] = {}
    for j, t in enumerate(truths):
        truths_of_class.setdefault(t.class_id, []).append(j)
    by_class: dict[int, list[int]] = {}
    for i, p in enumerate(predictions):
        by_class.setdefault(p.class_id, []).append(i)
    for class_id, pred_ids in by_class.items():
        candidates = truths_of_class.get(class_id, [])
        pred_ids = sorted(pred_ids, key=lambda i: (-predictions[i].score, i))
        for i in pred_ids:
            best_j = -1
            best_overlap = IOU_MATCH_THRESHOLD
            for j in candidates:
                if matched[j]:
                    continue
                overlap = min(
                    iou(predictions[i].human, truths[j].human),
                    iou(predictions[i].object, truths[j].object),
                )
                if overlap > best_overlap:
                    best_overlap = overlap
                    best_j = j
            if best_j >= 0:
                matched[best_j] = True
                flags[i] = True
    return flags
