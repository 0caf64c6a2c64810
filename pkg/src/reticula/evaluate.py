"""Per-slice comparison of predicted annotations against ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Tuple

from .annotations import AnnotationSet, Component, Status


class MatchMode(str, Enum):
    CENTROID_DISTANCE = "centroid_distance"
    PIXEL_OVERLAP = "pixel_overlap"


@dataclass(frozen=True)
class MatchCriterion:
    mode: MatchMode = MatchMode.CENTROID_DISTANCE
    centroid_tol: float = 5.0
    min_iou: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", MatchMode(self.mode))
        if self.mode == MatchMode.CENTROID_DISTANCE and not self.centroid_tol >= 0:
            raise ValueError(f"centroid_tol must be >= 0, got {self.centroid_tol}")
        if self.mode == MatchMode.PIXEL_OVERLAP and not 0 < self.min_iou <= 1:
            raise ValueError(f"min_iou must be in (0, 1], got {self.min_iou}")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn_: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn_) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)


def precision(c: ConfusionCounts) -> Optional[float]:
    """tp / (tp + fp), or None when nothing was predicted."""
    if c.tp + c.fp == 0:
        return None
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> Optional[float]:
    """tp / (tp + fn), or None when there is no ground truth."""
    if c.tp + c.fn_ == 0:
        return None
    return c.tp / (c.tp + c.fn_)


def _iou(a: Component, b: Component) -> float:
    pa, pb = a.pixel_set, b.pixel_set
    inter = len(pa & pb)
    if inter == 0:
        return 0.0
    return inter / len(pa | pb)


def candidate_pairs(
    preds: List[Component], truths: List[Component], m: MatchCriterion
) -> List[Tuple[float, int, int]]:
    """(sort key, pred index, truth index) for every pair meeting the criterion."""
    pairs = []
    for i, p in enumerate(preds):
        for j, t in enumerate(truths):
            if m.mode == MatchMode.CENTROID_DISTANCE:
                d = p.distance_to(t)
                if d <= m.centroid_tol:
                    pairs.append((d, i, j))
            else:
                iou = _iou(p, t)
                if iou >= m.min_iou:
                    pairs.append((-iou, i, j))
    pairs.sort(key=lambda k: (k[0], preds[k[1]].id, truths[k[2]].id))
    return pairs


def greedy_match(preds: List[Component], truths: List[Component], m: MatchCriterion) -> List[Tuple[int, int]]:
    used_p, used_t = set(), set()
    matched = []
    for _, i, j in candidate_pairs(preds, truths, m):
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matched.append((i, j))
    return matched


def match_annotations(
    pred: AnnotationSet,
    truth: AnnotationSet,
    m: MatchCriterion = MatchCriterion(),
    pred_statuses: Iterable[Status] = (Status.CONFIRMED,),
) -> ConfusionCounts:
    """Greedy one-to-one matching per slice.

    Only predictions whose status is in ``pred_statuses`` take part (by
    default just confirmed ones); every non-deleted truth component counts.
    Counting is per cross-section: an object spanning three slices is three
    truths.
    """
    if pred.dims != truth.dims:
        raise ValueError(f"volume mismatch: prediction {pred.dims} vs truth {truth.dims}")
    statuses = {Status(s) for s in pred_statuses}
    total = ConfusionCounts(0, 0, 0)
    for z in range(truth.depth):
        ps = [c for c in pred.on_slice(z) if c.status in statuses]
        ts = [c for c in truth.on_slice(z) if c.status != Status.DELETED]
        tp = len(greedy_match(ps, ts, m))
        total = total + ConfusionCounts(tp, len(ps) - tp, len(ts) - tp)
    return total


def report(counts: ConfusionCounts, m: Optional[MatchCriterion] = None) -> dict:
    out = {
        "tp": counts.tp,
        "fp": counts.fp,
        "fn": counts.fn_,
        "precision": precision(counts),
        "recall": recall(counts),
        "counting_unit": "per-slice cross-section",
    }
    if m is not None:
        out["criterion"] = {"mode": m.mode.value, "centroid_tol": m.centroid_tol, "min_iou": m.min_iou}
    return out
