import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import max_matching_oracle
from reticula.annotations import AnnotationSet, Component, Status
from reticula.evaluate import ConfusionCounts, MatchCriterion, MatchMode, match_annotations, precision, recall, report

W = H = 32


def _point_set(points, status=Status.CONFIRMED, depth=1):
    ann = AnnotationSet(W, H, depth)
    for i, p in enumerate(points):
        z, x, y = p if len(p) == 3 else (0, *p)
        ann.add(Component(i, z, ((x, y), (x + 1, y)), status=status))
    return ann


def test_table_one_arithmetic():
    counts = ConfusionCounts(tp=117, fp=18, fn_=109)
    assert precision(counts) == pytest.approx(117 / 135)
    assert recall(counts) == pytest.approx(117 / 226)
    assert round(precision(counts), 4) == 0.8667
    assert round(recall(counts), 4) == 0.5177
    assert round(100 * precision(counts)) == 87 and round(100 * recall(counts)) == 52


def test_degenerate_ratios_are_none():
    assert precision(ConfusionCounts(0, 0, 3)) is None
    assert recall(ConfusionCounts(0, 4, 0)) is None
    assert precision(ConfusionCounts(1, 0, 0)) == 1.0
    assert recall(ConfusionCounts(5, 0, 5)) == 0.5


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0)


def test_criterion_validation():
    with pytest.raises(ValueError):
        MatchCriterion(mode="pixel_overlap", min_iou=0.0)
    with pytest.raises(ValueError):
        MatchCriterion(mode="nearest")
    assert MatchCriterion(mode="pixel_overlap").mode == MatchMode.PIXEL_OVERLAP


def test_identical_sets_score_perfectly():
    truth = _point_set([(3, 3), (10, 10), (20, 4), (25, 25), (5, 28)])
    c = match_annotations(truth, truth)
    assert c == ConfusionCounts(5, 0, 0)


def test_empty_prediction():
    truth = _point_set([(3, 3), (10, 10), (20, 4), (25, 25), (5, 28)])
    c = match_annotations(_point_set([]), truth)
    assert c == ConfusionCounts(0, 0, 5)
    assert precision(c) is None


def test_one_far_prediction():
    truth = _point_set([(5, 5), (20, 20)])
    pred = _point_set([(6, 5), (21, 21), (5, 28)])
    m = MatchCriterion(centroid_tol=3.0)
    c = match_annotations(pred, truth, m)
    cents_p = [x.centroid for x in pred]
    cents_t = [x.centroid for x in truth]
    assert c.tp == max_matching_oracle(cents_p, cents_t, 3.0) == 2
    assert c == ConfusionCounts(2, 1, 0)


def test_only_confirmed_predictions_count_by_default():
    truth = _point_set([(5, 5)])
    pred = _point_set([(5, 5)], status=Status.PROVISIONAL)
    assert match_annotations(pred, truth) == ConfusionCounts(0, 0, 1)
    both = (Status.CONFIRMED, Status.PROVISIONAL)
    assert match_annotations(pred, truth, pred_statuses=both) == ConfusionCounts(1, 0, 0)


def test_matching_is_per_slice():
    truth = _point_set([(0, 5, 5)], depth=2)
    pred = _point_set([(1, 5, 5)], depth=2)
    assert match_annotations(pred, truth) == ConfusionCounts(0, 1, 1)


def test_pixel_overlap_mode():
    truth = AnnotationSet(W, H, 1, [Component(0, 0, ((1, 1), (2, 1), (3, 1), (4, 1)))])
    pred = AnnotationSet(W, H, 1, [Component(0, 0, ((2, 1), (3, 1), (4, 1), (5, 1)), status=Status.CONFIRMED)])
    assert match_annotations(pred, truth, MatchCriterion(mode="pixel_overlap", min_iou=0.6)).tp == 1
    assert match_annotations(pred, truth, MatchCriterion(mode="pixel_overlap", min_iou=0.61)).tp == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        match_annotations(AnnotationSet(4, 4, 1), AnnotationSet(4, 4, 2))


def test_report_uses_null_for_undefined():
    r = report(ConfusionCounts(0, 0, 3))
    assert r["precision"] is None and r["recall"] == 0.0
    assert (r["tp"], r["fp"], r["fn"]) == (0, 0, 3)


points = st.lists(st.tuples(st.integers(0, 30), st.integers(0, 31)), max_size=6)


@settings(max_examples=80, deadline=None)
@given(points, points)
def test_count_identities_and_symmetry(p, t):
    pred, truth = _point_set(p), _point_set(t)
    m = MatchCriterion(centroid_tol=4.0)
    c = match_annotations(pred, truth, m)
    assert c.tp + c.fn_ == len(t)
    assert c.tp + c.fp == len(p)
    swapped = match_annotations(truth, pred, m)
    assert (swapped.tp, swapped.fp, swapped.fn_) == (c.tp, c.fn_, c.fp)
    # greedy never exceeds the optimum and never double counts
    assert c.tp <= max_matching_oracle([x.centroid for x in pred], [x.centroid for x in truth], 4.0)
