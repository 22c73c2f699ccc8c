"""Metric arithmetic oracles and permutation properties."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stt.errors import InputError
from stt.metrics import EvalReport, uar_war


def pairs_for_confusion(confusion):
    preds, labels = [], []
    for true_c, row in enumerate(confusion):
        for pred_c, count in enumerate(row):
            preds += [pred_c] * count
            labels += [true_c] * count
    return preds, labels


def test_perfect_predictions_score_one(rng):
    labels = rng.integers(3, size=40)
    labels[:3] = [0, 1, 2]  # every class present
    report = uar_war(labels, labels, 3)
    assert report.war == 1.0
    assert report.uar == 1.0


def test_two_class_hand_example():
    preds, labels = pairs_for_confusion([[8, 2], [3, 7]])
    report = uar_war(preds, labels, 2)
    assert report.confusion.tolist() == [[8, 2], [3, 7]]
    assert report.per_class_recall == [0.8, 0.7]
    assert report.uar == pytest.approx(0.75, abs=1e-15)
    assert report.war == pytest.approx(0.75, abs=1e-15)


def test_imbalanced_hand_example():
    # class sizes (10, 90), correct (5, 81): UAR and WAR diverge
    confusion = [[5, 5], [9, 81]]
    report = uar_war(*pairs_for_confusion(confusion), 2)
    assert report.uar == pytest.approx(0.7, abs=1e-15)
    assert report.war == pytest.approx(0.86, abs=1e-15)


def test_absent_class_is_excluded_and_flagged():
    report = uar_war([0, 1, 1, 0], [0, 1, 1, 1], 3)
    assert report.per_class_recall[2] is None
    assert report.absent_classes == [2]
    assert report.uar == pytest.approx((1.0 + 2.0 / 3.0) / 2.0, abs=1e-15)


@given(st.integers(0, 2 ** 32 - 1))
def test_relabeling_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 7))
    n = int(rng.integers(1, 60))
    labels = rng.integers(c, size=n)
    preds = rng.integers(c, size=n)
    perm = rng.permutation(c)
    base = uar_war(preds, labels, c)
    relabeled = uar_war(perm[preds], perm[labels], c)
    assert relabeled.war == pytest.approx(base.war, abs=1e-15)
    assert relabeled.uar == pytest.approx(base.uar, abs=1e-15)
    # the confusion matrix itself is conjugated by the permutation
    assert np.array_equal(relabeled.confusion[np.ix_(perm, perm)], base.confusion)


@given(st.integers(0, 2 ** 32 - 1))
def test_balanced_labels_make_uar_equal_war(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 6))
    per_class = int(rng.integers(1, 30))
    labels = np.repeat(np.arange(c), per_class)
    preds = rng.integers(c, size=labels.size)
    report = uar_war(preds, labels, c)
    assert abs(report.uar - report.war) < 1e-12


def test_merge_equals_single_pass(rng):
    c = 4
    labels = rng.integers(c, size=120)
    preds = rng.integers(c, size=120)
    merged = uar_war(preds[:50], labels[:50], c).merge(uar_war(preds[50:], labels[50:], c))
    single = uar_war(preds, labels, c)
    assert np.array_equal(merged.confusion, single.confusion)
    assert merged.war == single.war
    assert merged.uar == single.uar


def test_merge_rejects_shape_mismatch(rng):
    a = uar_war([0, 1], [0, 1], 2)
    b = uar_war([0, 1, 2], [0, 1, 2], 3)
    with pytest.raises(InputError):
        a.merge(b)


def test_input_validation():
    with pytest.raises(InputError):
        uar_war([], [], 2)
    with pytest.raises(InputError):
        uar_war([0, 1], [0], 2)
    with pytest.raises(InputError):
        uar_war([0, 2], [0, 1], 2)
    with pytest.raises(InputError):
        uar_war([0, 1], [0, -1], 2)
    with pytest.raises(InputError):
        uar_war([0, 0], [0, 0], 1)
    with pytest.raises(InputError):
        EvalReport(np.array([[1, 2, 3], [4, 5, 6]]))
    with pytest.raises(InputError):
        EvalReport(np.array([[1, -2], [0, 3]]))


def test_report_serialization_round_trip():
    report = uar_war(*pairs_for_confusion([[8, 2, 0], [3, 7, 0], [0, 0, 0]][:2] + [[1, 0, 4]]), 3)
    text = report.lines()
    fields = dict(line.split("=", 1) for line in text.strip().splitlines())
    assert fields["classes"] == "3"
    assert fields["total"] == str(report.total)
    assert float(fields["war"]) == pytest.approx(report.war, abs=1e-6)
    assert float(fields["uar"]) == pytest.approx(report.uar, abs=1e-6)
    parsed = [[int(v) for v in row.split(",")] for row in report.confusion_csv().strip().splitlines()]
    assert parsed == report.confusion.tolist()


def test_report_marks_absent_class_in_text():
    report = uar_war([0, 1], [0, 1], 3)
    assert "recall_2=absent" in report.lines()
