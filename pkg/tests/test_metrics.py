import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dvsnet.metrics import (ConfusionMatrix, accuracy, class_counts, classification_report, confusion_matrix,
                            f1, precision, recall, round_half_up, specificity)

from conftest import DENSENET_CM, ENSEMBLE_CM, CLASS_NAMES, ENSEMBLE_SCORES

SMALL = ConfusionMatrix(np.array([[8, 2], [1, 9]]))


@pytest.fixture
def ens_cm():
    return ConfusionMatrix(ENSEMBLE_CM, CLASS_NAMES)


def test_confusion_orientation_example():
    cm = confusion_matrix([0, 1, 1, 0], [0, 1, 0, 1], 2)
    np.testing.assert_array_equal(cm.counts, [[1, 1], [1, 1]])
    cm = confusion_matrix([0, 0, 1], [0, 1, 1], 2)
    assert cm.counts[0, 1] == 1  # predicted 0, actual 1


def test_perfect_predictions_diagonal():
    cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
    np.testing.assert_array_equal(cm.counts, np.diag([1, 1, 2]))


def test_all_predicted_zero_single_row():
    cm = confusion_matrix([0, 0, 0], [0, 1, 2], 3)
    assert cm.counts[1:].sum() == 0


@pytest.mark.parametrize("pred, act", [([0, 1], [0]), ([0, 3], [0, 1]), ([-1, 0], [0, 0])])
def test_confusion_errors(pred, act):
    with pytest.raises(ValueError):
        confusion_matrix(pred, act, 3)


def test_class_counts_small():
    c = class_counts(SMALL, 0)
    assert (c.tp, c.fp, c.fn, c.tn) == (8, 2, 1, 9)


def test_class_counts_ens_cm_benign(ens_cm):
    c = class_counts(ens_cm, 0)
    assert (c.tp, c.fp, c.fn, c.tn) == (1436, 28, 221, 8939)


def test_small_fixture_metrics():
    assert accuracy(SMALL) == 0.85
    assert precision(SMALL, 0) == 0.8
    assert recall(SMALL, 0) == pytest.approx(8 / 9)
    assert f1(SMALL, 0) == pytest.approx(0.8421, abs=1e-4)
    assert specificity(SMALL, 0) == pytest.approx(9 / 11)
    assert classification_report(SMALL).macro_f1 == pytest.approx(0.8496, abs=1e-4)


def test_identity_matrix_all_ones():
    r = classification_report(ConfusionMatrix(np.eye(3, dtype=int) * 5))
    for vals in (r.precision, r.recall, r.f1, r.specificity):
        assert vals == [1.0, 1.0, 1.0]
    assert r.accuracy == 1.0


def test_all_wrong_recall_zero():
    cm = confusion_matrix([1, 1], [0, 0], 2)
    assert recall(cm, 0) == 0.0


def test_empty_matrix_accuracy_raises():
    with pytest.raises(ValueError):
        accuracy(ConfusionMatrix(np.zeros((2, 2), int)))


def test_degenerate_flags():
    cm = ConfusionMatrix(np.array([[3, 0], [0, 0]]))
    assert precision(cm, 1, with_flag=True) == (0.0, True)
    assert recall(cm, 1, with_flag=True) == (0.0, True)
    assert "1:precision" in classification_report(cm).degenerate


def test_ens_cm_reference_cells(ens_cm):
    assert precision(ens_cm, 0) == pytest.approx(1436 / 1464)
    assert precision(ens_cm, 3) == pytest.approx(2564 / 2590)
    assert recall(ens_cm, 0) == pytest.approx(1436 / 1657)
    assert recall(ens_cm, 3) == pytest.approx(2564 / 2589)
    assert f1(ens_cm, 0) == pytest.approx(0.9203, abs=1e-4)
    assert specificity(ens_cm, 0) == pytest.approx(8939 / 8967)


def test_ens_cm_reproduces_ensemble_table(ens_cm):
    r = classification_report(ens_cm)
    assert r.support == ENSEMBLE_SCORES["support"]
    for metric in ("precision", "recall", "f1"):
        for got, want in zip(getattr(r, metric), ENSEMBLE_SCORES[metric]):
            assert abs(got * 100 - want) <= 1.0, (metric, got, want)


def test_ens_cm_overall_accuracy(ens_cm):
    assert accuracy(ens_cm) == pytest.approx(10152 / 10624)


def test_densenet_cm_accuracy():
    assert accuracy(ConfusionMatrix(DENSENET_CM)) == pytest.approx(10547 / 10752)
    assert abs(accuracy(ConfusionMatrix(DENSENET_CM)) * 100 - 98.08) <= 0.02


def test_round_half_up():
    assert round_half_up(0.125, 2) == 0.13
    assert round_half_up(2.5, 0) == 3.0


def test_render_layout(ens_cm):
    text = classification_report(ens_cm).render()
    lines = text.splitlines()
    assert lines[1].startswith("Precision") and "98%" in lines[1]
    assert "Support (N)" in text and "1657" in text


def test_csv_round_trip(ens_cm, tmp_path):
    ens_cm.to_csv(tmp_path / "cm.csv")
    back = ConfusionMatrix.from_csv(tmp_path / "cm.csv")
    np.testing.assert_array_equal(back.counts, ENSEMBLE_CM)
    assert back.class_names == CLASS_NAMES


def test_report_json_has_full_precision(ens_cm, tmp_path):
    import json
    classification_report(ens_cm).to_json(tmp_path / "m.json", seed=3)
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["per_class"]["Benign"]["precision"] == 1436 / 1464 and d["seed"] == 3


# -- properties ---------------------------------------------------------------------

matrices = st.integers(2, 5).flatmap(
    lambda k: arrays(np.int64, (k, k), elements=st.integers(0, 50)).filter(lambda m: m.sum() > 0))


@settings(max_examples=80, deadline=None)
@given(matrices)
def test_count_conservation(m):
    cm = ConfusionMatrix(m)
    for c in range(cm.k):
        assert class_counts(cm, c).total == cm.total


@settings(max_examples=80, deadline=None)
@given(matrices)
def test_rates_and_macro_bounds(m):
    r = classification_report(ConfusionMatrix(m))
    for vals, macro in ((r.precision, r.macro_precision), (r.recall, r.macro_recall), (r.f1, r.macro_f1)):
        assert all(0 <= v <= 1 for v in vals)
        assert min(vals) - 1e-12 <= macro <= max(vals) + 1e-12
    assert r.support == list(m.sum(axis=0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_confusion_counts_pairs(pairs):
    pred, act = zip(*pairs)
    cm = confusion_matrix(pred, act, 4)
    assert cm.total == len(pairs)
    assert accuracy(cm) == sum(p == a for p, a in pairs) / len(pairs)
