import numpy as np
import pytest

from amcbench import evaluation as ev
from amcbench.errors import ConfigurationError, UndefinedMetricError, UsageError
from amcbench.evaluation import PredictionSet, confusion_matrix, f1_threshold_curve, pr_curve, prf1, roc_auc


def make_preds(labels, probs, snr=None, class_ids=()):
    labels = np.asarray(labels)
    probs = np.asarray(probs, dtype=np.float64)
    snr = np.full(len(labels), 10.0) if snr is None else np.asarray(snr)
    return PredictionSet(labels=labels, probs=probs, snr_db=snr, class_ids=class_ids)


def binary_preds(scores, positive):
    """One-vs-rest fixture: class-1 score s, class-0 score 1-s."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.where(np.asarray(positive), 1, 0)
    probs = np.column_stack([1.0 - scores, scores])
    return make_preds(labels, probs)


def pairwise_auc(scores, positive):
    """Independent ranking oracle: P(score+ > score-) + 0.5 P(tie)."""
    pos = scores[positive]
    neg = scores[~positive]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# confusion matrix


def test_confusion_all_correct_is_diagonal():
    probs = np.eye(4)[[0, 1, 2, 3, 2, 1]] * 0.9 + 0.025
    preds = make_preds([0, 1, 2, 3, 2, 1], probs)
    mat = confusion_matrix(preds)
    assert np.all(mat == np.diag([1, 2, 2, 1]))


def test_confusion_single_misclassification():
    probs = np.zeros((1, 9))
    probs[0, 4] = 1.0
    mat = confusion_matrix(make_preds([3], probs))
    assert mat[3, 4] == 1 and mat.sum() == 1


def test_confusion_hand_case_matches_brute_force():
    rng = np.random.default_rng(0)
    raw = rng.random((4, 3))
    probs = raw / raw.sum(axis=1, keepdims=True)
    labels = np.array([0, 2, 1, 2])
    mat = confusion_matrix(make_preds(labels, probs))
    brute = np.zeros((3, 3), dtype=int)
    for lab, row in zip(labels, probs):
        brute[lab, int(np.argmax(row))] += 1
    assert np.array_equal(mat, brute)


def test_confusion_tie_breaks_to_lowest_id():
    probs = np.array([[0.5, 0.5, 0.0]])
    mat = confusion_matrix(make_preds([1], probs))
    assert mat[1, 0] == 1


def test_confusion_empty_rejected():
    with pytest.raises(UsageError):
        confusion_matrix(make_preds([], np.zeros((0, 3))))


# ---------------------------------------------------------------------------
# precision / recall / F1


def test_prf1_two_class_hand_case():
    confusion = np.array([[8, 2], [3, 7]])
    accuracy, macro_p, macro_r, macro_f1, per_class = prf1(confusion)
    assert accuracy == 0.75
    assert per_class[0].precision == pytest.approx(8 / 11, abs=0)
    assert per_class[0].recall == pytest.approx(0.8, abs=0)
    assert per_class[0].f1 == pytest.approx(16 / 21, abs=1e-15)
    assert macro_f1 == pytest.approx((per_class[0].f1 + per_class[1].f1) / 2)


def test_prf1_perfect_matrix():
    accuracy, macro_p, macro_r, macro_f1, per_class = prf1(np.diag([5] * 9))
    assert accuracy == macro_p == macro_r == macro_f1 == 1.0
    assert all(m.f1 == 1.0 and not m.degenerate for m in per_class)


def test_prf1_single_class_predictions_flags_degenerate():
    confusion = np.array([[4, 0, 0], [3, 0, 0], [2, 0, 0]])
    accuracy, _, _, _, per_class = prf1(confusion)
    assert per_class[0].recall == 1.0
    assert per_class[1].recall == 0.0 and per_class[2].recall == 0.0
    assert per_class[1].degenerate and per_class[2].degenerate


def test_macro_f1_bounded_by_per_class():
    rng = np.random.default_rng(1)
    for _ in range(20):
        confusion = rng.integers(0, 10, size=(4, 4))
        confusion += np.diag(rng.integers(1, 10, size=4))  # every class present
        _, _, _, macro_f1, per_class = prf1(confusion)
        f1s = [m.f1 for m in per_class]
        assert min(f1s) <= macro_f1 <= max(f1s)


# ---------------------------------------------------------------------------
# ROC / AUC


def test_roc_perfectly_separated():
    preds = binary_preds([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
    points, _, auc = roc_auc(preds, 1)
    assert auc == 1.0
    assert points[0].tolist() == [0.0, 0.0] and points[-1].tolist() == [1.0, 1.0]


def test_roc_all_ties_is_half():
    preds = binary_preds([0.5] * 6, [True, True, True, False, False, False])
    _, _, auc = roc_auc(preds, 1)
    assert auc == 0.5


def test_roc_six_sample_hand_case():
    scores = np.array([0.9, 0.7, 0.7, 0.4, 0.3, 0.1])
    positive = np.array([True, True, False, False, True, False])
    preds = binary_preds(scores, positive)
    _, _, auc = roc_auc(preds, 1)
    assert abs(auc - pairwise_auc(scores, positive)) < 1e-12


def test_roc_matches_pairwise_oracle_random_sets():
    rng = np.random.default_rng(2)
    for trial in range(30):
        n = int(rng.integers(5, 200))
        scores = rng.random(n)
        if trial % 3 == 0:
            scores = np.round(scores, 1)  # force tie blocks
        positive = rng.random(n) < 0.4
        if positive.all() or not positive.any():
            continue
        preds = binary_preds(scores, positive)
        _, _, auc = roc_auc(preds, 1)
        assert abs(auc - pairwise_auc(scores, positive)) < 1e-9


def test_roc_monotone_and_bounded():
    rng = np.random.default_rng(3)
    scores = np.round(rng.random(60), 1)
    positive = rng.random(60) < 0.5
    points, thresholds, auc = roc_auc(binary_preds(scores, positive), 1)
    assert np.all(np.diff(points[:, 0]) >= 0)
    assert np.all(np.diff(points[:, 1]) >= 0)
    assert 0.0 <= auc <= 1.0
    assert thresholds[0] == np.inf


def test_roc_single_class_rejected():
    preds = binary_preds([0.9, 0.8], [True, True])
    with pytest.raises(UndefinedMetricError):
        roc_auc(preds, 1)


# ---------------------------------------------------------------------------
# PR and F1 curves


def test_pr_perfect_classifier_full_precision():
    preds = binary_preds([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
    points, thresholds = pr_curve(preds, 1)
    for (recall, precision), theta in zip(points, thresholds):
        if theta > 0.2:  # every achievable recall before noise scores enter
            assert precision == 1.0
    # threshold 0 -> everything predicted positive -> recall 1
    assert points[thresholds == 0.0][0][0] == 1.0


def test_pr_includes_0_and_1_endpoints():
    preds = binary_preds([0.6, 0.4], [True, False])
    _, thresholds = pr_curve(preds, 1)
    assert 0.0 in thresholds and 1.0 in thresholds


def test_pr_hand_recount():
    scores = np.array([0.8, 0.6, 0.6, 0.3, 0.2])
    positive = np.array([True, False, True, True, False])
    preds = binary_preds(scores, positive)
    points, thresholds = pr_curve(preds, 1)
    for (recall, precision), theta in zip(points, thresholds):
        predicted = scores >= theta
        tp = int((predicted & positive).sum())
        expect_p = 1.0 if predicted.sum() == 0 else tp / predicted.sum()
        assert precision == expect_p
        assert recall == tp / positive.sum()


def test_f1_threshold_hand_recount():
    scores = np.array([0.9, 0.5, 0.5, 0.2])
    positive = np.array([True, True, False, False])
    preds = binary_preds(scores, positive)
    thresholds, f1s = f1_threshold_curve(preds, 1)
    for theta, f1 in zip(thresholds, f1s):
        predicted = scores >= theta
        tp = int((predicted & positive).sum())
        p = 1.0 if predicted.sum() == 0 else tp / predicted.sum()
        r = tp / positive.sum()
        expect = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        assert f1 == pytest.approx(expect, abs=1e-15)


# ---------------------------------------------------------------------------
# full report


@pytest.fixture(scope="module")
def rich_preds():
    rng = np.random.default_rng(4)
    n, c = 90, 9
    labels = rng.integers(0, c, size=n)
    raw = rng.random((n, c)) + np.eye(c)[labels] * 2  # informative but imperfect
    probs = raw / raw.sum(axis=1, keepdims=True)
    snr = rng.choice([0.0, 10.0, 20.0], size=n)
    return make_preds(labels, probs, snr=snr)


def test_compute_report_fields(rich_preds):
    report = ev.compute_report(rich_preds)
    assert report.confusion.sum() == 90
    assert report.accuracy == np.trace(report.confusion) / 90
    assert len(report.per_class) == 9
    assert set(report.roc) == set(range(9))
    assert not report.skipped_classes
    assert sum(count for _, count, _ in report.per_snr) == 90


def test_report_files_deterministic(rich_preds, tmp_path):
    report = ev.compute_report(rich_preds)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    ev.write_report_files(report, dir_a)
    ev.write_report_files(report, dir_b)
    files = sorted(p.name for p in dir_a.iterdir())
    assert files == ["confusion.csv", "f1.csv", "f1_threshold.svg", "metrics.csv",
                     "pr.csv", "pr.svg", "roc.csv", "roc.svg", "snr_accuracy.csv"]
    for name in files:
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_report_skips_absent_classes():
    probs = np.full((4, 3), 1 / 3)
    report = ev.compute_report(make_preds([0, 0, 1, 1], probs))
    assert len(report.skipped_classes) == 1  # class 2 has no positives


def test_evaluate_rejects_empty_split():
    with pytest.raises(ConfigurationError):
        ev.evaluate(None, [])
