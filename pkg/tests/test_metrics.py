import numpy as np
import pytest

from vadsearch.metrics import auc, boosted_predictions, f1, metric_report, roc_points


def quadratic_auc(scores, labels):
    scores = np.asarray(scores, dtype=float)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_trivial():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0


def test_auc_all_ties():
    assert auc([0.5] * 10, [1, 0] * 5) == 0.5


def test_auc_single_class():
    with pytest.raises(ValueError, match="undefined"):
        auc([0.1, 0.9], [1, 1])


def test_auc_matches_quadratic_oracle():
    rng = np.random.default_rng(0)
    scores = np.round(rng.uniform(0, 1, 200), 2)  # rounding forces ties
    labels = rng.integers(0, 2, 200)
    while labels.sum() in (0, 200):
        labels = rng.integers(0, 2, 200)
    assert auc(scores, labels) == pytest.approx(quadratic_auc(scores, labels),
                                                abs=1e-12)


def test_auc_monotone_transform_invariant():
    rng = np.random.default_rng(1)
    scores = rng.uniform(0, 1, 100)
    labels = rng.integers(0, 2, 100)
    assert auc(scores, labels) == pytest.approx(
        auc(np.exp(3 * scores), labels), abs=1e-12)


def test_f1_cases():
    assert f1([0.9, 0.1], [1, 0]) == 1.0
    # TP=1, FP=1, FN=0
    assert f1([0.9, 0.9], [1, 0]) == pytest.approx(2 / 3)
    assert f1([0.1, 0.1], [1, 0]) == 0.0


def test_f1_confusion_matrix_oracle():
    rng = np.random.default_rng(2)
    scores = rng.uniform(0, 1, 300)
    labels = rng.integers(0, 2, 300)
    pred = scores >= 0.5
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    expected = 2 * precision * recall / (precision + recall)
    assert f1(scores, labels) == pytest.approx(expected, abs=1e-12)


def test_boosted_identity_with_zero_offset():
    raw = np.random.default_rng(3).uniform(0, 1, (2, 5, 1))
    masks = np.ones_like(raw)
    frames, scores = boosted_predictions([0, 5], raw, masks, [0])
    assert np.array_equal(frames, np.arange(10))
    assert np.allclose(scores, raw.reshape(-1))


def test_boosted_constant_invariance():
    raw = np.full((3, 4, 7), 0.7)
    masks = np.ones_like(raw)
    frames, scores = boosted_predictions([0, 4, 8], raw, masks,
                                         [-19, -10, -1, 0, 1, 10, 19])
    assert np.allclose(scores, 0.7)


def test_boosted_matches_accumulation_oracle():
    rng = np.random.default_rng(4)
    offsets = [-19, -10, -1, 0, 1, 10, 19]
    raw = rng.uniform(0, 1, (2, 6, 7))
    masks = (rng.uniform(0, 1, raw.shape) > 0.3).astype(float)
    starts = [0, 6]
    frames, scores = boosted_predictions(starts, raw, masks, offsets)
    acc: dict[int, list[float]] = {}
    for w in range(2):
        for r in range(6):
            for j, off in enumerate(offsets):
                if masks[w, r, j]:
                    acc.setdefault(starts[w] + r + off, []).append(raw[w, r, j])
    expected = {u: float(np.mean(v)) for u, v in acc.items() if u >= 0}
    got = dict(zip(frames.tolist(), scores.tolist()))
    # frames with negative absolute index never arise from valid masks here,
    # but guard the comparison anyway
    assert got == pytest.approx({u: s for u, s in expected.items()})


def test_boosted_bounds():
    rng = np.random.default_rng(5)
    raw = rng.uniform(0.2, 0.8, (2, 5, 3))
    masks = np.ones_like(raw)
    _, scores = boosted_predictions([0, 5], raw, masks, [-1, 0, 1])
    assert scores.min() >= raw.min() - 1e-12
    assert scores.max() <= raw.max() + 1e-12


def test_metric_report_fields():
    report = metric_report([0.9, 0.1, 0.8], [1, 0, 1], arch_hash="abc")
    assert set(report) >= {"auc", "f1", "threshold", "n_frames", "arch_hash"}
    assert report["n_positive"] == 2


def test_roc_points_endpoints():
    pts = roc_points([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
    assert pts[0] == (0.0, 0.0)
    assert pts[-1] == (1.0, 1.0)
    fprs = [p[0] for p in pts]
    assert fprs == sorted(fprs)
