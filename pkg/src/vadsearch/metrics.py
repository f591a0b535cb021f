"""Frame-level detection metrics and boosted prediction aggregation."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def boosted_predictions(window_starts, raw, masks, offsets):
    """Average all context-offset predictions made about each absolute frame.

    window_starts: (W,) absolute start frame per window.
    raw: (W, rows, J) model outputs in [0, 1]; masks: same shape, 1 = valid.
    Returns (frames, scores): sorted absolute frame indices that received at
    least one unmasked prediction, and their mean scores.
    """
    raw = np.asarray(raw, dtype=float)
    masks = np.asarray(masks, dtype=float)
    offsets = np.asarray(offsets, dtype=int)
    w, rows, j = raw.shape
    starts = np.asarray(window_starts, dtype=int)[:, None, None]
    r_idx = np.arange(rows)[None, :, None]
    targets = starts + r_idx + offsets[None, None, :]
    valid = (masks > 0) & (targets >= 0)
    flat_targets = targets[valid]
    flat_scores = raw[valid]
    if flat_targets.size == 0:
        return np.empty(0, dtype=int), np.empty(0)
    n = int(flat_targets.max()) + 1
    sums = np.bincount(flat_targets, weights=flat_scores, minlength=n)
    counts = np.bincount(flat_targets, minlength=n)
    frames = np.nonzero(counts)[0]
    return frames, sums[frames] / counts[frames]


def auc(scores, labels) -> float:
    """Rank-based ROC-AUC (Mann-Whitney with average-rank tie handling)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: both classes must be present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def f1(scores, labels, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pred = scores >= threshold
    truth = labels == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if tp + fp + fn == 0:
        return 0.0
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def metric_report(scores, labels, threshold: float = 0.5,
                  arch_hash: str = "", per_file_counts=None) -> dict:
    return {
        "auc": auc(scores, labels),
        "f1": f1(scores, labels, threshold),
        "threshold": threshold,
        "n_frames": int(len(labels)),
        "n_positive": int(np.sum(np.asarray(labels) == 1)),
        "per_file_counts": per_file_counts or [],
        "arch_hash": arch_hash,
    }


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) points at every distinct threshold, for external plotting."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(labels) == 1
    order = np.argsort(-scores)
    tps = np.cumsum(truth[order])
    fps = np.cumsum(~truth[order])
    n_pos = max(int(truth.sum()), 1)
    n_neg = max(int((~truth).sum()), 1)
    keep = np.nonzero(np.diff(np.append(scores[order], -np.inf)))[0]
    pts = [(0.0, 0.0)]
    pts += [(fps[i] / n_neg, tps[i] / n_pos) for i in keep]
    return pts
