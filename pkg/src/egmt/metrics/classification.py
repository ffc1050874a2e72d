"""Multi-label classification metrics.

Scores are per-class probabilities, labels are 0/1 vectors.  Ties in
score comparisons count half, so the pairwise quantities (ranking loss,
ROC area) are symmetric under relabeling.  Classes without a positive
example (or without a negative one, for ROC) cannot be evaluated and
are excluded with a warning rather than silently contributing zeros.
"""

from __future__ import annotations

import warnings

import numpy as np

__all__ = ["classification_metrics", "CLASSIFICATION_METRICS"]

CLASSIFICATION_METRICS = ["HL", "RL", "mAP", "AUC", "JI", "F1"]


def _stack(values, name: str) -> np.ndarray:
    rows = [np.asarray(getattr(v, "data", v), dtype=np.float64).reshape(-1) for v in values]
    if not rows:
        raise ValueError(f"empty {name} list")
    width = rows[0].size
    if any(r.size != width for r in rows):
        raise ValueError(f"inconsistent {name} lengths")
    return np.stack(rows)


def _ranking_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    per_sample = []
    for s, y in zip(scores, labels):
        pos = s[y == 1]
        neg = s[y == 0]
        if pos.size == 0 or neg.size == 0:
            continue
        diff = pos[:, None] - neg[None, :]
        mis = np.sum(diff < 0) + 0.5 * np.sum(diff == 0)
        per_sample.append(mis / (pos.size * neg.size))
    return float(np.mean(per_sample)) if per_sample else 0.0


def _average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, ranked.size + 1)
    return float(np.sum(precision * ranked) / hits[-1])


def _roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(wins / (pos.size * neg.size))


def classification_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """HL, RL, mAP, AUC, JI, F1 over equal-length score/label lists.

    HL, RL are lower-is-better in [0, 1]; the rest higher-is-better.
    """
    s = _stack(scores, "score")
    y = _stack(labels, "label")
    if s.shape != y.shape:
        raise ValueError(f"score shape {s.shape} != label shape {y.shape}")
    y = (y > 0.5).astype(np.float64)
    pred = (s >= threshold).astype(np.float64)

    hl = float(np.mean(pred != y))
    rl = _ranking_loss(s, y)

    ap_values, auc_values = [], []
    no_pos, one_sided = [], []
    for c in range(s.shape[1]):
        n_pos = int(y[:, c].sum())
        n_neg = y.shape[0] - n_pos
        if n_pos == 0:
            no_pos.append(c)
        else:
            ap_values.append(_average_precision(s[:, c], y[:, c]))
        if n_pos == 0 or n_neg == 0:
            if n_pos > 0:
                one_sided.append(c)
            continue
        auc_values.append(_roc_auc(s[:, c], y[:, c]))
    if no_pos or one_sided:
        warnings.warn(
            f"degenerate classes excluded: {no_pos} without positives "
            f"(skipped in mAP and AUC), {one_sided} without negatives "
            "(skipped in AUC)",
            stacklevel=2,
        )
    if not ap_values or not auc_values:
        raise ValueError("every class is degenerate; mAP and AUC undefined")

    intersection = np.sum((pred == 1) & (y == 1), axis=1)
    union = np.sum((pred == 1) | (y == 1), axis=1)
    ji = float(np.mean(np.where(union > 0, intersection / np.maximum(union, 1), 1.0)))

    tp = float(np.sum((pred == 1) & (y == 1)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))
    f1 = 1.0 if tp + fp + fn == 0 else 2.0 * tp / (2.0 * tp + fp + fn)

    return {
        "HL": hl,
        "RL": rl,
        "mAP": float(np.mean(ap_values)),
        "AUC": float(np.mean(auc_values)),
        "JI": ji,
        "F1": f1,
    }
