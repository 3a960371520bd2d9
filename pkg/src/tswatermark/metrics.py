"""Utility and detectability metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DataError

UNBOUNDED = "unbounded"
DELTA_FLOOR = 1e-12


def _flatten_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pred, (list, tuple)) and pred and np.ndim(pred[0]) >= 1:
        pred = np.concatenate([np.ravel(p) for p in pred])
        truth = np.concatenate([np.ravel(t) for t in truth])
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.size != t.size:
        raise DataError(f"prediction and truth lengths differ ({p.size} vs {t.size})")
    if p.size == 0:
        raise DataError("cannot score empty arrays")
    return p, t


def mse(pred, truth) -> float:
    """Mean squared error over every sample of every window."""
    p, t = _flatten_pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def mae(pred, truth) -> float:
    p, t = _flatten_pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def f1(decisions: Sequence[bool], labels: Sequence[bool]) -> tuple[float, float, float]:
    """``(f1, precision, recall)`` with watermarked as the positive class.

    Any ratio with a zero denominator is reported as 0.
    """
    d = np.asarray(decisions, dtype=bool).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if d.size == 0:
        raise DataError("no decisions to score")
    if d.size != y.size:
        raise DataError(f"decisions and labels lengths differ ({d.size} vs {y.size})")
    tp = int(np.sum(d & y))
    fp = int(np.sum(d & ~y))
    fn = int(np.sum(~d & y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return score, precision, recall


def false_positive_rate(decisions, labels) -> float:
    d = np.asarray(decisions, dtype=bool).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    negatives = int(np.sum(~y))
    return int(np.sum(d & ~y)) / negatives if negatives else 0.0


def f1_over_delta_mse(f1_score: float, mse_wm: float, mse_clean: float) -> float | str:
    """F1 divided by the MSE increase; ``"unbounded"`` when the increase is ~0."""
    delta = mse_wm - mse_clean
    if delta <= DELTA_FLOOR:
        return UNBOUNDED
    return f1_score / delta
