"""Fold metrics (accuracy, weighted F1, weighted AUC_PR), fold aggregation and Friedman/Nemenyi tests."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

METRICS = ("accuracy", "f1", "auc_pr")

# Nemenyi critical values q_0.05 (studentized range / sqrt 2, infinite df), keyed by treatment count
NEMENYI_Q05 = {
    2: 1.960, 3: 2.344, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.948, 8: 3.031, 9: 3.102, 10: 3.164,
    11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354, 15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489,
    19: 3.517, 20: 3.544,
}  # fmt: skip


@dataclass(frozen=True)
class FoldResult:
    fold: int
    accuracy: float
    f1: float
    auc_pr: float
    epochs: int = 0
    val_loss: float = float("nan")
    support: dict[str, int] = field(default_factory=dict)


def average_precision(scores: np.ndarray, positive: np.ndarray) -> float:
    """Step-wise AP: sum over distinct score thresholds of (R_n - R_{n-1}) * P_n."""
    n_pos = positive.sum()
    if n_pos == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(positive[order])
    # last index of every run of tied scores
    cut = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    precision = tp[cut] / (cut + 1)
    recall = tp[cut] / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def compute_metrics(
    probs: np.ndarray, targets: np.ndarray, classes: Sequence[str] | None = None, fold: int = 0
) -> FoldResult:
    """Accuracy plus support-weighted F1 and average precision.

    ``targets`` is one-hot. Argmax ties resolve to the lowest class index;
    classes without test support get zero weight.
    """
    probs = np.asarray(probs, dtype=float)
    targets = np.asarray(targets)
    if probs.shape != targets.shape:
        raise ValueError(f"probability shape {probs.shape} != label shape {targets.shape}")
    if len(probs) == 0:
        raise ValueError("empty test set")
    n, v = probs.shape
    classes = tuple(classes) if classes is not None else tuple(str(i) for i in range(v))
    true = targets.argmax(axis=1)
    pred = probs.argmax(axis=1)
    support = np.bincount(true, minlength=v)
    weights = support / n

    f1 = np.zeros(v)
    ap = np.zeros(v)
    for c in range(v):
        if support[c] == 0:
            continue
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = support[c] - tp
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn)
        f1[c] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        ap[c] = average_precision(probs[:, c], true == c)
    return FoldResult(
        fold=fold,
        accuracy=float(np.mean(pred == true)),
        f1=float(weights @ f1),
        auc_pr=float(weights @ ap),
        support={classes[c]: int(support[c]) for c in range(v)},
    )


@dataclass(frozen=True)
class MetricSet:
    mean: dict[str, float]
    std: dict[str, float]
    n_folds: int


def aggregate_folds(results: Sequence[FoldResult]) -> MetricSet:
    """Mean and population standard deviation of each metric over folds."""
    if not results:
        raise ValueError("no fold results to aggregate")
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in results], dtype=float)
        mean[m] = float(np.mean(vals))
        std[m] = float(np.std(vals))
    return MetricSet(mean, std, len(results))


def within_block_ranks(scores: np.ndarray) -> np.ndarray:
    """Rank treatments inside each row, 1 = highest score, ties share the average rank."""
    return np.vstack([stats.rankdata(-row, method="average") for row in np.asarray(scores, dtype=float)])


def _check_matrix(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] < 2 or scores.shape[1] < 2:
        raise ValueError(f"need at least 2 blocks x 2 treatments, got shape {scores.shape}")
    return scores


def friedman_test(scores) -> tuple[float, float]:
    """Friedman chi-square over ``n`` blocks (rows) and ``k`` treatments (columns)."""
    scores = _check_matrix(scores)
    n, k = scores.shape
    if np.all(scores == scores[:, :1]):
        return 0.0, 1.0
    mean_ranks = within_block_ranks(scores).mean(axis=0)
    stat = 12 * n / (k * (k + 1)) * (np.sum(mean_ranks**2) - k * (k + 1) ** 2 / 4)
    stat = max(float(stat), 0.0)
    return stat, float(stats.chi2.sf(stat, k - 1))


@dataclass(frozen=True, eq=False)
class SignificanceReport:
    treatments: tuple[str, ...]
    statistic: float
    p_value: float
    mean_ranks: np.ndarray
    rank_diff: np.ndarray  # k x k, |mean rank i - mean rank j|
    significant: np.ndarray  # k x k booleans
    critical_difference: float
    alpha: float = 0.05

    def pairs(self):
        k = len(self.treatments)
        for i in range(k):
            for j in range(i + 1, k):
                yield i, j


def critical_difference(k: int, n: int) -> float:
    if k not in NEMENYI_Q05:
        raise ValueError(f"no Nemenyi critical value for {k} treatments (supported: 2..20)")
    return NEMENYI_Q05[k] * np.sqrt(k * (k + 1) / (6.0 * n))


def nemenyi_test(scores, treatments: Sequence[str] | None = None) -> SignificanceReport:
    """Friedman test plus Nemenyi pairwise comparison at alpha = 0.05."""
    scores = _check_matrix(scores)
    n, k = scores.shape
    cd = critical_difference(k, n)
    stat, p = friedman_test(scores)
    mean_ranks = within_block_ranks(scores).mean(axis=0)
    diff = np.abs(mean_ranks[:, None] - mean_ranks[None, :])
    names = tuple(treatments) if treatments is not None else tuple(f"t{j}" for j in range(k))
    return SignificanceReport(names, stat, p, mean_ranks, diff, diff > cd, float(cd))


def load_score_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a CSV whose header names the treatments and whose rows are blocks."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    return header, np.array([[float(v) for v in r] for r in body])
