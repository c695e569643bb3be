"""Metrics, stratified cross-validation, and hyperparameter grids."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    accuracy: float | None = None
    auc: float | None = None
    per_fold_values: list = field(default_factory=list)


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) == 0:
        raise ValueError("empty input")
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    return float(np.mean(predictions == labels))


def auc(scores, labels) -> float:
    """Exact area under the ROC curve via the rank statistic:
    P(score+ > score-) + 0.5 P(tie), ties handled by average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    # average ranks over tie groups
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[pos].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


DEFAULT_CS = tuple(10.0**e for e in np.arange(-1.0, 2.01, 0.5))


@dataclass
class Grid:
    """Hyperparameter grid: regularization constants, norm exponents,
    evenness targets (linearly spaced over an interval by default), and
    cluster counts."""

    Cs: tuple = DEFAULT_CS
    ps: tuple = (1.0, 1.33, 2.0)
    evenness: tuple = ()
    ls: tuple = (3,)
    evenness_interval: tuple = (0.4, 0.7)
    evenness_points: int = 8

    def __post_init__(self):
        if not self.evenness:
            lo, hi = self.evenness_interval
            self.evenness = tuple(np.linspace(lo, hi, self.evenness_points))
        if not (self.Cs and self.ps and self.evenness and self.ls):
            raise ValueError("grid axes must be nonempty")
        for l in self.ls:
            if l == 1:
                continue  # single cluster ignores the evenness axis
            for e in self.evenness:
                if not (1.0 / l < e <= 1.0):
                    raise ValueError(
                        f"evenness {e} outside achievable range (1/{l}, 1]"
                    )

    def points(self):
        """Fixed iteration order: C outermost, then p, evenness, l."""
        for C in self.Cs:
            for p in self.ps:
                for e in self.evenness:
                    for l in self.ls:
                        yield {"C": C, "p": p, "evenness": e, "l": l}


def stratified_folds(labels, folds: int, rng) -> list:
    """Per-class round-robin fold assignment; returns a list of
    (train_idx, val_idx) pairs."""
    labels = np.asarray(labels)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < folds:
        warnings.warn(
            f"a class has only {counts.min()} members for {folds} folds; "
            "some validation folds will not contain it",
            stacklevel=2,
        )
    fold_of = np.empty(len(labels), dtype=int)
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = np.arange(len(idx)) % folds
    out = []
    for f in range(folds):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, val))
    return out


@dataclass
class CvRow:
    point: dict
    fold: int
    metric_value: float


@dataclass
class CvResult:
    best_point: dict
    report: MetricReport
    rows: list


def cross_validate(
    kernel_matrices,
    labels,
    grid: Grid,
    folds: int,
    seed: int,
    fit_and_score,
) -> CvResult:
    """Select the grid point with the best mean validation metric.

    fit_and_score(point, train_idx, val_idx, fold_seed) -> float does the
    real work (training on the slice, scoring on the held-out slice), so the
    trainer and metric stay pluggable. Ties break toward smaller C, then
    smaller p, then grid order. Clustering, calibration, and normalization
    happen inside fit_and_score on the training slice only.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    split = stratified_folds(labels, folds, rng)

    rows = []
    summary = []
    for order, point in enumerate(grid.points()):
        values = []
        for f, (train_idx, val_idx) in enumerate(split):
            value = fit_and_score(point, train_idx, val_idx, _fold_seed(seed, f))
            rows.append(CvRow(dict(point), f, value))
            values.append(value)
        summary.append((point, float(np.mean(values)), values, order))

    best = min(summary, key=lambda s: (-s[1], s[0]["C"], s[0]["p"], s[3]))
    report = MetricReport(accuracy=best[1], per_fold_values=best[2])
    return CvResult(dict(best[0]), report, rows)


def _fold_seed(seed: int, fold: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(1, fold))
