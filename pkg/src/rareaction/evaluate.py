"""Metrics and evaluation harnesses.

Conventions for degenerate denominators are fixed here once: precision is 0
when nothing was predicted positive, recall is 0 when nothing is positive,
F1 is 0 when precision + recall is 0, and a per-video interval precision is
0 when no interval was predicted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import InvalidInputError, MetricError


@dataclass
class BinaryConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InvalidInputError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, predicted, labels) -> "BinaryConfusion":
        predicted = np.asarray(predicted).astype(bool).reshape(-1)
        labels = np.asarray(labels).astype(bool).reshape(-1)
        if predicted.shape != labels.shape:
            raise InvalidInputError("predictions and labels differ in length")
        return cls(
            tp=int((predicted & labels).sum()),
            fp=int((predicted & ~labels).sum()),
            tn=int((~predicted & ~labels).sum()),
            fn=int((~predicted & labels).sum()),
        )


def confusion_metrics(conf: BinaryConfusion) -> dict[str, float]:
    if conf.total == 0:
        raise InvalidInputError("confusion matrix is empty")
    precision = conf.tp / (conf.tp + conf.fp) if conf.tp + conf.fp else 0.0
    recall = conf.tp / (conf.tp + conf.fn) if conf.tp + conf.fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return {
        "accuracy": (conf.tp + conf.tn) / conf.total,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def roc_auc(scores, labels) -> dict:
    """ROC curve at every unique score threshold, AUC by trapezoid.

    Predicting positive means score >= threshold.  With ties this equals the
    Mann-Whitney U statistic normalized by n_pos * n_neg.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC AUC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(~sorted_labels)
    # keep one operating point per unique score (the last row of each tie group)
    last_of_group = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = np.r_[0.0, tp[last_of_group] / n_pos]
    fpr = np.r_[0.0, fp[last_of_group] / n_neg]
    auc = float(np.trapezoid(tpr, fpr))
    return {"fpr": fpr, "tpr": tpr, "thresholds": np.r_[np.inf, sorted_scores[last_of_group]], "auc": auc}


@dataclass
class BootstrapReport:
    """Mean/spread of a metric over seeded resamples of the test set."""

    resamples: int
    sample_size: int
    values: list[float]
    mean: float
    std: float
    half_width_95: float
    redraws: int = 0

    def __post_init__(self):
        if len(self.values) != self.resamples:
            raise InvalidInputError(
                f"{len(self.values)} values stored for {self.resamples} resamples"
            )
        arr = np.asarray(self.values, dtype=np.float64)
        if abs(arr.mean() - self.mean) > 1e-12 or abs(arr.std() - self.std) > 1e-12:
            raise InvalidInputError("stored mean/std inconsistent with values")

    def to_json(self) -> dict:
        return {
            "resamples": self.resamples,
            "sample_size": self.sample_size,
            "mean": self.mean,
            "std": self.std,
            "half_width_95": self.half_width_95,
            "redraws": self.redraws,
            "values": self.values,
        }


def _default_resampler(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def bootstrap(
    metric,
    data,
    resamples: int = 100,
    seed: int = 0,
    resampler=None,
    max_redraws_per_resample: int = 100,
) -> BootstrapReport:
    """Resample ``data`` with replacement and evaluate ``metric`` per resample.

    ``data`` is an indexable sequence; each resample has len(data) items.
    Resample i draws from its own generator seeded with seed + i, so
    resamples are independent of evaluation order.  A resample on which the
    metric is undefined (MetricError) is re-drawn and the re-draw is counted.
    ``std`` is the population standard deviation of the resample values.
    """
    n = len(data)
    if n == 0:
        raise InvalidInputError("cannot bootstrap an empty test set")
    draw = resampler if resampler is not None else _default_resampler
    values = []
    redraws = 0
    for i in range(resamples):
        rng = np.random.default_rng(seed + i)
        for attempt in range(max_redraws_per_resample + 1):
            idx = draw(rng, n)
            sample = [data[int(j)] for j in idx]
            try:
                values.append(float(metric(sample)))
                break
            except MetricError:
                redraws += 1
        else:
            raise MetricError(
                f"resample {i}: metric undefined after {max_redraws_per_resample} re-draws"
            )
    arr = np.asarray(values)
    std = float(arr.std())
    return BootstrapReport(
        resamples=resamples,
        sample_size=n,
        values=values,
        mean=float(arr.mean()),
        std=std,
        half_width_95=1.96 * std,
        redraws=redraws,
    )


@dataclass(frozen=True)
class TimeInterval:
    start: float
    end: float

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise InvalidInputError(
                f"need 0 <= start < end, got [{self.start}, {self.end}]"
            )

    @property
    def length(self) -> float:
        return self.end - self.start


def t_iou(a: TimeInterval, b: TimeInterval) -> float:
    """Temporal intersection over union of two intervals, in [0, 1]."""
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.length + b.length - inter
    return inter / union


def match_intervals(
    predicted: list[TimeInterval], truths: list[TimeInterval]
) -> list[tuple[float, int | None]]:
    """Greedy one-to-one matching, highest t-IoU first.

    Returns, per predicted interval, (best matched t-IoU, truth index) or
    (0.0, None) when nothing remained to match.  Each truth matches at most
    one prediction.
    """
    pairs = sorted(
        (
            (t_iou(p, t), pi, ti)
            for pi, p in enumerate(predicted)
            for ti, t in enumerate(truths)
        ),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    result: list[tuple[float, int | None]] = [(0.0, None)] * len(predicted)
    used_pred, used_truth = set(), set()
    for iou, pi, ti in pairs:
        if iou <= 0.0:
            break
        if pi in used_pred or ti in used_truth:
            continue
        result[pi] = (iou, ti)
        used_pred.add(pi)
        used_truth.add(ti)
    return result


def detection_ap(videos, threshold: float) -> dict:
    """Mean over videos of per-video interval precision at a t-IoU threshold.

    ``videos`` is a sequence of (predicted intervals, true intervals) pairs;
    every video must have at least one true interval.  A prediction is
    correct iff its greedy match reaches the threshold; per-video precision
    is correct/predicted with 0/0 -> 0.
    """
    if not 0.0 < threshold <= 1.0:
        raise InvalidInputError(f"t-IoU threshold must be in (0, 1], got {threshold}")
    if len(videos) == 0:
        raise InvalidInputError("detection AP needs at least one video")
    precisions = []
    for predicted, truths in videos:
        if not truths:
            raise InvalidInputError("every video needs at least one true interval")
        if not predicted:
            precisions.append(0.0)
            continue
        matches = match_intervals(list(predicted), list(truths))
        correct = sum(1 for iou, ti in matches if ti is not None and iou >= threshold)
        precisions.append(correct / len(predicted))
    return {"ap_mean": float(np.mean(precisions)), "per_video_precision": precisions}


def average_precision(scores, labels) -> float:
    """Non-interpolated ranking AP for one class.

    Sum over descending-score ranks of (recall step) * (precision at rank),
    i.e. the mean of the precision at each positive hit.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.arange(1, len(hits) + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits].sum() / n_pos)


def multilabel_map(scores, labels) -> dict:
    """Per-class ranking AP and their unweighted mean.

    Classes without a positive sample are excluded from the mean and listed
    under ``skipped_classes``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise InvalidInputError(
            f"expected matching (n, C) matrices, got {scores.shape} and {labels.shape}"
        )
    per_class: dict[int, float] = {}
    skipped = []
    for c in range(scores.shape[1]):
        if labels[:, c].any():
            per_class[c] = average_precision(scores[:, c], labels[:, c])
        else:
            skipped.append(c)
    if not per_class:
        raise MetricError("no class has a positive sample; mAP is undefined")
    return {
        "per_class_ap": per_class,
        "map": float(np.mean(list(per_class.values()))),
        "skipped_classes": skipped,
    }


def pool_sparse_classes(
    sample_counts: np.ndarray, population_counts: np.ndarray, min_expected: float = 5.0
):
    """Pool classes whose expected count falls below ``min_expected`` into one
    trailing bucket; returns (pooled sample counts, pooled expected counts)."""
    sample_counts = np.asarray(sample_counts, dtype=np.float64)
    population_counts = np.asarray(population_counts, dtype=np.float64)
    n = sample_counts.sum()
    expected = n * population_counts / population_counts.sum()
    keep = expected >= min_expected
    pooled_sample = list(sample_counts[keep])
    pooled_expected = list(expected[keep])
    if (~keep).any():
        pooled_sample.append(sample_counts[~keep].sum())
        pooled_expected.append(expected[~keep].sum())
    return np.asarray(pooled_sample), np.asarray(pooled_expected)


def chi2_homogeneity(sample_counts, population_counts) -> dict:
    """Pearson chi-square of a sample against pooled population proportions.

    The p-value is the regularized upper incomplete gamma function
    Q(df/2, statistic/2).  Classes with expected count < 5 are pooled into
    an "other" bucket first.
    """
    sample_counts = np.asarray(sample_counts, dtype=np.float64)
    population_counts = np.asarray(population_counts, dtype=np.float64)
    if sample_counts.shape != population_counts.shape or sample_counts.size == 0:
        raise InvalidInputError("count vectors must be non-empty and share one index space")
    if sample_counts.sum() == 0 or population_counts.sum() == 0:
        raise InvalidInputError("count vectors must not be all zero")
    observed, expected = pool_sparse_classes(sample_counts, population_counts)
    if (expected == 0).any():
        raise MetricError("zero expected count survived pooling")
    statistic = float(((observed - expected) ** 2 / expected).sum())
    df = len(observed) - 1
    if df == 0:
        return {"statistic": statistic, "df": 0, "p_value": 1.0}
    p = float(gammaincc(df / 2.0, statistic / 2.0))
    return {"statistic": statistic, "df": df, "p_value": p}


def bootstrap_binary_report(
    predicted, labels, scores=None, resamples: int = 100, seed: int = 0
) -> dict[str, BootstrapReport]:
    """Bootstrapped accuracy/precision/recall/F1 (and AUC when scores given)."""
    predicted = np.asarray(predicted).astype(bool).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    data = list(range(len(labels)))

    def metric_for(name):
        def metric(idx):
            idx = np.asarray(idx, dtype=int)
            return confusion_metrics(
                BinaryConfusion.from_predictions(predicted[idx], labels[idx])
            )[name]

        return metric

    reports = {
        name: bootstrap(metric_for(name), data, resamples=resamples, seed=seed)
        for name in ("accuracy", "precision", "recall", "f1")
    }
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)

        def auc_metric(idx):
            idx = np.asarray(idx, dtype=int)
            return roc_auc(scores[idx], labels[idx])["auc"]

        reports["roc_auc"] = bootstrap(auc_metric, data, resamples=resamples, seed=seed)
    return reports


def summary_table(reports: dict[str, BootstrapReport]) -> str:
    """Plain-text summary: one metric per row, mean +/- 1.96 std, percent."""
    lines = [f"{'metric':<12} {'mean':>8}    {'95% half-width':>14}"]
    for name, rep in reports.items():
        lines.append(
            f"{name:<12} {100 * rep.mean:7.2f}%   +/- {100 * rep.half_width_95:7.2f}%"
        )
    return "\n".join(lines)
