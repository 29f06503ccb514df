"""Grouped 3-fold cross-validation over the hyperparameter grid.

Grid: hidden_layers x dropout x learning_rate (4 x 3 x 3 = 36 configs by
default).  Binary heads are selected by mean held-out ROC AUC, multi-label
heads by mean held-out mAP.  Clips cut from one source video always land in
the same fold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classify, evaluate
from .classify import ClassifierHead, HeadConfig
from .errors import DataError, FoldError, InvalidInputError, StratificationError

BINARY = "binary"
MULTILABEL = "multilabel"


@dataclass
class LabeledFeatures:
    """Feature matrix plus labels and leakage groups, aligned by row."""

    x: np.ndarray  # (n, input_dim) float64
    y: np.ndarray  # (n, C) 0/1
    ids: list[str]
    groups: list[str]
    label_space: list[str]
    task: str = BINARY

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        n = self.x.shape[0]
        if self.y.shape[0] != n or len(self.ids) != n or len(self.groups) != n:
            raise InvalidInputError("features, labels, ids and groups must align")
        if self.task not in (BINARY, MULTILABEL):
            raise InvalidInputError(f"unknown task {self.task!r}")
        if self.task == BINARY and self.y.shape[1] != 1:
            raise InvalidInputError("binary task expects a single label column")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.y.shape[1]

    def subset(self, idx) -> "LabeledFeatures":
        idx = np.asarray(idx, dtype=int)
        return LabeledFeatures(
            x=self.x[idx],
            y=self.y[idx],
            ids=[self.ids[i] for i in idx],
            groups=[self.groups[i] for i in idx],
            label_space=self.label_space,
            task=self.task,
        )

    def training_weights(self) -> np.ndarray:
        """Per-sample weights: class weights for binary, max-class-weight
        sample weights (epsilon-smoothed) for multi-label."""
        if self.task == BINARY:
            pos = int(self.y[:, 0].sum())
            neg = self.n - pos
            if pos == 0 or neg == 0:
                raise DataError("binary training data must contain both classes")
            w = classify.class_weights([neg, pos])
            return np.where(self.y[:, 0] > 0, w[1], w[0])
        counts = self.y.sum(axis=0)
        w = classify.class_weights(
            counts, n_total=self.n, smoothing=classify.MULTILABEL_SMOOTHING
        )
        return classify.sample_weights(self.y > 0, w)


@dataclass
class FeatureScaler:
    """Per-dimension standardization fitted on the train split.

    Raw backbone statistics can sit far from the unit scale the head's
    hyperparameter grid targets; training on standardized features keeps the
    whole grid in a sane regime.  Constant dimensions pass through unscaled.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "FeatureScaler":
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=x.mean(axis=0), std=std)

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureScaler":
        return cls(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
        )


@dataclass(frozen=True)
class CvPlan:
    folds: int = 3
    hidden_layers_grid: tuple[int, ...] = (0, 1, 2, 3)
    dropout_grid: tuple[float, ...] = (0.0, 0.25, 0.5)
    learning_rate_grid: tuple[float, ...] = (0.01, 0.001, 0.0001)
    selection_metric: str = "roc_auc"  # or "map"
    cv_epochs: int = 10
    final_epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    fold_retries: int = 5

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidInputError(f"folds must be >= 2, got {self.folds}")
        if not (self.hidden_layers_grid and self.dropout_grid and self.learning_rate_grid):
            raise InvalidInputError("hyperparameter grid must be non-empty")
        if self.selection_metric not in ("roc_auc", "map"):
            raise InvalidInputError(f"unknown selection metric {self.selection_metric!r}")

    def grid(self) -> list[tuple[int, float, float]]:
        return [
            (h, d, lr)
            for h in self.hidden_layers_grid
            for d in self.dropout_grid
            for lr in self.learning_rate_grid
        ]


@dataclass
class CvReport:
    plan: CvPlan
    rows: list[dict] = field(default_factory=list)
    chosen: tuple[int, float, float] | None = None
    chosen_mean: float | None = None
    chosen_threshold: float | None = None
    fold_of_group: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "folds": self.plan.folds,
            "selection_metric": self.plan.selection_metric,
            "cv_epochs": self.plan.cv_epochs,
            "final_epochs": self.plan.final_epochs,
            "seed": self.plan.seed,
            "rows": self.rows,
            "chosen": None
            if self.chosen is None
            else {
                "hidden_layers": self.chosen[0],
                "dropout_rate": self.chosen[1],
                "learning_rate": self.chosen[2],
            },
            "chosen_mean_metric": self.chosen_mean,
            "chosen_threshold": self.chosen_threshold,
            "fold_of_group": self.fold_of_group,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def make_folds(
    train_ids: list[str],
    source_video_ids: list[str],
    folds: int,
    seed: int,
    positives: list[int] | None = None,
) -> np.ndarray:
    """Group-aware fold assignment, one fold index per training row.

    All rows sharing a source video land in one fold; fold sizes stay within
    one group of each other.  Groups are assigned largest-positive-count
    first to the currently smallest fold with the fewest positives, which
    balances positives across folds.
    """
    n = len(train_ids)
    if len(source_video_ids) != n:
        raise InvalidInputError("train_ids and source_video_ids must align")
    if positives is not None and len(positives) != n:
        raise InvalidInputError("positives must align with train_ids")

    group_rows: dict[str, list[int]] = {}
    for i, g in enumerate(source_video_ids):
        group_rows.setdefault(g, []).append(i)
    groups = sorted(group_rows)
    if folds > len(groups):
        raise FoldError(f"{folds} folds requested but only {len(groups)} groups exist")

    rng = np.random.default_rng(seed)
    order = [groups[i] for i in rng.permutation(len(groups))]
    pos_of = {
        g: sum(positives[i] for i in group_rows[g]) if positives is not None else 0
        for g in groups
    }
    order.sort(key=lambda g: -pos_of[g])  # stable: shuffled order breaks ties

    fold_sizes = np.zeros(folds, dtype=int)
    fold_pos = np.zeros(folds, dtype=int)
    assignment = np.empty(n, dtype=int)
    for g in order:
        smallest = fold_sizes.min()
        candidates = [f for f in range(folds) if fold_sizes[f] == smallest]
        f = min(candidates, key=lambda f: (fold_pos[f], f))
        for i in group_rows[g]:
            assignment[i] = f
        fold_sizes[f] += 1
        fold_pos[f] += pos_of[g]
    return assignment


def _folds_are_trainable(data: LabeledFeatures, assignment: np.ndarray, folds: int) -> bool:
    """Every fold's training portion and held-out portion must support the
    selection metric: both classes (binary) / at least one positive present."""
    for f in range(folds):
        held = assignment == f
        rest = ~held
        if data.task == BINARY:
            for part in (held, rest):
                col = data.y[part, 0]
                if col.size == 0 or col.min() == col.max():
                    return False
        else:
            if not data.y[held].any() or not data.y[rest].any():
                return False
    return True


def draw_folds(plan: CvPlan, data: LabeledFeatures) -> np.ndarray:
    """Fold assignment with bounded re-draws for degenerate (single-class)
    folds; raises StratificationError when retries are exhausted."""
    positives = data.y.max(axis=1).astype(int).tolist()
    for attempt in range(plan.fold_retries):
        assignment = make_folds(
            data.ids, data.groups, plan.folds, _derived_seed(plan.seed, attempt), positives
        )
        if _folds_are_trainable(data, assignment, plan.folds):
            return assignment
    raise StratificationError(
        f"no usable fold assignment after {plan.fold_retries} attempts; "
        "some fold always ends up single-class"
    )


def _head_config(plan: CvPlan, data: LabeledFeatures, cfg, epochs: int, seed: int) -> HeadConfig:
    hidden_layers, dropout_rate, learning_rate = cfg
    return HeadConfig(
        input_dim=data.x.shape[1],
        hidden_layers=hidden_layers,
        dropout_rate=dropout_rate,
        learning_rate=learning_rate,
        n_outputs=data.n_outputs,
        batch_size=plan.batch_size,
        epochs=epochs,
        seed=seed,
    )


def _held_out_metric(plan: CvPlan, head: ClassifierHead, held: LabeledFeatures) -> float:
    scores = classify.forward(head, held.x)
    if plan.selection_metric == "roc_auc":
        return evaluate.roc_auc(scores[:, 0], held.y[:, 0])["auc"]
    return evaluate.multilabel_map(scores, held.y)["map"]


def cross_validate(plan: CvPlan, data: LabeledFeatures) -> CvReport:
    """Train every grid config on every fold and pick the best mean metric.

    Metric ties break toward the simpler model: fewer hidden layers, then
    lower dropout, then lower learning rate (independent of grid order).
    """
    assignment = draw_folds(plan, data)
    report = CvReport(plan=plan)
    report.fold_of_group = {
        g: int(f) for g, f in zip(data.groups, assignment)
    }

    results = []
    for cfg_index, cfg in enumerate(plan.grid()):
        fold_values = []
        for f in range(plan.folds):
            train_part = data.subset(np.flatnonzero(assignment != f))
            held_part = data.subset(np.flatnonzero(assignment == f))
            config = _head_config(
                plan, data, cfg, plan.cv_epochs, _derived_seed(plan.seed, cfg_index, f)
            )
            head = classify.train(
                config, train_part.x, train_part.y, train_part.training_weights()
            )
            fold_values.append(_held_out_metric(plan, head, held_part))
        mean = float(np.mean(fold_values))
        results.append((cfg, mean))
        report.rows.append(
            {
                "hidden_layers": cfg[0],
                "dropout_rate": cfg[1],
                "learning_rate": cfg[2],
                "fold_metrics": fold_values,
                "mean_metric": mean,
            }
        )

    # argmax with order-free tie-break: simpler config wins
    chosen, chosen_mean = min(
        results, key=lambda r: (-r[1], r[0][0], r[0][1], r[0][2])
    )
    report.chosen = chosen
    report.chosen_mean = chosen_mean
    return report


def finalize(plan: CvPlan, data: LabeledFeatures, report: CvReport) -> ClassifierHead:
    """Train the chosen config on the full train split, then fix the decision
    threshold on the training-set outputs."""
    if report.chosen is None:
        raise InvalidInputError("cross_validate must run before finalize")
    config = _head_config(
        plan, data, report.chosen, plan.final_epochs, _derived_seed(plan.seed, 9999)
    )
    head = classify.train(config, data.x, data.y, data.training_weights())
    scores = classify.forward(head, data.x)
    if data.task == BINARY:
        threshold = classify.select_threshold_binary(scores[:, 0], data.y[:, 0])
    else:
        threshold = classify.select_threshold_multilabel(scores, data.y)
    classify.with_threshold(head, threshold)
    report.chosen_threshold = head.threshold
    return head


def plan_for_task(task: str, seed: int = 0, **overrides) -> CvPlan:
    """Default plans: binary selects by ROC AUC and finalizes with 1 epoch;
    multi-label selects by mAP and finalizes with 10 epochs."""
    if task == BINARY:
        base = CvPlan(selection_metric="roc_auc", final_epochs=1, seed=seed)
    elif task == MULTILABEL:
        base = CvPlan(selection_metric="map", final_epochs=10, seed=seed)
    else:
        raise InvalidInputError(f"unknown task {task!r}")
    return replace(base, **overrides) if overrides else base
