"""Evaluation harness: confusion matrices, agreement scores, curves, CV, timing.

Macro averaging throughout (per-class values are carried alongside so
micro figures can be recomputed).  ROC AUC is the trapezoid over
(FPR, TPR) with tied scores grouped into one threshold step; PR AUC uses
step-wise (last-precision) interpolation, with precision at zero predicted
positives taken as 1.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import FeatureMatrix
from .rng import generator

log = logging.getLogger(__name__)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Count matrix: entry (i, j) = rows with true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise ValueError(f"{name} contains labels outside [0, {n_classes})")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]


def classification_metrics(confusion) -> ClassificationMetrics:
    """Accuracy plus macro precision/recall/F1 with the 0/0 -> 0 convention."""
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.size == 0 or cm.sum() == 0:
        raise ValueError("confusion matrix is empty")
    n = cm.sum()
    diag = np.diag(cm)
    pred_totals = cm.sum(axis=0)
    true_totals = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, diag / pred_totals, 0.0)
        recall = np.where(true_totals > 0, diag / true_totals, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return ClassificationMetrics(
        accuracy=float(diag.sum() / n),
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        f1_macro=float(f1.mean()),
        per_class_precision=tuple(float(v) for v in precision),
        per_class_recall=tuple(float(v) for v in recall),
        per_class_f1=tuple(float(v) for v in f1),
    )


def cohen_kappa(confusion) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    A degenerate table with expected agreement 1 yields kappa 0 (logged).
    """
    cm = np.asarray(confusion, dtype=np.float64)
    n = cm.sum()
    if n == 0:
        raise ValueError("confusion matrix has no observations")
    p_o = np.diag(cm).sum() / n
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum() / (n * n))
    if p_e >= 1.0:
        log.warning("kappa degenerate: expected agreement is 1; reporting 0")
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def _binary_curve_counts(y_true, scores, positive_class):
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 2:
        scores = scores[:, positive_class]
    pos = y_true == positive_class
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = pos[order]
    # group tied scores into single threshold steps
    distinct = np.flatnonzero(np.diff(s) != 0.0)
    step_ends = np.append(distinct, s.size - 1)
    tp = np.cumsum(p)[step_ends].astype(np.float64)
    fp = (step_ends + 1 - tp).astype(np.float64)
    return tp, fp, float(pos.sum()), float((~pos).sum())


def roc_curve_ovr(y_true, scores, positive_class: int):
    """One-vs-rest ROC curve points and trapezoid AUC for one class."""
    tp, fp, n_pos, n_neg = _binary_curve_counts(y_true, scores, positive_class)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"ROC for class {positive_class} needs both a positive and a negative"
        )
    tpr = np.concatenate(([0.0], tp / n_pos))
    fpr = np.concatenate(([0.0], fp / n_neg))
    points = list(zip(fpr.tolist(), tpr.tolist()))
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return points, auc


def pr_curve_ovr(y_true, scores, positive_class: int):
    """One-vs-rest precision-recall points and step-interpolated AUC."""
    tp, fp, n_pos, _n_neg = _binary_curve_counts(y_true, scores, positive_class)
    if n_pos == 0:
        raise ValueError(f"PR for class {positive_class} needs at least one positive")
    recall = tp / n_pos
    precision = tp / (tp + fp)
    points = [(0.0, 1.0)] + list(zip(recall.tolist(), precision.tolist()))
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    auc = float(np.sum((recall - prev_recall) * precision))
    return points, auc


@dataclass
class EvalReport:
    """Everything measured on one (model, split) pair."""

    tag: str
    n_rows: int
    confusion: np.ndarray
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    kappa: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    roc_points: dict = field(default_factory=dict)
    roc_auc: dict = field(default_factory=dict)
    pr_points: dict = field(default_factory=dict)
    pr_auc: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "tag": self.tag,
            "n_rows": self.n_rows,
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "precision_macro": self.precision_macro,
            "recall_macro": self.recall_macro,
            "f1_macro": self.f1_macro,
            "kappa": self.kappa,
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
            "per_class_f1": list(self.per_class_f1),
            "roc_auc": {str(c): v for c, v in self.roc_auc.items()},
            "pr_auc": {str(c): v for c, v in self.pr_auc.items()},
        }


def evaluate_model(model, m: FeatureMatrix, tag: str) -> EvalReport:
    """Confusion, agreement, and one-vs-rest curves for a fitted model."""
    proba = model.predict_proba(m.values)
    pred = np.argmax(proba, axis=1)
    cm = confusion_matrix(m.labels, pred, m.n_classes)
    cls = classification_metrics(cm)
    report = EvalReport(
        tag=tag, n_rows=m.n_rows, confusion=cm,
        accuracy=cls.accuracy, precision_macro=cls.precision_macro,
        recall_macro=cls.recall_macro, f1_macro=cls.f1_macro,
        kappa=cohen_kappa(cm),
        per_class_precision=cls.per_class_precision,
        per_class_recall=cls.per_class_recall,
        per_class_f1=cls.per_class_f1,
    )
    counts = m.class_counts()
    for c in range(m.n_classes):
        if counts[c] == 0 or counts[c] == m.n_rows:
            continue  # ROC/PR undefined without both a positive and a negative
        report.roc_points[c], report.roc_auc[c] = roc_curve_ovr(m.labels, proba, c)
        report.pr_points[c], report.pr_auc[c] = pr_curve_ovr(m.labels, proba, c)
    return report


def stratified_kfold_indices(labels, k: int, seed: int) -> list[np.ndarray]:
    """Partition rows into k stratified folds; returns test-row arrays.

    Each class is shuffled with its own seed-derived stream and dealt
    round-robin, so per-fold class proportions stay within one sample of
    the global proportions.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if rows.size < k:
            raise ValueError(
                f"class {int(c)} has {rows.size} rows; need at least k={k}"
            )
        rng = generator(seed, "metrics", "fold", int(c))
        shuffled = rows[rng.permutation(rows.size)]
        for i, row in enumerate(shuffled):
            folds[i % k].append(int(row))
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass(frozen=True)
class CvReport:
    """Per-fold accuracies with their mean and population std."""

    fold_accuracies: tuple[float, ...]
    mean: float
    std: float
    k: int
    seed: int

    def to_json_obj(self) -> dict:
        return {
            "fold_accuracies": list(self.fold_accuracies),
            "mean": self.mean,
            "std": self.std,
            "k": self.k,
            "seed": self.seed,
        }


def kfold_cv(model_spec: dict, X: FeatureMatrix, k: int = 5, seed: int = 0,
             train_transform=None) -> CvReport:
    """Stratified k-fold cross-validated accuracy for one model spec.

    ``train_transform(matrix, fold_seed)``, when given, is applied to each
    fold's training matrix only (the pipeline uses it to rebalance and
    re-noise inside the fold, never touching the validation rows).
    """
    from .model_registry import fit_model  # deferred: avoids an import cycle

    folds = stratified_kfold_indices(X.labels, k, seed)
    accuracies = []
    for i, test_rows in enumerate(folds):
        train_mask = np.ones(X.n_rows, dtype=bool)
        train_mask[test_rows] = False
        train_m = X.take_rows(np.flatnonzero(train_mask))
        if train_transform is not None:
            train_m = train_transform(train_m, i)
        model = fit_model(model_spec, train_m, seed=seed, purpose=("cv", i))
        pred = model.predict(X.values[test_rows])
        accuracies.append(float((pred == X.labels[test_rows]).mean()))
    acc = np.asarray(accuracies)
    return CvReport(
        fold_accuracies=tuple(accuracies),
        mean=float(acc.mean()),
        std=float(acc.std()),
        k=k,
        seed=int(seed),
    )


@dataclass(frozen=True)
class TimingEntry:
    name: str
    train_seconds: float
    infer_seconds: float
    train_normalized: float
    infer_normalized: float


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock training/inference times, normalized by the per-metric max."""

    entries: tuple[TimingEntry, ...]
    repeats: int

    def to_json_obj(self) -> dict:
        return {
            "repeats": self.repeats,
            "models": [vars(e).copy() for e in self.entries],
        }


def timing_benchmark(model_specs, train: FeatureMatrix, test: FeatureMatrix,
                     repeats: int = 3, seed: int = 0) -> TimingReport:
    """Median wall-clock fit and test-set inference time per model spec.

    Models run sequentially in isolation; normalized values divide by the
    max across models, so the slowest model scores 1.0.  Raw seconds are
    machine-dependent and excluded from the determinism envelope.
    """
    from .model_registry import fit_model  # deferred: avoids an import cycle

    model_specs = list(model_specs)
    if not model_specs:
        raise ValueError("timing benchmark needs at least one model spec")
    raw = []
    for spec in model_specs:
        fit_times = []
        infer_times = []
        model = None
        for _ in range(repeats):
            start = time.perf_counter()
            model = fit_model(spec, train, seed=seed, purpose=("timing",))
            fit_times.append(time.perf_counter() - start)
        for _ in range(repeats):
            start = time.perf_counter()
            model.predict_proba(test.values)
            infer_times.append(time.perf_counter() - start)
        raw.append((spec["kind"], float(np.median(fit_times)), float(np.median(infer_times))))
    max_train = max(r[1] for r in raw)
    max_infer = max(r[2] for r in raw)
    entries = tuple(
        TimingEntry(
            name=name,
            train_seconds=t_train,
            infer_seconds=t_infer,
            train_normalized=t_train / max_train if max_train > 0 else 1.0,
            infer_normalized=t_infer / max_infer if max_infer > 0 else 1.0,
        )
        for name, t_train, t_infer in raw
    )
    return TimingReport(entries=entries, repeats=repeats)
