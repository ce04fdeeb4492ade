"""Binary evaluation metrics and ROC/AUC.

The positive class is the healthy state. Ratios whose denominator is zero
are reported as 0 and listed in MetricReport.degenerate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.metrics import auc as trapezoid_area
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import roc_curve

from errors import SchemaError, UsageError

RESULT_COLUMNS = ("method", "n_selected", "accuracy", "recall_pos", "recall_neg",
                  "precision_pos", "precision_neg", "f_pos", "f_neg", "auc")
ROC_COLUMNS = ("fpr", "tpr", "threshold")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self):
        return self.tp + self.fn

    @property
    def negatives(self):
        return self.tn + self.fp

    def as_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    recall_pos: float
    recall_neg: float
    precision_pos: float
    precision_neg: float
    f_pos: float
    f_neg: float
    auc: float = None
    degenerate: tuple = ()

    def as_row(self, method, n_selected):
        return {"method": method, "n_selected": n_selected, "accuracy": self.accuracy,
                "recall_pos": self.recall_pos, "recall_neg": self.recall_neg,
                "precision_pos": self.precision_pos, "precision_neg": self.precision_neg,
                "f_pos": self.f_pos, "f_neg": self.f_neg, "auc": self.auc}


@dataclass(frozen=True)
class RocResult:
    auc: float
    fpr: np.ndarray = field(compare=False)
    tpr: np.ndarray = field(compare=False)
    thresholds: np.ndarray = field(compare=False)


def confusion(truth, predicted, positive=1):
    """Count TP/FP/TN/FN with `positive` as the positive label."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise UsageError(f"Length mismatch: {truth.shape[0] if truth.ndim else 0} truth vs "
                         f"{predicted.shape[0] if predicted.ndim else 0} predicted labels")
    labels = set(np.unique(truth)) | set(np.unique(predicted))
    negatives = sorted(l for l in labels if l != positive)
    if len(negatives) > 1:
        raise UsageError(f"Binary labels expected, got {sorted(labels)}")
    truth_pos = truth == positive
    pred_pos = predicted == positive
    # rows: truth (negative, positive); columns: prediction
    (tn, fp), (fn, tp) = sk_confusion_matrix(truth_pos, pred_pos, labels=[False, True])
    return ConfusionMatrix(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))


def _ratio(num, den, name, degenerate):
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def _harmonic(p, r, name, degenerate):
    if p + r == 0:
        degenerate.append(name)
        return 0.0
    return 2.0 * p * r / (p + r)


def metrics(cm):
    """Accuracy, per-class recall, precision and F-score from a confusion matrix."""
    if cm.total <= 0:
        raise UsageError("Confusion matrix is empty")
    degenerate = []
    recall_pos = _ratio(cm.tp, cm.tp + cm.fn, "recall_pos", degenerate)
    recall_neg = _ratio(cm.tn, cm.tn + cm.fp, "recall_neg", degenerate)
    precision_pos = _ratio(cm.tp, cm.tp + cm.fp, "precision_pos", degenerate)
    precision_neg = _ratio(cm.tn, cm.tn + cm.fn, "precision_neg", degenerate)
    report = MetricReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        recall_pos=recall_pos,
        recall_neg=recall_neg,
        precision_pos=precision_pos,
        precision_neg=precision_neg,
        f_pos=_harmonic(precision_pos, recall_pos, "f_pos", degenerate),
        f_neg=_harmonic(precision_neg, recall_neg, "f_neg", degenerate),
        degenerate=tuple(degenerate),
    )
    if degenerate:
        logging.debug(f"Degenerate metric cells (reported as 0): {', '.join(degenerate)}")
    return report


def roc_auc(scores, truth, positive=1):
    """Exact threshold sweep over distinct scores and trapezoidal area.

    Tied scores share one threshold step, so the area equals the pairwise
    concordance probability with half credit for ties.
    """
    scores = np.asarray(scores, dtype=float)
    truth_pos = np.asarray(truth) == positive
    if scores.shape != truth_pos.shape:
        raise UsageError("scores and truth must have the same length")
    if truth_pos.all() or not truth_pos.any():
        raise UsageError("ROC needs both classes in the truth labels")
    fpr, tpr, thresholds = roc_curve(truth_pos, scores, drop_intermediate=False)
    return RocResult(auc=float(trapezoid_area(fpr, tpr)), fpr=fpr, tpr=tpr, thresholds=thresholds)


def evaluate(truth, predicted, scores, positive=1):
    """Full metric report: confusion-based metrics plus AUC from the scores."""
    cm = confusion(truth, predicted, positive)
    report = metrics(cm)
    roc = roc_auc(scores, truth, positive)
    return cm, MetricReport(**{**report.__dict__, "auc": roc.auc}), roc


def write_results(rows, path):
    """Write result rows in the fixed column order."""
    frame = pd.DataFrame([{c: row.get(c) for c in RESULT_COLUMNS} for row in rows], columns=list(RESULT_COLUMNS))
    # failed pairs leave n_selected empty; keep the rest integral
    frame["n_selected"] = frame["n_selected"].astype("Int64")
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.6f")
    logging.info(f"Wrote {len(frame)} result row(s) to {path}")
    return path


def write_roc(roc, path):
    frame = pd.DataFrame({"fpr": roc.fpr, "tpr": roc.tpr, "threshold": roc.thresholds}, columns=list(ROC_COLUMNS))
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


PREDICTION_COLUMNS = ("row", "truth", "predicted", "score")


def write_predictions(truth, predicted, scores, path):
    """Test-split predictions: one row per observation, labels 1 = positive."""
    frame = pd.DataFrame({
        "row": np.arange(len(truth)),
        "truth": np.asarray(truth, dtype=int),
        "predicted": np.asarray(predicted, dtype=int),
        "score": [repr(float(s)) for s in scores],
    }, columns=list(PREDICTION_COLUMNS))
    frame.to_csv(path, index=False, lineterminator="\n")
    logging.info(f"Wrote {len(frame)} prediction(s) to {path}")
    return path


def load_predictions(path):
    """Returns (truth, predicted, scores) arrays from a predictions CSV."""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    frame = frame.sort_values("row")
    return (frame["truth"].to_numpy(dtype=int), frame["predicted"].to_numpy(dtype=int),
            frame["score"].to_numpy(dtype=float))
