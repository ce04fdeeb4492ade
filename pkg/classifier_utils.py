"""Fault classifiers trained on the selected channels.

Observation t of state c is the vector of the selected channels' sample t in
state c. Features are standardized with training-split statistics only (a
StandardScaler inside each pipeline). Labels are binary: 1 for the positive
(healthy) state, 0 otherwise.

Three classifiers:
  knn  Euclidean k-nearest neighbours; score = fraction of positive neighbours
  gnb  Gaussian naive Bayes; score = positive-class posterior
  svm  linear SVM trained by mini-batch Pegasos; score = signed margin
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold, train_test_split
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from errors import ParameterError, SplitError, TrainingError, UsageError
from sensor_utils import channel_label

CLASSIFIER_KINDS = ("knn", "gnb", "svm")
CLASSIFIER_LABELS = {"knn": "KNN", "gnb": "NaiveBayes", "svm": "SVM"}
HYPERPARAMETER = {"knn": "k", "svm": "c_reg", "gnb": None}
DEFAULT_GRIDS = {"knn": (1, 3, 5, 7, 9), "svm": (0.1, 1.0, 10.0), "gnb": (None,)}
DEFAULT_EPOCHS = 200
DEFAULT_FOLDS = 5
VAR_SMOOTHING = 1e-9
# posteriors this close to 0.5 count as ties
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray = field(compare=False)
    y: np.ndarray = field(compare=False)
    columns: tuple = ()

    @property
    def n_rows(self):
        return self.X.shape[0]

    def take(self, rows):
        return FeatureMatrix(X=self.X[rows], y=self.y[rows], columns=self.columns)

    def class_counts(self):
        return int(np.sum(self.y == 1)), int(np.sum(self.y == 0))


@dataclass
class TrainedModel:
    kind: str
    params: dict
    pipeline: object = field(repr=False)
    n_train: int = 0
    training_seconds: float = 0.0


@dataclass
class CvReport:
    kind: str
    param_name: str
    table: list
    best_params: dict
    model: TrainedModel = field(repr=False, default=None)


class PegasosSVM(BaseEstimator, ClassifierMixin):
    """Linear SVM minimizing lambda/2 |w|^2 + mean hinge loss.

    Mini-batch Pegasos: each epoch walks a seeded permutation of the rows in
    batches, takes step 1/(lambda t) and projects onto the ball of radius
    1/sqrt(lambda). The bias is a constant feature. The fitted weights are
    the running average of all iterates.
    """

    def __init__(self, C=1.0, epochs=DEFAULT_EPOCHS, batch_size=32, random_state=0):
        self.C = C
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    @staticmethod
    def _objective(Xa, s, w, lam):
        hinge = np.maximum(0.0, 1.0 - s * (Xa @ w))
        return float(0.5 * lam * (w @ w) + hinge.mean())

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if not np.all(np.isfinite(X)):
            raise TrainingError("SVM training data contains non-finite features")
        if self.C <= 0:
            raise ParameterError(f"SVM regularization C must be positive, got {self.C}")
        n = X.shape[0]
        s = np.where(y == 1, 1.0, -1.0)
        Xa = np.hstack([X, np.ones((n, 1))])
        lam = 1.0 / (self.C * n)
        radius = 1.0 / math.sqrt(lam)

        rng = np.random.default_rng(self.random_state)
        w = np.zeros(Xa.shape[1])
        w_avg = np.zeros_like(w)
        t = 0
        self.objective_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                t += 1
                eta = 1.0 / (lam * t)
                active = s[batch] * (Xa[batch] @ w) < 1.0
                w = (1.0 - 1.0 / t) * w
                if np.any(active):
                    w = w + (eta / len(batch)) * (s[batch][active] @ Xa[batch][active])
                norm = float(np.linalg.norm(w))
                if norm > radius:
                    w = w * (radius / norm)
                w_avg += (w - w_avg) / t
            self.objective_history_.append(self._objective(Xa, s, w_avg, lam))

        self.coef_ = w_avg[:-1].copy()
        self.intercept_ = float(w_avg[-1])
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)


def build_features(dataset, selection, positive_code=None):
    """Stack the selected channels into a rows x channels matrix.

    Args:
        dataset: SignalDataset (or JoinedDataset)
        selection: SelectionResult or an iterable of channel keys
        positive_code: state code labelled 1; defaults to the dataset's positive state
    """
    dataset = getattr(dataset, "dataset", dataset)
    keys = [tuple(k) for k in getattr(selection, "selected", selection)]
    if not keys:
        raise UsageError("Selection is empty; nothing to build features from")
    by_key = {c.key: c for c in dataset.channels}
    absent = [k for k in keys if k not in by_key]
    if absent:
        raise UsageError("Selection references unknown channel(s): " + ", ".join(channel_label(k) for k in absent))
    codes = dataset.state_codes
    if len(codes) != 2:
        raise UsageError(f"Binary evaluation needs exactly 2 states, found {len(codes)}")
    positive = dataset.positive_code if positive_code is None else positive_code

    X = np.vstack([np.column_stack([by_key[k].samples(code) for k in keys]) for code in codes])
    y = np.concatenate([np.full(dataset.samples_per_state, int(code == positive)) for code in codes])
    return FeatureMatrix(X=X, y=y, columns=tuple(keys))


def _check_training(fm, kind):
    if not np.all(np.isfinite(fm.X)):
        raise TrainingError(f"{CLASSIFIER_LABELS[kind]}: non-finite features")
    pos, neg = fm.class_counts()
    if pos == 0 or neg == 0:
        raise TrainingError(f"{CLASSIFIER_LABELS[kind]}: training data has a single class")
    if kind == "gnb" and min(pos, neg) < 2:
        raise TrainingError("NaiveBayes: each class needs at least 2 training rows")


def train(fm, kind, param=None, epochs=DEFAULT_EPOCHS, seed=0):
    """Fit one classifier; param is k (knn), C (svm) or ignored (gnb)."""
    if kind not in CLASSIFIER_KINDS:
        raise UsageError(f"Unknown classifier {kind!r}, expected one of {CLASSIFIER_KINDS}")
    _check_training(fm, kind)
    if kind == "knn":
        k = 1 if param is None else int(param)
        if k < 1 or k > fm.n_rows:
            raise ParameterError(f"KNN k={k} must be between 1 and the training size {fm.n_rows}")
        estimator = KNeighborsClassifier(n_neighbors=k, algorithm="brute", metric="euclidean")
        params = {"k": k}
    elif kind == "gnb":
        estimator = GaussianNB(var_smoothing=VAR_SMOOTHING)
        params = {"var_smoothing": VAR_SMOOTHING}
    else:
        c_reg = 1.0 if param is None else float(param)
        estimator = PegasosSVM(C=c_reg, epochs=epochs, random_state=seed)
        params = {"c_reg": c_reg, "epochs": epochs}

    started = time.perf_counter()
    pipeline = make_pipeline(StandardScaler(), estimator).fit(fm.X, fm.y)
    elapsed = time.perf_counter() - started
    return TrainedModel(kind=kind, params=params, pipeline=pipeline, n_train=fm.n_rows, training_seconds=elapsed)


def predict(model, rows):
    """Returns (labels, scores); labels are 1 for the positive class."""
    rows = np.asarray(rows, dtype=float)
    if model.kind == "svm":
        scores = model.pipeline.decision_function(rows)
        return (scores >= 0).astype(int), scores
    proba = model.pipeline.predict_proba(rows)
    classes = list(model.pipeline.classes_)
    scores = proba[:, classes.index(1)]
    # ties go to the positive class
    return (scores >= 0.5 - TIE_TOLERANCE).astype(int), scores


def knn_train(fm, k=1):
    return train(fm, "knn", k)


def knn_predict(model, rows):
    return predict(model, rows)


def gnb_train(fm):
    return train(fm, "gnb")


def gnb_predict(model, rows):
    return predict(model, rows)


def svm_train(fm, c_reg=1.0, epochs=DEFAULT_EPOCHS, seed=0):
    return train(fm, "svm", c_reg, epochs=epochs, seed=seed)


def svm_predict(model, rows):
    return predict(model, rows)


def split_train_test(fm, test_size=0.5, seed=0):
    """Stratified train/test split with a fixed seed."""
    rows = np.arange(fm.n_rows)
    try:
        train_rows, test_rows = train_test_split(rows, test_size=test_size, stratify=fm.y, random_state=seed)
    except ValueError as e:
        raise SplitError(f"Cannot split {fm.n_rows} rows: {e}")
    return fm.take(np.sort(train_rows)), fm.take(np.sort(test_rows))


def cross_validate(fm, kind, grid=None, seed=0, folds=DEFAULT_FOLDS, epochs=DEFAULT_EPOCHS, max_workers=1):
    """Stratified k-fold grid search; the best candidate is refit on all rows.

    Ties on mean accuracy go to the smallest hyperparameter value.
    """
    if kind not in CLASSIFIER_KINDS:
        raise UsageError(f"Unknown classifier {kind!r}, expected one of {CLASSIFIER_KINDS}")
    pos, neg = fm.class_counts()
    if min(pos, neg) < folds:
        raise SplitError(f"{folds}-fold cross-validation needs >= {folds} rows per class, got {pos}/{neg}")
    candidates = list(DEFAULT_GRIDS[kind] if grid is None else grid)
    if kind != "gnb":
        candidates = sorted(candidates)
    if not candidates:
        raise UsageError(f"Empty hyperparameter grid for {CLASSIFIER_LABELS[kind]}")

    splits = list(StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed).split(fm.X, fm.y))

    def _fold(job):
        candidate, (train_rows, valid_rows) = job
        try:
            model = train(fm.take(train_rows), kind, candidate, epochs=epochs, seed=seed)
        except (ParameterError, TrainingError) as e:
            logging.debug(f"{CLASSIFIER_LABELS[kind]} candidate {candidate} skipped on a fold: {e}")
            return float("nan")
        labels, _ = predict(model, fm.X[valid_rows])
        return float(np.mean(labels == fm.y[valid_rows]))

    jobs = [(candidate, split) for candidate in candidates for split in splits]
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        accuracies = list(executor.map(_fold, jobs))

    table = []
    best_index, best_mean = None, -1.0
    for i, candidate in enumerate(candidates):
        fold_acc = accuracies[i * folds:(i + 1) * folds]
        mean = float(np.mean(fold_acc)) if not any(math.isnan(a) for a in fold_acc) else float("nan")
        table.append({"value": candidate, "mean_accuracy": mean, "fold_accuracies": fold_acc})
        if not math.isnan(mean) and mean > best_mean:
            best_index, best_mean = i, mean
    if best_index is None:
        raise TrainingError(f"{CLASSIFIER_LABELS[kind]}: no grid candidate could be trained")

    param_name = HYPERPARAMETER[kind]
    best = candidates[best_index]
    model = train(fm, kind, best, epochs=epochs, seed=seed)
    logging.info(f"{CLASSIFIER_LABELS[kind]} CV: best {param_name or 'candidate'}={best} "
                 f"(mean accuracy {best_mean:.4f})")
    return CvReport(kind=kind, param_name=param_name, table=table,
                    best_params=dict(model.params), model=model)


def model_summary(report, include_timing=False, **extra):
    summary = {
        "kind": report.kind,
        "hyperparameters": report.best_params,
        "cv": [{"value": row["value"], "mean_accuracy": row["mean_accuracy"],
                "fold_accuracies": row["fold_accuracies"]} for row in report.table],
    }
    if include_timing and report.model is not None:
        summary["training_time_s"] = report.model.training_seconds
    summary.update(extra)
    return summary


def write_model_summary(summary, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    logging.info(f"Wrote model summary to {path}")
    return path
