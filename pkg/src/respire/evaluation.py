"""Evaluation harness: feature screening, ROC analysis, cross-validation and error metrics."""

import csv
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from ._validation import FEATURE_NAMES, check_features, check_mask
from .exceptions import DegenerateLabelsError, ParameterError
from .model import (BACK, DEFAULT_GAMMA, DEFAULT_STEP1, DEFAULT_STEP2, FRONT, classify,
                    fit_hier, fit_logistic, fit_one_step, orientation_class, predict_hier,
                    predict_one_step)

METHOD_LABELS = {
    "a": "x1 in one step",
    "b": "x1 in two steps",
    "c": "harmonics in one step",
    "d": "harmonics in two steps",
}

DEFAULT_ROC_FEATURESETS = (("x1",), ("x2",), ("x4",), ("x5",), ("x1", "x2", "x4", "x5"))

CONFUSION_NOTE = (
    "columns are normalized by actual-class counts and each sums to 100%; "
    "row sums of such a matrix are not class totals"
)


def kfold_split(participant, theta, k=5, seed=0):
    """Fold index per sample, balanced within each participant.

    Each participant's samples are ordered by angle (random order among equal
    angles) and dealt round-robin into a seeded permutation of the folds, so
    every fold spans the full angle range and fold sizes differ by at most one.
    """
    participant = np.asarray(participant)
    theta = np.asarray(theta, dtype=float)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    folds = np.empty(participant.size, dtype=int)
    for i, pid in enumerate(np.unique(participant)):
        idx = np.flatnonzero(participant == pid)
        if idx.size < k:
            raise ParameterError(f"participant {pid} has {idx.size} samples, fewer than k={k}")
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i,)))
        order = np.lexsort((rng.random(idx.size), theta[idx]))
        perm = rng.permutation(k)
        folds[idx[order]] = perm[np.arange(idx.size) % k]
    return folds


class ParticipantKFold:
    """Cross-validation splitter with folds balanced inside each participant.

    ``split(X, y, groups)`` takes orientation angles as ``y`` and participant
    ids as ``groups``, so it plugs into scikit-learn's ``cv=`` arguments.
    With ``n_splits=1`` the single split trains and tests on all data.
    """

    def __init__(self, n_splits=5, seed=0):
        self.n_splits = n_splits
        self.seed = seed

    def get_n_splits(self, X=None, y=None, groups=None):
        return self.n_splits

    def split(self, X, y, groups):
        folds = kfold_split(groups, y, self.n_splits, self.seed)
        if self.n_splits == 1:
            warnings.warn("single fold: training and test sets coincide", stacklevel=2)
            everything = np.arange(folds.size)
            yield everything, everything
            return
        for f in range(self.n_splits):
            yield np.flatnonzero(folds != f), np.flatnonzero(folds == f)


def feature_pvalues(X, classes):
    """Likelihood-ratio chi-squared screen of each feature.

    For every feature a univariate logistic model is compared with the
    intercept-only model; the deviance difference is referred to chi2 with one
    degree of freedom.

    Returns
    -------
    pvalues : dict
        Feature name to p-value.
    flags : dict
        Feature name to a note for features that could not be tested.
    """
    X = check_features(X)
    classes = np.asarray(classes)
    if np.unique(classes).size < 2:
        raise DegenerateLabelsError("feature screening needs both classes present")
    y = (classes == FRONT).astype(float)
    p1 = y.mean()
    nll0 = -float(y.sum() * np.log(p1) + (y.size - y.sum()) * np.log(1.0 - p1))

    pvalues, flags = {}, {}
    for j, name in enumerate(FEATURE_NAMES):
        if np.ptp(X[:, j]) == 0:
            pvalues[name] = 1.0
            flags[name] = "constant feature"
            continue
        _, history = fit_logistic(X, classes, (name,))
        stat = max(0.0, 2.0 * (nll0 - history[-1]))
        pvalues[name] = float(chi2.sf(stat, df=1))
    return pvalues, flags


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_auc(scores, labels):
    """ROC curve over all distinct score thresholds and its trapezoidal area.

    ``labels`` marks positives with True/1. The area is accumulated in integer
    counts, so it equals the pairwise concordance (ties counted one half)
    exactly.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ParameterError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC analysis needs both classes present")

    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(lab)[last]].astype(np.int64)
    fp = np.r_[0, np.cumsum(~lab)[last]].astype(np.int64)

    twice_area = sum(int(f1 - f0) * int(t1 + t0)
                     for f0, f1, t0, t1 in zip(fp[:-1], fp[1:], tp[:-1], tp[1:]))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(fp / n_neg, tp / n_pos, np.r_[np.inf, s[last]], auc)


@dataclass
class ConfusionResult:
    """Rows are estimated classes, columns actual classes (1 = front, 2 = back)."""

    counts: np.ndarray
    percent: np.ndarray
    accuracy: float
    balanced_accuracy: float

    def to_dict(self):
        return {
            "counts": self.counts.tolist(),
            "percent": self.percent.tolist(),
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "note": CONFUSION_NOTE,
        }


def confusion_matrix(predicted, actual):
    """Column-normalized 2x2 confusion matrix with accuracy.

    ``accuracy`` weights each class's hit rate by its size (the fraction of
    correct decisions); ``balanced_accuracy`` is their plain mean.
    """
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.size == 0 or predicted.shape != actual.shape:
        raise ParameterError("predicted and actual must be non-empty and of equal length")
    labels = (FRONT, BACK)
    counts = np.array([[np.sum((predicted == e) & (actual == a)) for a in labels]
                       for e in labels], dtype=np.int64)
    col = counts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        percent = np.where(col > 0, 100.0 * counts / np.where(col > 0, col, 1), np.nan)
    rates = np.diag(percent) / 100.0
    present = col > 0
    accuracy = float(np.trace(counts) / counts.sum())
    balanced = float(np.mean(rates[present]))
    return ConfusionResult(counts, percent, accuracy, balanced)


def cc(theta, theta_hat):
    """Pearson correlation between actual and estimated angles."""
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.size == 0 or theta.shape != theta_hat.shape:
        raise ParameterError("inputs must be non-empty and of equal length")
    a = theta - theta.mean()
    b = theta_hat - theta_hat.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        raise ParameterError("correlation undefined for zero-variance input")
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def rmse(theta, theta_hat):
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.size == 0 or theta.shape != theta_hat.shape:
        raise ParameterError("inputs must be non-empty and of equal length")
    return float(np.sqrt(np.mean((theta_hat - theta) ** 2)))


@dataclass(frozen=True)
class BenchmarkConfig:
    k: int = 5
    seed: int = 0
    methods: tuple = ("a", "b", "c", "d")
    gamma: float = DEFAULT_GAMMA
    step1_features: tuple = DEFAULT_STEP1
    harmonic_features: tuple = DEFAULT_STEP2
    partition: str = "truth"
    penalize_intercept: bool = True
    class_boundary: float = 90.0
    roc_featuresets: tuple = DEFAULT_ROC_FEATURESETS

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHOD_LABELS]
        if unknown or not self.methods:
            raise ParameterError(f"methods must be a non-empty subset of a,b,c,d; got {unknown}")

    def method_features(self, method):
        return self.step1_features if method in ("a", "b") else self.harmonic_features


@dataclass
class EvalReport:
    methods: dict
    confusion: ConfusionResult
    auc_by_featureset: dict
    roc: dict
    pvalues: dict
    pvalue_flags: dict
    fold_assignments: list
    scatter: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "methods": self.methods,
            "confusion": self.confusion.to_dict(),
            "auc_by_featureset": self.auc_by_featureset,
            "pvalues": self.pvalues,
            "pvalue_flags": self.pvalue_flags,
            "fold_assignments": self.fold_assignments,
            "scatter": {m: [[float(a), float(b)] for a, b in pairs]
                        for m, pairs in self.scatter.items()},
            "roc": {name: {"fpr": c.fpr.tolist(), "tpr": c.tpr.tolist()}
                    for name, c in self.roc.items()},
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def featureset_name(features):
    return "_".join(features)


def run_benchmark(table, config=None):
    """Cross-validated comparison of methods a-d on a feature table.

    All methods share one fold assignment. The step-1 classifier, refitted
    in every fold, supplies the confusion matrix; each ROC feature set gets
    out-of-fold logits from its own logistic fit.
    """
    config = config or BenchmarkConfig()
    table = table.subset(table.valid)
    if len(table) == 0:
        raise ParameterError("no valid rows to evaluate")
    X, theta = table.X, table.theta
    classes = orientation_class(theta, config.class_boundary)
    folds = kfold_split(table.participant, theta, config.k, config.seed)

    estimates = {m: np.empty(theta.size) for m in config.methods}
    step1 = np.empty(theta.size, dtype=int)
    featuresets = [check_mask(fs) for fs in config.roc_featuresets]
    logits = {featureset_name(fs): np.empty(theta.size) for fs in featuresets}

    for f in range(config.k):
        test = folds == f
        train = ~test if config.k > 1 else np.ones_like(test)
        Xtr, ttr, Xte = X[train], theta[train], X[test]
        for m in config.methods:
            features = config.method_features(m)
            if m in ("a", "c"):
                w = fit_one_step(Xtr, ttr, features, config.gamma, config.penalize_intercept)
                estimates[m][test] = predict_one_step(w, Xte)
            else:
                model = fit_hier(Xtr, ttr, config.step1_features, features, config.gamma,
                                 config.class_boundary, config.partition,
                                 config.penalize_intercept)
                estimates[m][test] = predict_hier(model, Xte)
        beta, _ = fit_logistic(Xtr, classes[train], config.step1_features)
        step1[test] = classify(beta, Xte)[0]
        for fs in featuresets:
            beta_fs, _ = fit_logistic(Xtr, classes[train], fs)
            logits[featureset_name(fs)][test] = classify(beta_fs, Xte)[1]

    methods = {
        m: {
            "label": METHOD_LABELS[m],
            "features": list(config.method_features(m)),
            "cc": cc(theta, estimates[m]),
            "rmse_deg": rmse(theta, estimates[m]),
        }
        for m in config.methods
    }
    roc = {name: roc_auc(score, classes == FRONT) for name, score in logits.items()}
    pvalues, flags = feature_pvalues(X, classes)
    fold_assignments = [
        {"participant": int(p), "radar": int(r), "theta_deg": float(t), "fold": int(f)}
        for p, r, t, f in zip(table.participant, table.radar, theta, folds)
    ]
    metadata = {
        "n_samples": int(theta.size),
        "k": config.k,
        "seed": config.seed,
        "gamma": config.gamma,
        "partition": config.partition,
        "train_equals_test": config.k == 1,
        "predictions": "clamped to [0, 180] deg",
    }
    return EvalReport(
        methods=methods,
        confusion=confusion_matrix(step1, classes),
        auc_by_featureset={name: c.auc for name, c in roc.items()},
        roc=roc,
        pvalues=pvalues,
        pvalue_flags=flags,
        fold_assignments=fold_assignments,
        scatter={m: list(zip(theta, estimates[m])) for m in config.methods},
        metadata=metadata,
    )


def format_summary(methods):
    """One-line summary such as ``(a) ρ=0.74 ε=38.3°; (d) ρ=0.91 ε=23.1°``."""
    return "; ".join(
        f"({m}) ρ={methods[m]['cc']:.2f} ε={methods[m]['rmse_deg']:.1f}°" for m in sorted(methods)
    )


def write_bundle(report, directory):
    """Report JSON plus the summary, scatter and ROC CSV files."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "report.json"), "w") as fh:
        fh.write(report.to_json())
    with open(os.path.join(directory, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "cc", "rmse_deg"])
        for m in sorted(report.methods):
            writer.writerow([m, repr(report.methods[m]["cc"]), repr(report.methods[m]["rmse_deg"])])
    for m, pairs in report.scatter.items():
        with open(os.path.join(directory, f"scatter_{m}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta_deg", "theta_hat_deg"])
            writer.writerows([repr(float(a)), repr(float(b))] for a, b in pairs)
    for name, curve in report.roc.items():
        with open(os.path.join(directory, f"roc_{name}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            writer.writerows([repr(float(a)), repr(float(b))] for a, b in zip(curve.fpr, curve.tpr))
