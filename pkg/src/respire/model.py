"""Hierarchical orientation estimator.

Step one is a logistic front/back classifier; step two is a pair of ridge
regressors, one per class, mapping features to the orientation angle. The
one-step baseline is a single ridge regressor over all angles.

Weight vectors always have six entries, ``[constant, x1, x2, x3, x4, x5]``;
entries for features outside a mask are exactly zero.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (FEATURE_NAMES, check_features, check_mask, check_theta,
                          design_matrix, expand_weights)
from .exceptions import (DegenerateLabelsError, DegeneratePartitionError, ParameterError,
                         RankDeficiencyError)

FRONT, BACK = 1, 2
DEFAULT_STEP1 = ("x1",)
DEFAULT_STEP2 = ("x1", "x2", "x4", "x5")
DEFAULT_GAMMA = 0.05

# published adopted classifier: logit = -5.60 + 6.93 * x1[mm]
REFERENCE_BETA = np.array([-5.60, 6.93, 0.0, 0.0, 0.0, 0.0])

FEATURE_SCALING_NOTE = (
    "features are unscaled: x1 in mm, x2 and x4 dimensionless, x3 and x5 in rad; "
    "beta in logit per feature unit, w1/w2 in degrees per feature unit; "
    "vectors ordered [const, x1, x2, x3, x4, x5]"
)


def orientation_class(theta, boundary=90.0):
    """1 for front-facing (``theta < boundary``), 2 otherwise."""
    return np.where(np.asarray(theta) < boundary, FRONT, BACK)


def _nll(z, y):
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


def fit_logistic(X, classes, features=DEFAULT_STEP1, max_iter=100, tol=1e-8,
                 hessian_jitter=1e-6):
    """Maximum-likelihood logistic weights by Newton/IRLS.

    Class 1 is the positive outcome. Iterates until the gradient infinity
    norm drops below ``tol`` or ``max_iter`` steps; a small ridge on the
    Hessian keeps separable data solvable, and step halving keeps the
    negative log-likelihood non-increasing.

    Returns
    -------
    beta : ndarray of shape (6,)
    history : list of float
        Negative log-likelihood at the start and after every step.
    """
    X = check_features(X)
    features = check_mask(features)
    classes = np.asarray(classes)
    if np.unique(classes).size < 2:
        raise DegenerateLabelsError("logistic fit needs both classes present")
    y = (classes == FRONT).astype(float)
    A = design_matrix(X, features)

    b = np.zeros(A.shape[1])
    z = A @ b
    history = [_nll(z, y)]
    for _ in range(max_iter):
        p = expit(z)
        grad = A.T @ (y - p)
        if np.max(np.abs(grad)) < tol:
            break
        hess = A.T @ (A * (p * (1.0 - p))[:, None]) + hessian_jitter * np.eye(A.shape[1])
        step = np.linalg.solve(hess, grad)
        t = 1.0
        for _ in range(60):
            z_new = A @ (b + t * step)
            nll_new = _nll(z_new, y)
            if nll_new <= history[-1]:
                break
            t *= 0.5
        else:
            break
        b = b + t * step
        z = z_new
        history.append(nll_new)
    return expand_weights(b, features), history


def classify(beta, X):
    """Class per row from the sign of the logit (ties go to class 1)."""
    X = check_features(X)
    beta = np.asarray(beta, dtype=float)
    logit = beta[0] + X @ beta[1:]
    return np.where(logit >= 0, FRONT, BACK), logit


def fit_ridge(X, theta, features=DEFAULT_STEP2, gamma=DEFAULT_GAMMA, penalize_intercept=True):
    """Minimizer of ``sum (theta - w.x)^2 + gamma |w|^2`` in closed form.

    With ``penalize_intercept=False`` the constant term is left out of the
    penalty.
    """
    X = check_features(X)
    theta = np.asarray(theta, dtype=float)
    features = check_mask(features)
    if gamma < 0:
        raise ParameterError(f"gamma must be non-negative, got {gamma}")
    if X.shape[0] < 1 or X.shape[0] != theta.size:
        raise ParameterError("need at least one sample and one label per sample")
    A = design_matrix(X, features)
    penalty = gamma * np.eye(A.shape[1])
    if not penalize_intercept:
        penalty[0, 0] = 0.0
    # with gamma > 0 only the constant direction can escape the penalty, and it never lies in null(A)
    if gamma == 0 and np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficiencyError(
            f"design of rank {np.linalg.matrix_rank(A)} < {A.shape[1]} with gamma = 0"
        )
    w = np.linalg.solve(A.T @ A + penalty, A.T @ theta)
    return expand_weights(w, features)


def ridge_objective(w, X, theta, gamma):
    """``sum (theta - w.x)^2 + gamma |w|^2`` for a full 6-vector ``w``."""
    X = check_features(X)
    A = np.column_stack([np.ones(X.shape[0]), X])
    r = np.asarray(theta) - A @ w
    return float(r @ r + gamma * np.dot(w, w))


def linear_predict(w, X):
    X = check_features(X)
    return w[0] + X @ np.asarray(w)[1:]


def fit_one_step(X, theta, features=DEFAULT_STEP2, gamma=DEFAULT_GAMMA,
                 penalize_intercept=True):
    return fit_ridge(X, theta, features, gamma, penalize_intercept)


def predict_one_step(w, X, clip=True):
    raw = linear_predict(w, X)
    return np.clip(raw, 0.0, 180.0) if clip else raw


@dataclass
class HierarchicalModel:
    """Fitted two-step model, serializable as a JSON artifact."""

    beta: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    gamma: float = DEFAULT_GAMMA
    step1_features: tuple = DEFAULT_STEP1
    step2_features: tuple = DEFAULT_STEP2
    class_boundary: float = 90.0
    partition: str = "truth"
    penalize_intercept: bool = True
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "beta": [float(v) for v in self.beta],
            "w1": [float(v) for v in self.w1],
            "w2": [float(v) for v in self.w2],
            "gamma": float(self.gamma),
            "masks": {"step1": list(self.step1_features), "step2": list(self.step2_features)},
            "class_boundary": float(self.class_boundary),
            "partition": self.partition,
            "penalize_intercept": bool(self.penalize_intercept),
            "feature_scaling_note": FEATURE_SCALING_NOTE,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, doc):
        for key in ("beta", "w1", "w2"):
            if len(doc[key]) != len(FEATURE_NAMES) + 1:
                raise ParameterError(f"{key} must have {len(FEATURE_NAMES) + 1} entries")
        return cls(
            beta=np.array(doc["beta"], dtype=float),
            w1=np.array(doc["w1"], dtype=float),
            w2=np.array(doc["w2"], dtype=float),
            gamma=float(doc["gamma"]),
            step1_features=check_mask(doc["masks"]["step1"]),
            step2_features=check_mask(doc["masks"]["step2"]),
            class_boundary=float(doc.get("class_boundary", 90.0)),
            partition=doc.get("partition", "truth"),
            penalize_intercept=bool(doc.get("penalize_intercept", True)),
            provenance=dict(doc.get("provenance", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fit_hier(X, theta, step1_features=DEFAULT_STEP1, step2_features=DEFAULT_STEP2,
             gamma=DEFAULT_GAMMA, class_boundary=90.0, partition="truth",
             penalize_intercept=True):
    """Fit the classifier on all samples and one ridge regressor per class.

    ``partition="truth"`` trains each regressor on the samples whose true
    angle falls in its class; ``"classifier"`` uses the fitted classifier's
    decisions instead.
    """
    X = check_features(X)
    theta = check_theta(theta)
    if partition not in ("truth", "classifier"):
        raise ParameterError(f"unknown partition {partition!r}")
    step1_features = check_mask(step1_features)
    step2_features = check_mask(step2_features)

    classes = orientation_class(theta, class_boundary)
    beta, _ = fit_logistic(X, classes, step1_features)
    groups = classes if partition == "truth" else classify(beta, X)[0]
    front, back = groups == FRONT, groups == BACK
    if not front.any() or not back.any():
        raise DegeneratePartitionError(
            f"empty {'front' if not front.any() else 'back'} partition ({partition})"
        )
    w1 = fit_ridge(X[front], theta[front], step2_features, gamma, penalize_intercept)
    w2 = fit_ridge(X[back], theta[back], step2_features, gamma, penalize_intercept)
    return HierarchicalModel(beta, w1, w2, gamma, step1_features, step2_features,
                             class_boundary, partition, penalize_intercept)


def predict_hier(model, X, clip=True):
    """Orientation estimate through the branch chosen by the classifier."""
    X = check_features(X)
    classes, _ = classify(model.beta, X)
    raw = np.where(classes == FRONT, linear_predict(model.w1, X), linear_predict(model.w2, X))
    return np.clip(raw, 0.0, 180.0) if clip else raw


class FrontBackClassifier(ClassifierMixin, BaseEstimator):
    """Logistic front/back classifier fitted by IRLS.

    ``y`` holds class labels, 1 (front-facing) or 2 (back-facing); see
    :func:`orientation_class`.
    """

    def __init__(self, features=DEFAULT_STEP1, max_iter=100, tol=1e-8, hessian_jitter=1e-6):
        self.features = features
        self.max_iter = max_iter
        self.tol = tol
        self.hessian_jitter = hessian_jitter

    def fit(self, X, y):
        beta, history = fit_logistic(X, y, self.features, self.max_iter, self.tol,
                                     self.hessian_jitter)
        self.beta_ = beta
        self.nll_history_ = history
        self.n_iter_ = len(history) - 1
        self.classes_ = np.array([FRONT, BACK])
        self.n_features_in_ = len(FEATURE_NAMES)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "beta_")
        return classify(self.beta_, X)[1]

    def predict(self, X):
        check_is_fitted(self, "beta_")
        return classify(self.beta_, X)[0]

    def predict_proba(self, X):
        p_front = expit(self.decision_function(X))
        return np.column_stack([p_front, 1.0 - p_front])


class RidgeAngleRegressor(RegressorMixin, BaseEstimator):
    """One-step ridge regressor from features to orientation (deg)."""

    def __init__(self, features=DEFAULT_STEP2, gamma=DEFAULT_GAMMA, penalize_intercept=True,
                 clip=True):
        self.features = features
        self.gamma = gamma
        self.penalize_intercept = penalize_intercept
        self.clip = clip

    def fit(self, X, y):
        self.coef_ = fit_ridge(X, y, self.features, self.gamma, self.penalize_intercept)
        self.n_features_in_ = len(FEATURE_NAMES)
        return self

    def predict_raw(self, X):
        check_is_fitted(self, "coef_")
        return linear_predict(self.coef_, X)

    def predict(self, X):
        raw = self.predict_raw(X)
        return np.clip(raw, 0.0, 180.0) if self.clip else raw


class HierarchicalOrientationRegressor(RegressorMixin, BaseEstimator):
    """Two-step orientation estimator.

    Parameters
    ----------
    step1_features, step2_features : sequence of str
        Feature masks of the classifier and of the per-class regressors.
    gamma : float
        Ridge penalty of the second step.
    class_boundary : float
        Angle (deg) separating front-facing from back-facing records.
    partition : {"truth", "classifier"}
        How training samples are split between the two regressors.
    penalize_intercept : bool
        Whether the ridge penalty also shrinks the constant term.
    clip : bool
        Clamp predictions to [0, 180] deg.
    """

    def __init__(self, step1_features=DEFAULT_STEP1, step2_features=DEFAULT_STEP2,
                 gamma=DEFAULT_GAMMA, class_boundary=90.0, partition="truth",
                 penalize_intercept=True, clip=True):
        self.step1_features = step1_features
        self.step2_features = step2_features
        self.gamma = gamma
        self.class_boundary = class_boundary
        self.partition = partition
        self.penalize_intercept = penalize_intercept
        self.clip = clip

    def fit(self, X, y):
        self.model_ = fit_hier(X, y, self.step1_features, self.step2_features, self.gamma,
                               self.class_boundary, self.partition, self.penalize_intercept)
        self.n_features_in_ = len(FEATURE_NAMES)
        return self

    def classify(self, X):
        check_is_fitted(self, "model_")
        return classify(self.model_.beta, X)[0]

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return classify(self.model_.beta, X)[1]

    def predict_raw(self, X):
        check_is_fitted(self, "model_")
        return predict_hier(self.model_, X, clip=False)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict_hier(self.model_, X, clip=self.clip)

    @classmethod
    def from_model(cls, model, clip=True):
        est = cls(model.step1_features, model.step2_features, model.gamma,
                  model.class_boundary, model.partition, model.penalize_intercept, clip)
        est.model_ = model
        est.n_features_in_ = len(FEATURE_NAMES)
        return est


__all__ = [
    "FrontBackClassifier",
    "HierarchicalModel",
    "HierarchicalOrientationRegressor",
    "REFERENCE_BETA",
    "RidgeAngleRegressor",
    "classify",
    "fit_hier",
    "fit_logistic",
    "fit_one_step",
    "fit_ridge",
    "linear_predict",
    "orientation_class",
    "predict_hier",
    "predict_one_step",
    "ridge_objective",
]
