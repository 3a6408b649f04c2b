"""Input validation helpers shared by the estimators and the signal chain."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ParameterError

FEATURE_NAMES = ("x1", "x2", "x3", "x4", "x5")


def check_features(X):
    """Validate a feature matrix with one column per feature x1..x5."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != len(FEATURE_NAMES):
        raise ParameterError(
            f"expected {len(FEATURE_NAMES)} feature columns (x1..x5), got {X.shape[1]}"
        )
    return X


def check_mask(features):
    """Normalize a feature mask to a sorted tuple of known feature names."""
    if isinstance(features, str):
        features = [f.strip() for f in features.split(",") if f.strip()]
    names = tuple(features)
    unknown = [f for f in names if f not in FEATURE_NAMES]
    if unknown:
        raise ParameterError(f"unknown features {unknown}; valid names are {FEATURE_NAMES}")
    if len(set(names)) != len(names):
        raise ParameterError(f"duplicate features in mask {names}")
    return tuple(f for f in FEATURE_NAMES if f in names)


def design_matrix(X, features):
    """Constant column followed by the masked feature columns."""
    idx = [FEATURE_NAMES.index(f) for f in features]
    return np.column_stack([np.ones(X.shape[0]), X[:, idx]])


def expand_weights(w_active, features):
    """Embed active-feature weights into the full 6-vector [const, x1..x5]."""
    full = np.zeros(len(FEATURE_NAMES) + 1)
    full[0] = w_active[0]
    for value, name in zip(w_active[1:], features):
        full[1 + FEATURE_NAMES.index(name)] = value
    return full


def check_theta(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise ParameterError("orientation angles must be a 1-D array")
    if not np.all(np.isfinite(theta)):
        raise ParameterError("orientation angles must be finite")
    if np.any((theta < 0) | (theta > 180)):
        raise ParameterError("orientation angles must lie in [0, 180] degrees")
    return theta


def check_positive(name, value):
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value}")
    return value


def principal_angle(phase):
    """Map phases into (-pi, pi]."""
    phase = np.angle(np.exp(1j * np.asarray(phase, dtype=np.float64)))
    return np.where(phase <= -np.pi, np.pi, phase)
