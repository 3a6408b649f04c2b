import json

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.linear_model import Ridge

from respire.exceptions import (
    DegenerateLabelsError,
    DegeneratePartitionError,
    ParameterError,
    RankDeficiencyError,
)
from respire.model import (
    BACK,
    FRONT,
    REFERENCE_BETA,
    FrontBackClassifier,
    HierarchicalModel,
    HierarchicalOrientationRegressor,
    RidgeAngleRegressor,
    classify,
    fit_hier,
    fit_logistic,
    fit_ridge,
    orientation_class,
    predict_hier,
    ridge_objective,
)


def _features(x1):
    X = np.zeros((np.size(x1), 5))
    X[:, 0] = x1
    return X


def _cohort(rng, n=120):
    theta = rng.uniform(0, 180, n)
    X = np.column_stack([
        1.1 - 0.0035 * theta + rng.normal(0, 0.12, n),
        0.3 + 0.001 * theta + rng.normal(0, 0.05, n),
        rng.normal(0, 1, n),
        0.2 + 0.0008 * theta + rng.normal(0, 0.05, n),
        rng.normal(0, 1, n),
    ])
    return X, theta


@pytest.mark.parametrize("x1, logit, cls", [(1.09, 1.9537, FRONT), (0.54, -1.8578, BACK)])
def test_reference_classifier_examples(x1, logit, cls):
    classes, z = classify(REFERENCE_BETA, _features([x1]))
    assert z[0] == pytest.approx(logit, abs=1e-4)
    assert classes[0] == cls


def test_reference_classifier_boundary_goes_to_front():
    classes, z = classify(REFERENCE_BETA, _features([0.8081]))
    assert z[0] == pytest.approx(0.0, abs=1e-3)
    assert classes[0] == FRONT
    beta = np.array([-1.0, 2.0, 0, 0, 0, 0])
    classes, z = classify(beta, _features([0.5]))
    assert z[0] == 0.0 and classes[0] == FRONT


def test_orientation_class_boundary():
    assert orientation_class([0, 89.9, 90, 180]).tolist() == [FRONT, FRONT, BACK, BACK]


def test_logistic_fit_matches_statsmodels(rng):
    X, theta = _cohort(rng)
    classes = orientation_class(theta)
    beta, history = fit_logistic(X, classes, ("x1", "x2", "x4"))
    A = sm.add_constant(X[:, [0, 1, 3]])
    ref = sm.Logit((classes == FRONT).astype(float), A).fit(disp=0, tol=1e-12, maxiter=200)
    np.testing.assert_allclose(beta[[0, 1, 2, 4]], ref.params, rtol=1e-6, atol=1e-6)
    assert beta[3] == 0 and beta[5] == 0
    assert history[-1] == pytest.approx(-ref.llf, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_logistic_likelihood_never_increases(seed):
    rng = np.random.default_rng(seed)
    X, theta = _cohort(rng, n=40)
    # separable or not, the objective must decrease monotonically
    _, history = fit_logistic(X, orientation_class(theta), ("x1", "x2"))
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_logistic_fit_on_separable_data_terminates_with_correct_sign():
    x1 = np.array([0.2, 0.3, 0.4, 1.0, 1.1, 1.2])
    classes = np.array([BACK, BACK, BACK, FRONT, FRONT, FRONT])
    beta, history = fit_logistic(_features(x1), classes)
    assert beta[1] > 0
    assert len(history) <= 101
    assert np.array_equal(classify(beta, _features(x1))[0], classes)


def test_logistic_needs_both_classes():
    with pytest.raises(DegenerateLabelsError):
        fit_logistic(_features([1.0, 2.0]), [FRONT, FRONT])


def test_ridge_zero_penalty_interpolates(rng):
    X = rng.normal(size=(6, 5))
    theta = rng.uniform(0, 180, 6)
    w = fit_ridge(X, theta, ("x1", "x2", "x3", "x4", "x5"), gamma=0.0)
    np.testing.assert_allclose(w[0] + X @ w[1:], theta, atol=1e-8)


def test_ridge_huge_penalty_shrinks_to_zero(rng):
    X = rng.normal(size=(20, 5))
    w = fit_ridge(X, rng.uniform(0, 180, 20), gamma=1e12)
    assert np.max(np.abs(w)) < 1e-6


def test_ridge_singular_design_without_penalty_is_rejected():
    X = np.ones((10, 5))
    with pytest.raises(RankDeficiencyError):
        fit_ridge(X, np.arange(10.0), gamma=0.0)
    # any positive penalty makes it well posed
    assert np.all(np.isfinite(fit_ridge(X, np.arange(10.0), gamma=0.05)))


def test_ridge_matches_sklearn_on_the_augmented_design(rng):
    X = rng.normal(size=(30, 5))
    theta = rng.uniform(0, 180, 30)
    w = fit_ridge(X, theta, ("x1", "x2", "x4", "x5"), gamma=0.05)
    A = np.column_stack([np.ones(30), X[:, [0, 1, 3, 4]]])
    ref = Ridge(alpha=0.05, fit_intercept=False, solver="cholesky").fit(A, theta)
    np.testing.assert_allclose(w[[0, 1, 2, 4, 5]], ref.coef_, atol=1e-9)
    assert w[3] == 0.0


def test_unpenalized_intercept_matches_sklearn_with_intercept(rng):
    X = rng.normal(size=(30, 5))
    theta = rng.uniform(0, 180, 30)
    w = fit_ridge(X, theta, ("x1", "x2", "x3", "x4", "x5"), gamma=2.0, penalize_intercept=False)
    ref = Ridge(alpha=2.0, fit_intercept=True, solver="cholesky").fit(X, theta)
    assert w[0] == pytest.approx(ref.intercept_, abs=1e-9)
    np.testing.assert_allclose(w[1:], ref.coef_, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 10.0))
def test_ridge_solution_is_a_minimum(seed, gamma):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 5))
    theta = rng.uniform(0, 180, 20)
    w = fit_ridge(X, theta, ("x1", "x2", "x3", "x4", "x5"), gamma)
    best = ridge_objective(w, X, theta, gamma)
    for _ in range(5):
        assert ridge_objective(w + rng.normal(0, 1e-3, 6), X, theta, gamma) >= best


def test_ridge_rejects_negative_gamma():
    with pytest.raises(ParameterError):
        fit_ridge(np.zeros((3, 5)), np.zeros(3), gamma=-1.0)


def test_hierarchical_model_routes_through_the_classifier(rng):
    X, theta = _cohort(rng, n=200)
    model = fit_hier(X, theta)
    raw = predict_hier(model, X, clip=False)
    classes, _ = classify(model.beta, X)
    expected = np.where(classes == FRONT, model.w1[0] + X @ model.w1[1:],
                        model.w2[0] + X @ model.w2[1:])
    np.testing.assert_allclose(raw, expected)
    clipped = predict_hier(model, X)
    assert clipped.min() >= 0 and clipped.max() <= 180


def test_masks_zero_the_unused_weights(rng):
    X, theta = _cohort(rng)
    model = fit_hier(X, theta)
    assert model.beta[2:].tolist() == [0.0] * 4
    assert model.w1[3] == 0.0 and model.w2[3] == 0.0


def test_model_json_round_trip(rng):
    X, theta = _cohort(rng)
    model = fit_hier(X, theta, partition="classifier")
    model.provenance = {"seed": 3, "dataset_hash": "abc"}
    text = model.to_json()
    doc = json.loads(text)
    for key in ("beta", "w1", "w2", "gamma", "masks", "feature_scaling_note", "provenance"):
        assert key in doc
    back = HierarchicalModel.from_json(text)
    assert back.to_json() == text
    np.testing.assert_array_equal(predict_hier(back, X), predict_hier(model, X))


def test_model_json_rejects_wrong_length():
    doc = {"beta": [0.0] * 5, "w1": [0.0] * 6, "w2": [0.0] * 6, "gamma": 0.05,
           "masks": {"step1": ["x1"], "step2": ["x1"]}}
    with pytest.raises(ParameterError):
        HierarchicalModel.from_dict(doc)


def test_empty_partition_is_reported(rng):
    X, _ = _cohort(rng, n=20)
    with pytest.raises((DegeneratePartitionError, DegenerateLabelsError)):
        fit_hier(X, np.full(20, 30.0))


def test_classifier_partition_can_be_empty():
    # classifier that puts everything on one side: x1 carries no information
    X = np.zeros((8, 5))
    X[:, 1] = np.arange(8.0)
    theta = np.array([0, 170, 10, 160, 20, 150, 30, 140], dtype=float)
    with pytest.raises(DegeneratePartitionError):
        fit_hier(X, theta, partition="classifier")


def test_estimators_follow_the_sklearn_api(rng):
    X, theta = _cohort(rng)
    for est in (RidgeAngleRegressor(gamma=0.1), HierarchicalOrientationRegressor(gamma=0.1)):
        assert clone(est).get_params() == est.get_params()
        pred = est.fit(X, theta).predict(X)
        assert pred.shape == theta.shape
        assert 0 <= pred.min() and pred.max() <= 180
    clf = FrontBackClassifier().fit(X, orientation_class(theta))
    assert clf.beta_[1] > 0
    assert set(clf.predict(X)) <= {FRONT, BACK}
    proba = clf.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert clf.score(X, orientation_class(theta)) > 0.8


def test_hierarchical_estimator_wraps_a_saved_model(rng):
    X, theta = _cohort(rng)
    model = fit_hier(X, theta)
    est = HierarchicalOrientationRegressor.from_model(model)
    np.testing.assert_array_equal(est.predict(X), predict_hier(model, X))
