import itertools
import os

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import cross_val_score

from respire.evaluation import (
    BenchmarkConfig,
    ParticipantKFold,
    cc,
    confusion_matrix,
    feature_pvalues,
    format_summary,
    kfold_split,
    rmse,
    roc_auc,
    run_benchmark,
    write_bundle,
)
from respire.exceptions import DegenerateLabelsError, ParameterError
from respire.features import FeatureTable
from respire.model import BACK, FRONT, RidgeAngleRegressor, orientation_class


def pairwise_concordance(scores, labels):
    pos = scores[labels]
    neg = scores[~labels]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (pos.size * neg.size)


def _table(rng, n_participants=5, thetas=range(0, 181, 10), radars=3):
    rows = []
    for p in range(n_participants):
        for r in range(radars):
            for t in thetas:
                rows.append((p, r, float(t)))
    rows = np.array(rows)
    theta = rows[:, 2]
    n = theta.size
    X = np.column_stack([
        1.09 - 0.55 * theta / 180 + rng.normal(0, 0.08, n),
        0.33 + 0.18 * theta / 180 + rng.normal(0, 0.05, n),
        rng.normal(0, 1, n),
        0.18 + 0.14 * theta / 180 + rng.normal(0, 0.03, n),
        0.2 * (theta > 90) + rng.normal(0, 0.3, n),
    ])
    return FeatureTable(rows[:, 0].astype(int), rows[:, 1].astype(int), theta,
                        np.full(n, 0.25), X, ["ok"] * n)


def test_fold_sizes_for_57_samples_per_participant():
    participant = np.repeat(np.arange(5), 57)
    theta = np.tile(np.repeat(np.arange(0, 181, 10.0), 3), 5)
    folds = kfold_split(participant, theta, k=5, seed=0)
    for p in range(5):
        sizes = sorted(np.bincount(folds[participant == p], minlength=5).tolist(), reverse=True)
        assert sizes == [12, 12, 11, 11, 11]


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000), st.integers(8, 40))
def test_folds_are_balanced_and_deterministic(k, seed, per_participant):
    participant = np.repeat(np.arange(3), per_participant)
    theta = np.tile(np.linspace(0, 180, per_participant), 3)
    folds = kfold_split(participant, theta, k, seed)
    assert np.array_equal(folds, kfold_split(participant, theta, k, seed))
    for p in range(3):
        counts = np.bincount(folds[participant == p], minlength=k)
        assert counts.max() - counts.min() <= 1


def test_folds_span_the_angle_range():
    participant = np.repeat(np.arange(2), 19)
    theta = np.tile(np.arange(0, 181, 10.0), 2)
    folds = kfold_split(participant, theta, 5, 3)
    for f in range(5):
        angles = theta[folds == f]
        assert angles.min() <= 40 and angles.max() >= 140


def test_single_fold_trains_on_everything_with_a_warning():
    splitter = ParticipantKFold(n_splits=1)
    with pytest.warns(UserWarning):
        ((train, test),) = list(splitter.split(None, np.arange(10.0), np.zeros(10)))
    assert np.array_equal(train, test)


def test_fold_count_above_participant_size_is_rejected():
    with pytest.raises(ParameterError):
        kfold_split(np.zeros(3), np.arange(3.0), k=5)


def test_splitter_plugs_into_sklearn(rng):
    table = _table(rng)
    scores = cross_val_score(RidgeAngleRegressor(), table.X, table.theta,
                             groups=table.participant, cv=ParticipantKFold(5, seed=1),
                             scoring="neg_root_mean_squared_error")
    assert scores.shape == (5,)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 120), st.integers(0, 2**31 - 1), st.booleans())
def test_auc_equals_pairwise_concordance(n, seed, coarse):
    rng = np.random.default_rng(seed)
    labels = rng.random(n) < 0.5
    labels[0], labels[-1] = True, False
    scores = rng.integers(0, 5, n).astype(float) if coarse else rng.normal(size=n)
    assert roc_auc(scores, labels).auc == pairwise_concordance(scores, labels)


def test_auc_agrees_with_sklearn(rng):
    labels = rng.random(300) < 0.4
    scores = rng.normal(size=300) + labels
    assert roc_auc(scores, labels).auc == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_auc_of_random_scores_is_near_half(rng):
    labels = rng.random(4000) < 0.5
    assert roc_auc(rng.normal(size=4000), labels).auc == pytest.approx(0.5, abs=0.03)


def test_roc_curve_endpoints():
    curve = roc_auc(np.array([0.9, 0.8, 0.3, 0.1]), np.array([1, 0, 1, 0]))
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert curve.auc == 0.75


def test_auc_needs_both_classes():
    with pytest.raises(DegenerateLabelsError):
        roc_auc(np.arange(3.0), np.ones(3, dtype=bool))


def test_pvalues_match_statsmodels_likelihood_ratio(rng):
    table = _table(rng)
    classes = orientation_class(table.theta)
    pvalues, flags = feature_pvalues(table.X, classes)
    assert flags == {}
    y = (classes == FRONT).astype(float)
    for j, name in enumerate(["x1", "x2", "x3", "x4", "x5"]):
        ref = sm.Logit(y, sm.add_constant(table.X[:, j])).fit(disp=0, maxiter=200)
        assert pvalues[name] == pytest.approx(ref.llr_pvalue, rel=1e-5, abs=1e-300)


def test_pvalues_are_calibrated_under_the_null():
    rng = np.random.default_rng(8)
    values = []
    for _ in range(200):
        X = rng.normal(size=(60, 5))
        classes = np.where(rng.random(60) < 0.5, FRONT, BACK)
        values.append(feature_pvalues(X, classes)[0]["x1"])
    assert 0.3 <= np.median(values) <= 0.7


def test_perfect_separation_gives_tiny_pvalue():
    x = np.linspace(0, 1, 60)
    X = np.column_stack([x, np.random.default_rng(0).normal(size=(60, 4))])
    classes = np.where(x > 0.5, FRONT, BACK)
    assert feature_pvalues(X, classes)[0]["x1"] < 1e-6


def test_constant_feature_is_flagged():
    X = np.random.default_rng(0).normal(size=(40, 5))
    X[:, 2] = 1.0
    pvalues, flags = feature_pvalues(X, np.where(np.arange(40) < 20, FRONT, BACK))
    assert pvalues["x3"] == 1.0 and "x3" in flags


def test_cc_and_rmse_examples():
    assert rmse([0.0, 90.0], [10.0, 80.0]) == pytest.approx(10.0)
    theta = np.arange(0, 181, 10.0)
    assert cc(theta, -theta + 180) == pytest.approx(-1.0)
    assert cc(theta, 2 * theta + 3) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        rmse([], [])


def test_confusion_matrix_columns_sum_to_100():
    actual = np.array([1, 1, 1, 1, 2, 2, 2])
    predicted = np.array([1, 1, 1, 2, 2, 2, 1])
    result = confusion_matrix(predicted, actual)
    assert result.counts.tolist() == [[3, 1], [1, 2]]
    np.testing.assert_allclose(result.percent.sum(axis=0), [100.0, 100.0])
    assert result.accuracy == pytest.approx(5 / 7)
    assert result.balanced_accuracy == pytest.approx((0.75 + 2 / 3) / 2)


def test_summary_line_format():
    methods = {"a": {"cc": 0.74, "rmse_deg": 38.3}, "d": {"cc": 0.91, "rmse_deg": 23.1}}
    assert format_summary(methods) == "(a) ρ=0.74 ε=38.3°; (d) ρ=0.91 ε=23.1°"


def test_benchmark_report_structure(rng, tmp_path):
    table = _table(rng)
    report = run_benchmark(table, BenchmarkConfig(methods=("a", "d"), seed=2))
    assert set(report.methods) == {"a", "d"}
    assert report.methods["d"]["rmse_deg"] < report.methods["a"]["rmse_deg"]
    assert len(report.fold_assignments) == len(table)
    assert report.confusion.accuracy > 0.75
    write_bundle(report, tmp_path)
    files = set(os.listdir(tmp_path))
    assert {"report.json", "summary.csv", "scatter_a.csv", "scatter_d.csv",
            "roc_x1.csv", "roc_x1_x2_x4_x5.csv"} <= files
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "method,cc,rmse_deg" and len(lines) == 3
    assert (tmp_path / "scatter_a.csv").read_text().splitlines()[0] == "theta_deg,theta_hat_deg"
    assert (tmp_path / "roc_x1.csv").read_text().splitlines()[0] == "fpr,tpr"


def test_benchmark_is_deterministic(rng):
    table = _table(rng)
    a = run_benchmark(table, BenchmarkConfig(seed=5)).to_json()
    b = run_benchmark(table, BenchmarkConfig(seed=5)).to_json()
    assert a == b


def test_benchmark_ignores_invalid_rows(rng):
    table = _table(rng, n_participants=2)
    table.status[0] = "degenerate-fundamental"
    table.X[0] = np.nan
    report = run_benchmark(table, BenchmarkConfig(k=3))
    assert report.metadata["n_samples"] == len(table) - 1


def test_benchmark_with_single_fold_flags_training_on_test(rng):
    report = run_benchmark(_table(rng, n_participants=2), BenchmarkConfig(k=1))
    assert report.metadata["train_equals_test"] is True


def test_benchmark_rejects_unknown_methods():
    with pytest.raises(ParameterError):
        BenchmarkConfig(methods=("a", "z"))
