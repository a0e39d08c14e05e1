import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exact_binomial_cdf, pairwise_auc

from connectome_cnn.core import Dataset
from connectome_cnn.errors import ConfigError, DataError
from connectome_cnn.evaluation import (
    accuracy,
    auc,
    baseline_accuracy,
    binomial_cdf,
    binomial_sf,
    compare_classifiers,
    grouped_kfold,
    plain_kfold,
    run_crossval,
)
from connectome_cnn.nn import ModelSpec, TrainConfig


def test_grouped_kfold_49_subjects():
    subjects = [f"s{i:02d}" for i in range(49) for _ in range(3)]
    fa = grouped_kfold(subjects, 7, seed=1)
    per_fold = {}
    for i, s in enumerate(subjects):
        per_fold.setdefault(fa.assignment[i], set()).add(s)
    assert sorted(len(v) for v in per_fold.values()) == [7] * 7
    for s in set(subjects):
        assert len({fa.assignment[i] for i, t in enumerate(subjects) if t == s}) == 1
    assert grouped_kfold(subjects, 7, seed=1).assignment == fa.assignment
    assert grouped_kfold(subjects, 7, seed=2).assignment != fa.assignment


def test_kfold_errors():
    with pytest.raises(ConfigError):
        grouped_kfold(["a", "a", "b"], 3, 0)
    with pytest.raises(ConfigError):
        plain_kfold(4, 5, 0)


def test_plain_kfold_sizes():
    assert plain_kfold(150, 10, 0).sizes() == [15] * 10
    assert sorted(plain_kfold(7, 3, 0).sizes()) == [2, 2, 3]


@settings(max_examples=1000, deadline=None)
@given(n=st.integers(1, 60), data=st.data(), seed=st.integers(0, 2**32))
def test_fold_partitions_exact(n, data, seed):
    k = data.draw(st.integers(1, n))
    fa = plain_kfold(n, k, seed)
    members = [fa.members(f) for f in range(k)]
    flat = sorted(i for m in members for i in m)
    assert flat == list(range(n))
    assert max(fa.sizes()) - min(fa.sizes()) <= 1
    subjects = data.draw(st.lists(st.integers(0, 9), min_size=n, max_size=n))
    distinct = len(set(subjects))
    kg = data.draw(st.integers(1, distinct))
    ga = grouped_kfold(subjects, kg, seed)
    assert sorted(ga.assignment) == list(range(n))
    fold_of_subject = {}
    for i, s in enumerate(subjects):
        assert fold_of_subject.setdefault(s, ga.assignment[i]) == ga.assignment[i]


def test_accuracy_examples():
    assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
    preds = [1] * 105 + [0] * 41
    assert accuracy(preds, [1] * 146) == pytest.approx(0.719, abs=5e-4)
    with pytest.raises(DataError):
        accuracy([], [])


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]) == 0.75
    assert pairwise_auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]) == 0.75
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.4] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(DataError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_auc_matches_pairwise_oracle(data):
    n = data.draw(st.integers(2, 30))
    labels = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if len(set(labels)) < 2:
        return
    scores = data.draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]) | st.floats(0, 1),
                                min_size=n, max_size=n))
    a = auc(scores, labels)
    assert a == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)
    flipped = [1 - v for v in labels]
    assert abs(a + auc(scores, flipped) - 1.0) <= 1e-12


def test_binomial_cdf_against_exact_rational():
    for n, k in [(10, 3), (150, 85), (146, 83), (60, 0), (500, 260)]:
        assert abs(binomial_cdf(n, k, 0.5) - float(exact_binomial_cdf(n, k, 1, 2))) < 1e-12
    assert abs(binomial_cdf(30, 9, 0.3) - float(exact_binomial_cdf(30, 9, 3, 10))) < 1e-12
    assert binomial_cdf(7, 7, 0.3) == 1.0


def test_binomial_cdf_large_n():
    # log-domain summation stays accurate where plain products underflow
    val = binomial_cdf(10_000, 5_100, 0.5)
    assert abs(val - float(exact_binomial_cdf(10_000, 5_100, 1, 2))) < 1e-9


def test_binomial_cdf_monotone_and_sf():
    vals = [binomial_cdf(40, k, 0.5) for k in range(41)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    for k in range(1, 41):
        assert binomial_sf(40, k, 0.5) == pytest.approx(1.0 - vals[k - 1], abs=1e-12)
    with pytest.raises(ValueError):
        binomial_cdf(5, 6, 0.5)


def test_baseline_anchors():
    k, acc = baseline_accuracy(150)
    assert k == 85 and round(100 * acc, 2) == 56.67
    k, acc = baseline_accuracy(146)
    assert k == 83 and round(100 * acc, 2) == 56.85
    assert baseline_accuracy(1) == (1, 1.0)


def test_binomial_anchor_values():
    # exact values for the two anchor cells; the first differs from the rounded
    # figure usually quoted alongside it (see acceptance suite)
    assert binomial_cdf(146, 83, 0.5) == pytest.approx(0.959, abs=1e-3)
    assert binomial_cdf(150, 85, 0.5) == pytest.approx(0.95696, abs=1e-5)


def test_compare_classifiers_examples():
    labels = [1] * 10
    assert compare_classifiers(labels, labels, labels) == 1.0
    assert compare_classifiers([1] * 10, [0] * 10, labels) == pytest.approx(2 * 0.5 ** 10, abs=1e-15)
    assert compare_classifiers([1] * 5 + [0] * 5, [0] * 5 + [1] * 5, labels) == 1.0
    # agreements are ignored
    assert compare_classifiers([1] * 12, [0] * 10 + [1] * 2, [1] * 12) == pytest.approx(2 * 0.5 ** 10)


def _feature_dataset(x, y):
    n = len(y)
    tensor = np.zeros((n, 1, 3, 3))
    iu = np.triu_indices(3, 1)
    for i in range(n):
        m = np.eye(3)
        m[iu] = x[i]
        m[(iu[1], iu[0])] = x[i]
        tensor[i, 0] = m
    return Dataset.from_arrays(tensor, y, [f"sub{i}" for i in range(n)], ["correlation"])


def test_crossval_sanity_dataset():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((150, 3))
    y = (x[:, 0] > 0).astype(int)
    ds = _feature_dataset(x, y)
    spec = ModelSpec("simple", 3, feature_units=8)
    cfg = TrainConfig(optimizer="sgd", learning_rate=0.5, epochs=60, batch_size=16, seed=3)
    rep = run_crossval(ds, spec, cfg, plain_kfold(150, 10, 0))
    assert rep.n == 150 and len(rep.per_fold_accuracy) == 10
    assert rep.pooled_accuracy >= 0.95
    assert (rep.baseline_k, rep.baseline_accuracy) == (85, 85 / 150)
    assert 0.0 <= rep.pooled_auc <= 1.0


def test_crossval_workers_do_not_change_results():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 3))
    ds = _feature_dataset(x, (x[:, 1] > 0).astype(int))
    spec = ModelSpec("deep", 3, feature_units=6, hidden=4)
    cfg = TrainConfig(learning_rate=1e-2, epochs=5, seed=9)
    folds = plain_kfold(40, 4, 0)
    a = run_crossval(ds, spec, cfg, folds)
    b = run_crossval(ds, spec, cfg, folds, workers=3)
    assert a.scores == b.scores and a.predictions == b.predictions


def test_shuffled_labels_stay_below_baseline():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((150, 3))
    y = np.array([0, 1] * 75)
    ds = _feature_dataset(x, rng.permutation(y))
    spec = ModelSpec("simple", 3, feature_units=8)
    below = 0
    for seed in range(10):
        cfg = TrainConfig(optimizer="sgd", learning_rate=0.1, epochs=20, seed=seed)
        rep = run_crossval(ds, spec, cfg, plain_kfold(150, 10, seed))
        below += rep.pooled_accuracy < rep.baseline_accuracy
    assert below >= 9


def test_report_json_and_comparison():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((30, 3))
    ds = _feature_dataset(x, (x[:, 2] > 0).astype(int))
    folds = plain_kfold(30, 3, 0)
    a = run_crossval(ds, ModelSpec("simple", 3), TrainConfig(optimizer="sgd", epochs=3), folds)
    b = run_crossval(ds, ModelSpec("deep", 3), TrainConfig(epochs=3), folds)
    pv = a.compare_to(b)
    assert 0.0 <= pv <= 1.0
    doc = a.to_json()
    assert doc["comparisons"] == [{"other": "deep", "p_value": pv}]
    assert len(doc["predictions"]) == 30
    assert math.isclose(doc["pooled_accuracy"], a.pooled_accuracy)
