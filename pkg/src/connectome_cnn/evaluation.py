"""Cross-validation, accuracy/AUC, binomial chance baselines and classifier comparison."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import seeding
from .core import FoldAssignment
from .errors import ConfigError, DataError
from .nn.train import model_inputs, predict, train

SIGNIFICANCE_QUANTILE = 0.95


def grouped_kfold(subject_ids, k, seed, ids=None):
    """Assign instances to ``k`` folds so that no subject spans two folds.

    Distinct subjects (sorted, then shuffled with the seed) are dealt
    round-robin to the folds. ``subject_ids[i]`` belongs to instance
    ``ids[i]`` (default: the integer ``i``).
    """
    subject_ids = [str(s) for s in subject_ids]
    ids = list(range(len(subject_ids))) if ids is None else list(ids)
    subjects = sorted(set(subject_ids))
    if not 1 <= k <= len(subjects):
        raise ConfigError(f"cannot split {len(subjects)} subjects into {k} folds")
    rng = seeding.generator(seed, seeding.STAGE_FOLDS, 0)
    order = rng.permutation(len(subjects))
    fold_of = {subjects[s]: pos % k for pos, s in enumerate(order)}
    return FoldAssignment(k, {i: fold_of[s] for i, s in zip(ids, subject_ids)})


def plain_kfold(n, k, seed, ids=None):
    """Seeded shuffle dealt round-robin; fold sizes differ by at most one."""
    if not 1 <= k <= n:
        raise ConfigError(f"cannot split {n} instances into {k} folds")
    ids = list(range(n)) if ids is None else list(ids)
    rng = seeding.generator(seed, seeding.STAGE_FOLDS, 1)
    order = rng.permutation(n)
    return FoldAssignment(k, {ids[idx]: pos % k for pos, idx in enumerate(order)})


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise DataError("accuracy needs equally long, non-empty inputs")
    return float(np.count_nonzero(predictions == labels)) / labels.size


def auc(scores, labels):
    """ROC AUC as the Mann-Whitney statistic with midranks (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n1 = int(np.count_nonzero(pos))
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise DataError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _log_pmf_terms(n, lo, hi, p):
    i = np.arange(lo, hi + 1)
    log_choose = (math.lgamma(n + 1) - np.array([math.lgamma(v + 1) for v in i])
                  - np.array([math.lgamma(n - v + 1) for v in i]))
    return log_choose + i * math.log(p) + (n - i) * math.log1p(-p)


def _check_binom(n, k, p):
    if int(n) != n or n < 0 or int(k) != k or not 0 <= k <= n:
        raise ValueError(f"need integers 0 <= k <= n, got n={n}, k={k}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def binomial_cdf(n, k, p):
    """P(X <= k) for X ~ Binomial(n, p), summed in the log domain."""
    _check_binom(n, k, p)
    n, k = int(n), int(k)
    if k == n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    return min(1.0, math.fsum(np.exp(_log_pmf_terms(n, 0, k, p))))


def binomial_sf(n, k, p):
    """P(X >= k)."""
    _check_binom(n, k, p)
    n, k = int(n), int(k)
    if k == 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    return min(1.0, math.fsum(np.exp(_log_pmf_terms(n, k, n, p))))


def baseline_accuracy(n, quantile=SIGNIFICANCE_QUANTILE):
    """Smallest ``k`` with ``binomial_cdf(n, k, 0.5) >= quantile``; returns ``(k, k / n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for k in range(n + 1):
        if binomial_cdf(n, k, 0.5) >= quantile:
            return k, k / n
    return n, 1.0  # pragma: no cover - cdf(n, n) == 1


def compare_classifiers(preds_a, preds_b, labels):
    """Two-sided exact binomial test on the instances where exactly one model is right."""
    a = np.asarray(preds_a) == np.asarray(labels)
    b = np.asarray(preds_b) == np.asarray(labels)
    if a.shape != b.shape:
        raise DataError("prediction vectors differ in length")
    wins_a = int(np.count_nonzero(a & ~b))
    s = wins_a + int(np.count_nonzero(b & ~a))
    if s == 0:
        return 1.0
    tail = min(binomial_cdf(s, wins_a, 0.5), binomial_sf(s, wins_a, 0.5))
    return min(1.0, 2.0 * tail)


@dataclass
class EvalReport:
    model: str
    per_fold_accuracy: list
    pooled_accuracy: float
    pooled_auc: float
    n: int
    baseline_k: int
    baseline_accuracy: float
    fold_mean_accuracy: float
    ids: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    folds: list = field(default_factory=list)
    comparisons: list = field(default_factory=list)

    def to_json(self, include_predictions=True):
        doc = {
            "model": self.model,
            "n": self.n,
            "pooled_accuracy": self.pooled_accuracy,
            "pooled_auc": self.pooled_auc,
            "fold_mean_accuracy": self.fold_mean_accuracy,
            "per_fold_accuracy": list(self.per_fold_accuracy),
            "baseline_k": self.baseline_k,
            "baseline_accuracy": self.baseline_accuracy,
            "significant": self.pooled_accuracy >= self.baseline_accuracy,
            "comparisons": [{"other": o, "p_value": pv} for o, pv in self.comparisons],
        }
        if include_predictions:
            doc["predictions"] = [
                {"id": i, "fold": f, "label": lab, "prediction": p, "score": s}
                for i, f, lab, p, s in zip(self.ids, self.folds, self.labels, self.predictions, self.scores)
            ]
        return doc

    def compare_to(self, other):
        if self.ids != other.ids:
            raise DataError("reports cover different instances")
        pv = compare_classifiers(self.predictions, other.predictions, self.labels)
        self.comparisons.append((other.model, pv))
        return pv


def _fold_indices(dataset, folds):
    keys = list(folds.assignment)
    if len(keys) != len(dataset):
        raise DataError(f"fold assignment covers {len(keys)} instances, dataset has {len(dataset)}")
    if all(isinstance(key, (int, np.integer)) for key in keys):
        fold_of = [folds.assignment[i] for i in range(len(dataset))]
    else:
        fold_of = [folds.assignment[i] for i in dataset.ids]
    return np.asarray(fold_of)


def run_crossval(dataset, spec, train_cfg, folds, workers=1, model_name=None):
    """Train on each fold's complement, predict the fold, pool all predictions.

    Fold ``f`` trains with seed ``derive_seed(train_cfg.seed, STAGE_TRAIN, f)``
    so results do not depend on the order or concurrency of fold runs.
    """
    dataset.require_both_labels()
    fold_of = _fold_indices(dataset, folds)
    x = model_inputs(spec, dataset)
    y = dataset.labels

    def run_fold(f):
        test = np.flatnonzero(fold_of == f)
        tr = np.flatnonzero(fold_of != f)
        cfg = replace(train_cfg, seed=seeding.derive_seed(train_cfg.seed, seeding.STAGE_TRAIN, f))
        store, _ = train(spec, x[tr], y[tr], cfg)
        labels, scores = predict(store, spec, x[test])
        return test, labels, scores

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_fold, range(folds.fold_count)))
    else:
        results = [run_fold(f) for f in range(folds.fold_count)]

    preds = np.empty(len(y), dtype=np.int64)
    scores = np.empty(len(y))
    per_fold = []
    for test, fold_labels, fold_scores in results:
        preds[test] = fold_labels
        scores[test] = fold_scores
        per_fold.append(accuracy(fold_labels, y[test]))
    k, base = baseline_accuracy(len(y))
    return EvalReport(
        model=model_name or spec.kind,
        per_fold_accuracy=per_fold,
        pooled_accuracy=accuracy(preds, y),
        pooled_auc=auc(scores, y),
        n=len(y),
        baseline_k=k,
        baseline_accuracy=base,
        fold_mean_accuracy=float(np.mean(per_fold)),
        ids=list(dataset.ids),
        labels=[int(v) for v in y],
        predictions=[int(v) for v in preds],
        scores=[float(v) for v in scores],
        folds=[int(v) for v in fold_of],
    )
