"""Mini-batch training loop and prediction."""

import logging

import numpy as np

from .. import seeding
from ..errors import DataError, NumericalError
from .model import cross_entropy_loss, forward, loss_and_grads
from .optim import optimizer_step
from .params import init_params

log = logging.getLogger(__name__)

# derivation paths under (STAGE_TRAIN, seed)
_INIT, _SHUFFLE, _DROPOUT = 0, 1, 2


def model_inputs(spec, dataset, indices=None):
    """Network input for ``dataset``: stacked matrices (CCNN) or feature vectors."""
    if len(dataset.channel_metrics) != spec.channels or dataset.roi_count != spec.roi_count:
        raise DataError(f"dataset has C={dataset.channel_count}, N={dataset.roi_count}; "
                        f"model expects C={spec.channels}, N={spec.roi_count}")
    data = dataset.tensor() if spec.kind == "ccnn" else dataset.features()
    return data if indices is None else data[np.asarray(indices)]


def train(spec, x, y, cfg, params=None):
    """Train ``spec`` on inputs ``x`` and labels ``y``.

    Returns
    -------
    store : ParamStore
    history : list of float
        Mean training loss per epoch (dropout active).

    Raises
    ------
    NumericalError
        As soon as a batch loss or parameter becomes non-finite.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y) or len(y) == 0:
        raise DataError("need a non-empty training set with one label per instance")
    store = params if params is not None else init_params(spec, seeding.generator(cfg.seed, seeding.STAGE_TRAIN, _INIT))
    shuffle_rng = seeding.generator(cfg.seed, seeding.STAGE_TRAIN, _SHUFFLE)
    drop_rng = seeding.generator(cfg.seed, seeding.STAGE_TRAIN, _DROPOUT)
    n = len(y)
    history = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(spec, store, x[idx], y[idx], mode="train",
                                            rng=drop_rng, keep_prob=cfg.keep_prob)
            if not np.isfinite(loss):
                norms = {k: float(np.linalg.norm(a)) for k, a in store.params.items()}
                worst = max(norms, key=lambda k: norms[k] if np.isfinite(norms[k]) else np.inf)
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}; "
                                     f"largest parameter norm {worst}={norms[worst]:.3g}")
            optimizer_step(store, grads, cfg)
            total += loss * len(idx)
        if not store.all_finite():
            bad = [k for k, a in store.params.items() if not np.all(np.isfinite(a))]
            raise NumericalError(f"non-finite parameters {bad} after epoch {epoch}")
        history.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return store, history


def predict_proba(store, spec, x, batch_size=64):
    x = np.asarray(x, dtype=np.float64)
    out = [forward(spec, store, x[i:i + batch_size], mode="eval")[0]
           for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.empty((0, spec.classes))


def predict(store, spec, x):
    """Predicted labels and positive-class scores.

    A single instance (no batch axis) gives ``(int, float)``; a batch gives
    two arrays. Ties go to the lower class index.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == (3 if spec.kind == "ccnn" else 1)
    probs = predict_proba(store, spec, x[None] if single else x)
    labels = probs.argmax(axis=1)
    scores = probs[:, 1]
    if single:
        return int(labels[0]), float(scores[0])
    return labels, scores


def evaluate_loss(store, spec, x, y):
    probs = predict_proba(store, spec, x)
    return cross_entropy_loss(probs, y)
