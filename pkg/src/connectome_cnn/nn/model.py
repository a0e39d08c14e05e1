"""Batched forward and backward passes for the three architectures.

Inputs are batches: CCNN takes ``(B, C, N, N)`` stacked connectivity
matrices, the fully connected nets take ``(B, features)`` vectors.

Dropout is inverted: kept activations are scaled by ``1 / keep_prob`` during
training so evaluation needs no rescaling.  Masks are drawn once per forward
call and returned in the cache, so a backward pass (or a finite-difference
check) can hold them fixed.
"""

import numpy as np

from ..errors import DataError

PROB_FLOOR = 1e-12


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0.0)


def cross_entropy_loss(probs, labels):
    """Mean of ``-log(max(p[label], 1e-12))`` over the batch.

    A single distribution with a scalar label gives that instance's loss.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return float(-np.log(max(probs[int(labels)], PROB_FLOOR)))
    labels = np.asarray(labels, dtype=np.int64)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def _mask(site, shape, spec, mode, keep_prob, rng, masks):
    """Return the dropout multiplier for ``site`` (already scaled by 1/keep)."""
    if mode != "train" or site not in spec.dropout_layers or keep_prob >= 1.0:
        return None
    if masks is not None and site in masks:
        return masks[site]
    if rng is None:
        raise ValueError("train-mode dropout needs an rng or explicit masks")
    return (rng.random(shape) < keep_prob) / keep_prob


def _check_input(spec, x):
    if spec.kind == "ccnn":
        want = (spec.channels, spec.roi_count, spec.roi_count)
        if x.ndim != 4 or x.shape[1:] != want:
            raise DataError(f"CCNN input must have shape (B, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
    elif x.ndim != 2 or x.shape[1] != spec.input_features:
        raise DataError(f"{spec.kind} input must have shape (B, {spec.input_features}), got {x.shape}")


def forward(spec, params, x, mode="eval", rng=None, keep_prob=1.0, masks=None):
    """Run the network; return ``(probs, cache)``.

    ``params`` is a ParamStore or a plain name -> array mapping.
    """
    p = getattr(params, "params", params)
    x = np.asarray(x, dtype=np.float64)
    _check_input(spec, x)
    cache = {"x": x, "masks": {}}

    def drop(site, a):
        m = _mask(site, a.shape, spec, mode, keep_prob, rng, masks)
        if m is None:
            return a
        cache["masks"][site] = m
        return a * m

    if spec.kind == "ccnn":
        b, c, n, _ = x.shape
        f1 = spec.conv1_filters
        # each matrix row (an ROI's fingerprint over all channels) is one patch
        rows = x.transpose(0, 2, 1, 3).reshape(b * n, c * n)
        z1 = (rows @ p["W1"].reshape(f1, c * n).T).reshape(b, n, f1) + p["b1"]
        a1 = drop("conv1", relu(z1))
        flat1 = a1.transpose(0, 2, 1).reshape(b, f1 * n)
        z2 = flat1 @ p["W2"].reshape(spec.conv2_filters, f1 * n).T + p["b2"]
        a2 = drop("conv2", relu(z2))
        z3 = a2 @ p["W3"].T + p["b3"]
        a3 = drop("fc", relu(z3))
        logits = a3 @ p["W4"].T + p["b4"]
        cache.update(rows=rows, z1=z1, flat1=flat1, z2=z2, a2=a2, z3=z3, a3=a3)
    elif spec.kind == "simple":
        z1 = x @ p["W1"].T + p["b1"]
        h = sigmoid(z1)
        logits = h @ p["W2"].T + p["b2"]
        cache.update(h=h)
    else:
        z1 = x @ p["W1"].T + p["b1"]
        a1 = drop("hidden1", relu(z1))
        z2 = a1 @ p["W2"].T + p["b2"]
        a2 = drop("hidden2", relu(z2))
        logits = a2 @ p["W3"].T + p["b3"]
        cache.update(z1=z1, a1=a1, z2=z2, a2=a2)
    probs = softmax(logits)
    cache["probs"] = probs
    return probs, cache


def backward(spec, params, cache, labels):
    """Gradients of the mean cross-entropy w.r.t. every parameter.

    Uses the activations and dropout masks stored in ``cache`` by
    :func:`forward`.
    """
    p = getattr(params, "params", params)
    probs = cache["probs"]
    labels = np.asarray(labels, dtype=np.int64)
    b = probs.shape[0]
    masks = cache["masks"]
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    g = {}

    def undrop(site, d):
        m = masks.get(site)
        return d if m is None else d * m

    if spec.kind == "ccnn":
        x = cache["x"]
        _, c, n, _ = x.shape
        f1, f2 = spec.conv1_filters, spec.conv2_filters
        g["W4"] = dlogits.T @ cache["a3"]
        g["b4"] = dlogits.sum(axis=0)
        dz3 = undrop("fc", dlogits @ p["W4"]) * (cache["z3"] > 0)
        g["W3"] = dz3.T @ cache["a2"]
        g["b3"] = dz3.sum(axis=0)
        dz2 = undrop("conv2", dz3 @ p["W3"]) * (cache["z2"] > 0)
        g["W2"] = (dz2.T @ cache["flat1"]).reshape(f2, f1, n)
        g["b2"] = dz2.sum(axis=0)
        da1 = (dz2 @ p["W2"].reshape(f2, f1 * n)).reshape(b, f1, n).transpose(0, 2, 1)
        dz1 = undrop("conv1", da1) * (cache["z1"] > 0)
        dz1 = dz1.reshape(b * n, f1)
        g["W1"] = (dz1.T @ cache["rows"]).reshape(f1, c, n)
        g["b1"] = dz1.sum(axis=0)
    elif spec.kind == "simple":
        h = cache["h"]
        g["W2"] = dlogits.T @ h
        g["b2"] = dlogits.sum(axis=0)
        dz1 = (dlogits @ p["W2"]) * h * (1.0 - h)
        g["W1"] = dz1.T @ cache["x"]
        g["b1"] = dz1.sum(axis=0)
    else:
        g["W3"] = dlogits.T @ cache["a2"]
        g["b3"] = dlogits.sum(axis=0)
        dz2 = undrop("hidden2", dlogits @ p["W3"]) * (cache["z2"] > 0)
        g["W2"] = dz2.T @ cache["a1"]
        g["b2"] = dz2.sum(axis=0)
        dz1 = undrop("hidden1", dz2 @ p["W2"]) * (cache["z1"] > 0)
        g["W1"] = dz1.T @ cache["x"]
        g["b1"] = dz1.sum(axis=0)
    return {name: g[name] for name in p}


def loss_and_grads(spec, params, x, labels, mode="train", rng=None, keep_prob=1.0, masks=None):
    probs, cache = forward(spec, params, x, mode=mode, rng=rng, keep_prob=keep_prob, masks=masks)
    loss = cross_entropy_loss(probs, labels)
    return loss, backward(spec, params, cache, labels), cache
