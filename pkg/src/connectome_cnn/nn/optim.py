import numba as nb
import numpy as np


@nb.njit(cache=True)
def _adam_kernel(theta, m, v, g, b1, b2, eps, lr, c1, c2):
    for i in range(theta.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        theta[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def adam_step(store, grads, cfg):
    """One Adam update with bias correction, in place. Returns ``store``."""
    store.t += 1
    c1 = 1.0 - cfg.adam_beta1 ** store.t
    c2 = 1.0 - cfg.adam_beta2 ** store.t
    for name, g in grads.items():
        _adam_kernel(store.params[name].reshape(-1), store.m[name].reshape(-1),
                     store.v[name].reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                     cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.learning_rate, c1, c2)
    return store


def sgd_step(store, grads, cfg):
    lr = cfg.learning_rate
    for name, g in grads.items():
        store.params[name] -= lr * g
    store.t += 1
    return store


def optimizer_step(store, grads, cfg):
    if cfg.optimizer == "adam":
        return adam_step(store, grads, cfg)
    return sgd_step(store, grads, cfg)
