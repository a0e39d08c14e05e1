"""All-pairs connectivity matrices from ROI time series."""

from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import ConnectivityMatrix, ConnectivityMetric, upper_triangle_indices
from .dtw import DtwConfig, pairwise_dtw
from .errors import ConfigError, DegenerateSeriesError

PATH_VARIANTS = ("excess", "relative")


@dataclass(frozen=True)
class ConnectivityJob:
    metric: ConnectivityMetric
    dtw_cfg: DtwConfig = None
    path_variant: str = "excess"
    # "error" raises on constant ROI series under correlation; "zero" writes 0
    on_constant: str = "error"

    def __post_init__(self):
        object.__setattr__(self, "metric", ConnectivityMetric.parse(self.metric))
        if self.path_variant not in PATH_VARIANTS:
            raise ConfigError(f"path_variant must be one of {PATH_VARIANTS}")
        if self.on_constant not in ("error", "zero"):
            raise ConfigError("on_constant must be 'error' or 'zero'")
        if self.metric is not ConnectivityMetric.CORRELATION and self.dtw_cfg is None:
            raise ConfigError(f"metric {self.metric.value} needs a DtwConfig (warping window)")


@nb.njit(cache=True)
def _pearson(x, y):
    n = x.shape[0]
    mx = 0.0
    my = 0.0
    for t in range(n):
        mx += x[t]
        my += y[t]
    mx /= n
    my /= n
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    for t in range(n):
        dx = x[t] - mx
        dy = y[t] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    if sxx == 0.0 or syy == 0.0:
        return np.nan
    r = sxy / np.sqrt(sxx * syy)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


@nb.njit(parallel=True, cache=True)
def _pearson_pairs(series, rows, cols):
    m = rows.shape[0]
    out = np.empty(m)
    for p in nb.prange(m):
        out[p] = _pearson(series[rows[p]], series[cols[p]])
    return out


def pearson(x1, x2):
    """Pearson product-moment correlation, clamped to [-1, 1].

    Raises
    ------
    DegenerateSeriesError
        If either series is constant.
    """
    x1 = np.ascontiguousarray(x1, dtype=np.float64)
    x2 = np.ascontiguousarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1 or x1.size < 2:
        raise ValueError("pearson needs two 1-d series of equal length >= 2")
    r = _pearson(x1, x2)
    if np.isnan(r):
        raise DegenerateSeriesError("correlation undefined for a constant series")
    return float(r)


def _constant_columns(values):
    return [int(i) for i in np.flatnonzero(np.all(values == values[0], axis=0))]


def connectivity_matrix(ts, job):
    """Compute the N x N matrix of ``job.metric`` over all ROI pairs.

    Each unordered pair i < j is evaluated exactly once and mirrored, so the
    result is symmetric bit-for-bit. The diagonal follows the metric's
    convention (1 for correlation, 0 otherwise).
    """
    values = ts.values
    n = values.shape[1]
    series = np.ascontiguousarray(values.T)
    rows, cols = upper_triangle_indices(n)
    metric = job.metric

    if metric is ConnectivityMetric.CORRELATION:
        const = _constant_columns(values)
        if const and job.on_constant == "error":
            raise DegenerateSeriesError(f"constant ROI series at indices {const}", const)
        pair_values = _pearson_pairs(series, rows.astype(np.int64), cols.astype(np.int64))
        pair_values[np.isnan(pair_values)] = 0.0
    else:
        dist, plen = pairwise_dtw(series, job.dtw_cfg, rows, cols)
        if metric is ConnectivityMetric.DTW_DISTANCE:
            pair_values = dist
        else:
            length = values.shape[0]
            excess = (plen - length).astype(np.float64)
            pair_values = excess if job.path_variant == "excess" else excess / length

    out = np.full((n, n), metric.diagonal)
    out[rows, cols] = pair_values
    out[cols, rows] = pair_values
    return ConnectivityMatrix(out, metric)
