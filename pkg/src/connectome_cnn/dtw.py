"""Banded dynamic time warping.

The accumulated cost matrix is filled with the classic recurrence

    D(i, j) = cost(x1[i], x2[j]) + min(D(i, j-1), D(i-1, j), D(i-1, j-1))

restricted to the Sakoe-Chiba band ``|i - j| <= window``.  Only the band is
stored: row ``i`` of the band array holds columns ``j = i - window ... i +
window``; cells outside the band are never materialized and read as +inf.

Indices in :class:`WarpingPath` are 1-based, matching the usual presentation
of the recurrence.  Internally everything is 0-based.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ConfigError, DataError, InfeasibleBandError

COSTS = ("squared_difference", "absolute_difference")
_COST_CODE = {"squared_difference": 0, "absolute_difference": 1,
              "squared": 0, "absolute": 1}


@dataclass(frozen=True)
class DtwConfig:
    """DTW settings.

    ``window`` is the maximal allowed offset ``|i - j|`` between matched
    timepoints. A window wider than the longer series is equivalent to no
    band at all and is clamped.
    """

    window: int
    cost: str = "squared_difference"
    znormalize: bool = True

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 0:
            raise ConfigError(f"window must be a non-negative integer, got {self.window!r}")
        object.__setattr__(self, "window", int(self.window))
        if self.cost not in _COST_CODE:
            raise ConfigError(f"unknown cost {self.cost!r}; expected one of {COSTS}")
        object.__setattr__(self, "cost", {"squared": "squared_difference",
                                          "absolute": "absolute_difference"}.get(self.cost, self.cost))

    @property
    def cost_code(self):
        return _COST_CODE[self.cost]

    def effective_window(self, l1, l2):
        return min(self.window, max(l1, l2))


@dataclass(frozen=True)
class WarpingPath:
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs or pairs[0] != (1, 1):
            raise DataError("warping path must start at (1, 1)")
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise DataError(f"invalid warping step ({i0},{j0}) -> ({i1},{j1})")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def end(self):
        return self.pairs[-1]


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path: WarpingPath
    path_length_raw: int
    path_length_excess: int
    path_length_relative: float


class AccumulatedCost:
    """Banded accumulated-cost matrix produced by :func:`dtw_fill`."""

    def __init__(self, band, l1, l2, window):
        self.band = band
        self.l1 = l1
        self.l2 = l2
        self.window = window

    def at(self, i, j):
        """D(i, j) with 1-based indices; +inf outside the band."""
        k = j - i + self.window
        if not (1 <= i <= self.l1 and 1 <= j <= self.l2) or not 0 <= k < self.band.shape[1]:
            return np.inf
        return float(self.band[i - 1, k])

    @property
    def distance(self):
        return self.at(self.l1, self.l2)

    def dense(self):
        out = np.full((self.l1, self.l2), np.inf)
        for i in range(self.l1):
            lo = max(0, i - self.window)
            hi = min(self.l2, i + self.window + 1)
            out[i, lo:hi] = self.band[i, lo - i + self.window:hi - i + self.window]
        return out


@nb.njit(cache=True)
def _step_cost(a, b, cost_code):
    d = a - b
    if cost_code == 0:
        return d * d
    return abs(d)


@nb.njit(cache=True)
def _fill_band(x1, x2, w, cost_code):
    l1 = x1.shape[0]
    l2 = x2.shape[0]
    width = 2 * w + 1
    band = np.full((l1, width), np.inf)
    for i in range(l1):
        lo = max(0, i - w)
        hi = min(l2, i + w + 1)
        for j in range(lo, hi):
            k = j - i + w
            c = _step_cost(x1[i], x2[j], cost_code)
            if i == 0 and j == 0:
                band[i, k] = c
                continue
            best = np.inf
            if j > 0 and k - 1 >= 0:
                best = band[i, k - 1]
            if i > 0:
                if k + 1 < width and band[i - 1, k + 1] < best:
                    best = band[i - 1, k + 1]
                if j > 0 and band[i - 1, k] < best:
                    best = band[i - 1, k]
            band[i, k] = c + best
    return band


@nb.njit(cache=True)
def _band_value(band, i, j, w):
    k = j - i + w
    if i < 0 or j < 0 or k < 0 or k >= band.shape[1]:
        return np.inf
    return band[i, k]


@nb.njit(cache=True)
def _backtrack(band, l1, l2, w):
    """Return the optimal path as an (len, 2) array of 0-based indices.

    Predecessor preference on equal accumulated cost: diagonal, then
    (i-1, j), then (i, j-1).
    """
    path = np.empty((l1 + l2, 2), dtype=np.int64)
    i = l1 - 1
    j = l2 - 1
    n = 0
    path[n, 0] = i
    path[n, 1] = j
    n += 1
    while i > 0 or j > 0:
        diag = _band_value(band, i - 1, j - 1, w)
        up = _band_value(band, i - 1, j, w)
        left = _band_value(band, i, j - 1, w)
        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
        path[n, 0] = i
        path[n, 1] = j
        n += 1
    return path[:n][::-1]


@nb.njit(cache=True)
def _path_length(band, l1, l2, w):
    i = l1 - 1
    j = l2 - 1
    n = 1
    while i > 0 or j > 0:
        diag = _band_value(band, i - 1, j - 1, w)
        up = _band_value(band, i - 1, j, w)
        left = _band_value(band, i, j - 1, w)
        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
        n += 1
    return n


@nb.njit(cache=True)
def _znorm(x):
    m = x.mean()
    centered = x - m
    sd = np.sqrt((centered * centered).mean())
    if sd == 0.0:
        return np.zeros_like(x)
    return centered / sd


@nb.njit(cache=True)
def _pair_dtw(x1, x2, w, cost_code):
    band = _fill_band(x1, x2, w, cost_code)
    l1 = x1.shape[0]
    l2 = x2.shape[0]
    return band[l1 - 1, l2 - 1 - (l1 - 1) + w], _path_length(band, l1, l2, w)


@nb.njit(parallel=True, cache=True)
def _all_pairs(series, w, cost_code, rows, cols):
    """DTW distance and raw path length for each listed pair of rows of ``series``."""
    m = rows.shape[0]
    dist = np.empty(m)
    plen = np.empty(m, dtype=np.int64)
    for p in nb.prange(m):
        d, n = _pair_dtw(series[rows[p]], series[cols[p]], w, cost_code)
        dist[p] = d
        plen[p] = n
    return dist, plen


def znormalize(series):
    """Zero mean, unit population standard deviation; constant input maps to zeros."""
    x = np.ascontiguousarray(series, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("znormalize needs a 1-d series of length >= 2")
    return _znorm(x)


def _prepare(x1, x2, cfg):
    x1 = np.ascontiguousarray(x1, dtype=np.float64)
    x2 = np.ascontiguousarray(x2, dtype=np.float64)
    if x1.ndim != 1 or x2.ndim != 1 or x1.size == 0 or x2.size == 0:
        raise ValueError("DTW needs two non-empty 1-d series")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise DataError("DTW input contains NaN/Inf")
    l1, l2 = x1.size, x2.size
    w = cfg.effective_window(l1, l2)
    if abs(l1 - l2) > w:
        raise InfeasibleBandError(f"|l1 - l2| = {abs(l1 - l2)} exceeds warping window {w}")
    if cfg.znormalize:
        if l1 >= 2:
            x1 = _znorm(x1)
        if l2 >= 2:
            x2 = _znorm(x2)
    return x1, x2, w


def dtw_fill(x1, x2, cfg):
    """Fill the banded accumulated-cost matrix.

    Raises
    ------
    InfeasibleBandError
        If ``|len(x1) - len(x2)|`` exceeds the window, so that no band-respecting
        path reaches the last cell.
    """
    a, b, w = _prepare(x1, x2, cfg)
    return AccumulatedCost(_fill_band(a, b, w, cfg.cost_code), a.size, b.size, w)


def dtw_distance(x1, x2, cfg):
    return dtw_fill(x1, x2, cfg).distance


def reconstruct_path(acc, cfg=None):
    """Backtrack the optimal warping path through a filled matrix."""
    raw = _backtrack(acc.band, acc.l1, acc.l2, acc.window)
    return WarpingPath(tuple((int(i) + 1, int(j) + 1) for i, j in raw))


def path_cost(x1, x2, path, cfg):
    """Sum of per-step costs along ``path`` in path order (after optional z-normalization)."""
    a, b, _ = _prepare(x1, x2, cfg)
    total = 0.0
    for i, j in path:
        total += float(_step_cost(a[i - 1], b[j - 1], cfg.cost_code))
    return total


def path_length_metric(path, l1, l2):
    """Return ``(excess, relative)`` where excess = |path| - max(l1, l2)."""
    diag = max(l1, l2)
    excess = len(path) - diag
    return excess, excess / diag


def dtw(x1, x2, cfg):
    """Distance, optimal path and path-length features in one call."""
    acc = dtw_fill(x1, x2, cfg)
    path = reconstruct_path(acc)
    excess, relative = path_length_metric(path, acc.l1, acc.l2)
    return DtwResult(distance=acc.distance, path=path, path_length_raw=len(path),
                     path_length_excess=excess, path_length_relative=relative)


def pairwise_dtw(series, cfg, rows, cols):
    """DTW over many pairs of equal-length series (rows of ``series``).

    Returns ``(distances, raw_path_lengths)`` aligned with ``rows``/``cols``.
    Series are z-normalized here if the config asks for it.
    """
    series = np.ascontiguousarray(series, dtype=np.float64)
    length = series.shape[1]
    w = cfg.effective_window(length, length)
    if cfg.znormalize:
        series = np.stack([_znorm(s) for s in series]) if length >= 2 else series
    return _all_pairs(series, w, cfg.cost_code,
                      np.ascontiguousarray(rows, dtype=np.int64),
                      np.ascontiguousarray(cols, dtype=np.int64))
