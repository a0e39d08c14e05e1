"""Domain types shared by every stage of the toolkit.

All containers are frozen dataclasses holding read-only numpy arrays, so
they can be shared between threads without copying.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


class ConnectivityMetric(enum.Enum):
    CORRELATION = "correlation"
    DTW_DISTANCE = "dtw_distance"
    PATH_LENGTH = "path_length"

    @property
    def code(self):
        return _METRIC_CODES[self]

    @property
    def diagonal(self):
        """Value placed on the diagonal of matrices of this metric."""
        return 1.0 if self is ConnectivityMetric.CORRELATION else 0.0

    @classmethod
    def from_code(cls, code):
        for metric, c in _METRIC_CODES.items():
            if c == code:
                return metric
        raise ValueError(f"unknown metric code {code}")

    @classmethod
    def parse(cls, name):
        """Accept enum members, canonical names and the CLI short names."""
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        key = {"corr": "correlation", "dtw": "dtw_distance",
               "path": "path_length"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown metric {name!r}") from None


_METRIC_CODES = {
    ConnectivityMetric.CORRELATION: 0,
    ConnectivityMetric.DTW_DISTANCE: 1,
    ConnectivityMetric.PATH_LENGTH: 2,
}


def _frozen(values, ndim):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _readonly_view(values):
    arr = np.asarray(values, dtype=np.float64)
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class RoiTimeSeries:
    """T x N matrix of ROI signals; column ``n`` is ROI ``roi_names[n]``."""

    values: np.ndarray
    subject_id: str = ""
    session_id: str = ""
    roi_names: tuple = ()

    def __post_init__(self):
        values = _frozen(self.values, 2)
        object.__setattr__(self, "values", values)
        t, n = values.shape
        if n < 2 or t < 2:
            raise DataError(f"need at least 2 ROIs and 2 timepoints, got T={t}, N={n}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at timepoint {r}, ROI {c}")
        names = tuple(self.roi_names) or tuple(f"roi{i}" for i in range(n))
        if len(names) != n:
            raise DataError(f"{len(names)} ROI names for {n} columns")
        object.__setattr__(self, "roi_names", names)

    @property
    def roi_count(self):
        return self.values.shape[1]

    @property
    def timepoint_count(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ConnectivityMatrix:
    values: np.ndarray
    metric: ConnectivityMetric = ConnectivityMetric.CORRELATION

    def __post_init__(self):
        object.__setattr__(self, "metric", ConnectivityMetric.parse(self.metric))
        values = _readonly_view(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DataError(f"connectivity matrix must be square, got {values.shape}")
        if values.shape[0] < 2:
            raise DataError("connectivity matrix needs N >= 2")
        if not np.all(np.isfinite(values)):
            raise DataError("connectivity matrix contains NaN/Inf")
        # exact comparison on purpose: producers mirror cells bit-for-bit
        if not np.array_equal(values, values.T):
            i, j = np.argwhere(values != values.T)[0]
            raise DataError(f"matrix is not symmetric at ({i}, {j})")
        object.__setattr__(self, "values", values)

    @property
    def size(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ConnectivityMatrix):
            return NotImplemented
        return (self.metric is other.metric
                and np.array_equal(self.values, other.values))

    __hash__ = None


def upper_triangle_indices(n):
    """Row-major strict upper triangle: (0,1), (0,2), ..., (n-2,n-1)."""
    return np.triu_indices(n, k=1)


def vectorize_upper_triangle(matrix):
    """Flatten the strict upper triangle of a symmetric matrix.

    Parameters
    ----------
    matrix : ConnectivityMatrix or array, shape (N, N)

    Returns
    -------
    vec : array, shape (N * (N - 1) / 2,)
        Entries ordered row-major, i ascending then j ascending, i < j.
    """
    values = matrix.values if isinstance(matrix, ConnectivityMatrix) else np.asarray(matrix)
    n = values.shape[-1]
    iu = upper_triangle_indices(n)
    return values[..., iu[0], iu[1]]


def feature_count(n):
    return n * (n - 1) // 2


@dataclass(frozen=True)
class LabeledInstance:
    id: str
    label: int
    subject_id: str
    channels: tuple

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.label not in (0, 1):
            raise DataError(f"instance {self.id}: label must be 0 or 1, got {self.label}")
        if not self.channels:
            raise DataError(f"instance {self.id}: no channels")
        sizes = {c.size for c in self.channels}
        if len(sizes) != 1:
            raise DataError(f"instance {self.id}: channels differ in size {sorted(sizes)}")

    @property
    def size(self):
        return self.channels[0].size


@dataclass(frozen=True)
class Dataset:
    roi_count: int
    channel_metrics: tuple
    instances: tuple
    _tensor: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        metrics = tuple(ConnectivityMetric.parse(m) for m in self.channel_metrics)
        object.__setattr__(self, "channel_metrics", metrics)
        object.__setattr__(self, "instances", tuple(self.instances))
        ids = set()
        for inst in self.instances:
            if inst.size != self.roi_count:
                raise DataError(f"instance {inst.id}: N={inst.size}, dataset N={self.roi_count}")
            got = tuple(c.metric for c in inst.channels)
            if got != metrics:
                raise DataError(f"instance {inst.id}: channel metrics {[m.value for m in got]} "
                                f"do not match {[m.value for m in metrics]}")
            if inst.id in ids:
                raise DataError(f"duplicate instance id {inst.id}")
            ids.add(inst.id)

    @classmethod
    def from_arrays(cls, tensor, labels, subject_ids, channel_metrics, ids=None):
        """Build a dataset whose matrices are views into ``tensor`` (n, C, N, N)."""
        tensor = np.asarray(tensor, dtype=np.float64)
        tensor.flags.writeable = False
        n, c, roi, _ = tensor.shape
        metrics = [ConnectivityMetric.parse(m) for m in channel_metrics]
        if len(metrics) != c:
            raise DataError(f"{len(metrics)} metrics for {c} channels")
        ids = ids if ids is not None else [f"inst{i:05d}" for i in range(n)]
        instances = [
            LabeledInstance(id=str(ids[i]), label=int(labels[i]), subject_id=str(subject_ids[i]),
                            channels=[ConnectivityMatrix(tensor[i, ch], metrics[ch]) for ch in range(c)])
            for i in range(n)
        ]
        return cls(roi, metrics, instances, _tensor=tensor)

    def __len__(self):
        return len(self.instances)

    @property
    def channel_count(self):
        return len(self.channel_metrics)

    @property
    def labels(self):
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    @property
    def subject_ids(self):
        return [inst.subject_id for inst in self.instances]

    @property
    def ids(self):
        return [inst.id for inst in self.instances]

    def tensor(self):
        """Stacked channels, shape (n, C, N, N)."""
        if self._tensor is not None:
            return self._tensor
        out = np.empty((len(self), self.channel_count, self.roi_count, self.roi_count))
        for i, inst in enumerate(self.instances):
            for c, m in enumerate(inst.channels):
                out[i, c] = m.values
        out.flags.writeable = False
        object.__setattr__(self, "_tensor", out)
        return out

    def features(self):
        """Per-channel upper triangles concatenated, shape (n, C * N(N-1)/2)."""
        t = self.tensor()
        return vectorize_upper_triangle(t).reshape(len(self), -1)

    def require_both_labels(self):
        if len(set(self.labels.tolist())) < 2:
            raise DataError("classification needs instances of both labels")


@dataclass(frozen=True)
class FoldAssignment:
    fold_count: int
    assignment: dict

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(self.assignment))
        used = set(self.assignment.values())
        bad = [f for f in used if not 0 <= f < self.fold_count]
        if bad:
            raise DataError(f"fold indices out of range: {sorted(bad)}")
        empty = set(range(self.fold_count)) - used
        if empty:
            raise DataError(f"empty folds: {sorted(empty)}")

    def members(self, fold):
        return [key for key, f in self.assignment.items() if f == fold]

    def sizes(self):
        counts = [0] * self.fold_count
        for f in self.assignment.values():
            counts[f] += 1
        return counts
