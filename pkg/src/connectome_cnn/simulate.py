"""Simulated connectome classification datasets.

A healthy and a patient connectome serve as templates. The modified template
takes the rows and columns of ``k`` randomly chosen ROIs from the patient
matrix. Each instance is its class template plus ``noise_weight`` times a
symmetric noise matrix scaled to maximal absolute value one.

Random streams (see :mod:`connectome_cnn.seeding`), all under the master seed:

* ``(STAGE_BASE, 0)`` / ``(STAGE_BASE, 1)``: healthy / patient latent series
* ``(STAGE_SIMULATE, 0)``: choice of modified ROIs
* ``(STAGE_SIMULATE, 1, i)``: noise for instance ``i`` (class 0 first)
"""

from dataclasses import dataclass

import numpy as np

from . import seeding
from .connectivity import ConnectivityJob, connectivity_matrix
from .core import ConnectivityMatrix, ConnectivityMetric, Dataset, RoiTimeSeries
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class GroundTruth:
    modified_roi_indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.modified_roi_indices))
        if len(set(idx)) != len(idx):
            raise DataError("modified ROI indices must be distinct")
        object.__setattr__(self, "modified_roi_indices", idx)

    def __len__(self):
        return len(self.modified_roi_indices)

    def to_json(self):
        return {"modified_roi_indices": list(self.modified_roi_indices)}


@dataclass(frozen=True)
class SimulationConfig:
    roi_count: int
    modified_roi_count: int
    noise_weight: float
    replicas_per_class: int = 75
    seed: int = 0
    # synthetic base pair parameters (ignored when base matrices are given)
    timepoints: int = 120
    factors: int = 10
    base_healthy: ConnectivityMatrix = None
    base_patient: ConnectivityMatrix = None

    def __post_init__(self):
        if not 1 <= self.modified_roi_count < self.roi_count:
            raise ConfigError(f"need 1 <= k < N, got k={self.modified_roi_count}, N={self.roi_count}")
        if self.replicas_per_class < 1:
            raise ConfigError("replicas_per_class must be >= 1")
        if self.noise_weight < 0:
            raise ConfigError("noise_weight must be non-negative")
        if (self.base_healthy is None) != (self.base_patient is None):
            raise ConfigError("give both base matrices or neither")
        if self.base_healthy is not None:
            for m in (self.base_healthy, self.base_patient):
                if m.size != self.roi_count:
                    raise ConfigError(f"base matrix N={m.size} does not match roi_count={self.roi_count}")


def _latent_series(rng, n, t, factors):
    latent = rng.standard_normal((t, factors))
    loadings = rng.standard_normal((factors, n))
    return latent @ loadings + rng.standard_normal((t, n))


def synthesize_base_pair(seed, n, t=120, factors=10):
    """Two correlation connectomes from independently seeded latent-factor signals."""
    if factors < 1 or t <= factors:
        raise ConfigError(f"need factors >= 1 and T > factors, got T={t}, factors={factors}")
    job = ConnectivityJob(ConnectivityMetric.CORRELATION)
    pair = []
    for which in (0, 1):
        rng = seeding.generator(seed, seeding.STAGE_BASE, which)
        ts = RoiTimeSeries(_latent_series(rng, n, t, factors))
        pair.append(connectivity_matrix(ts, job))
    return pair[0], pair[1]


def implant_rows(base, donor, rois):
    """Copy rows and columns ``rois`` of ``donor`` into ``base``."""
    if base.size != donor.size:
        raise DataError(f"dimension mismatch: {base.size} vs {donor.size}")
    idx = list(rois.modified_roi_indices if isinstance(rois, GroundTruth) else rois)
    if any(not 0 <= r < base.size for r in idx):
        raise DataError(f"ROI index out of range [0, {base.size})")
    out = np.array(base.values)
    out[idx, :] = donor.values[idx, :]
    out[:, idx] = donor.values[:, idx]
    return ConnectivityMatrix(out, base.metric)


def symmetric_noise(n, seed=None, rng=None):
    """Symmetric Gaussian noise with zero diagonal and max absolute entry exactly 1."""
    if n < 2:
        raise ConfigError("noise matrix needs N >= 2")
    if rng is None:
        rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    s = m + m.T
    np.fill_diagonal(s, 0.0)
    return s / np.abs(s).max()


def generate_dataset(cfg):
    """Build the labelled dataset and its ground truth.

    Instances ``0 .. R-1`` carry label 0 (healthy template), ``R .. 2R-1``
    label 1 (modified template). Every instance is its own subject.
    """
    if cfg.base_healthy is not None:
        healthy, patient = cfg.base_healthy, cfg.base_patient
    else:
        healthy, patient = synthesize_base_pair(cfg.seed, cfg.roi_count, cfg.timepoints, cfg.factors)
    n = cfg.roi_count
    rng = seeding.generator(cfg.seed, seeding.STAGE_SIMULATE, 0)
    truth = GroundTruth(rng.choice(n, size=cfg.modified_roi_count, replace=False))
    modified = implant_rows(healthy, patient, truth)

    reps = cfg.replicas_per_class
    tensor = np.empty((2 * reps, 1, n, n))
    labels = np.repeat([0, 1], reps)
    for i in range(2 * reps):
        template = healthy.values if labels[i] == 0 else modified.values
        noise_rng = seeding.generator(cfg.seed, seeding.STAGE_SIMULATE, 1, i)
        tensor[i, 0] = template + cfg.noise_weight * symmetric_noise(n, rng=noise_rng)
    ids = [f"sim{i:04d}" for i in range(2 * reps)]
    dataset = Dataset.from_arrays(tensor, labels, ids, [ConnectivityMetric.CORRELATION], ids=ids)
    return dataset, truth
