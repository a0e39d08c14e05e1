"""File formats: time-series CSV, ``.cmx`` matrices and dataset manifests.

``.cmx`` layout (all little-endian)::

    b"CMX1" | u32 N | u8 metric code | N*N float64, row-major
"""

import csv
import json
import math
import os
import struct

import numpy as np

from .core import ConnectivityMatrix, ConnectivityMetric, Dataset, RoiTimeSeries
from .errors import DataError, FormatError

CMX_MAGIC = b"CMX1"
_CMX_HEADER = struct.Struct("<4sIB")


def load_timeseries(path, subject_id="", session_id=""):
    """Read a T x N ROI time-series CSV (header row = ROI identifiers)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 ({exc})") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    n = len(header)
    values = np.empty((len(rows) - 1, n))
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != n:
            raise FormatError(f"{path}: line {line} has {len(row)} cells, header has {n}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise FormatError(f"{path}: line {line}, column {c + 1} ({header[c]}): "
                                  f"non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"{path}: line {line}, column {c + 1} ({header[c]}): "
                                  f"non-finite value {cell!r}")
            values[r, c] = v
    if n < 2 or values.shape[0] < 2:
        raise FormatError(f"{path}: need N >= 2 ROIs and T >= 2 timepoints, "
                          f"got N={n}, T={values.shape[0]}")
    return RoiTimeSeries(values, subject_id=subject_id, session_id=session_id, roi_names=header)


def save_timeseries(ts, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ts.roi_names)
        for row in ts.values:
            writer.writerow([repr(float(v)) for v in row])


def save_matrix(matrix, path):
    n = matrix.size
    payload = np.ascontiguousarray(matrix.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_CMX_HEADER.pack(CMX_MAGIC, n, matrix.metric.code))
        fh.write(payload)


def load_matrix(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CMX_HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_CMX_HEADER.size}-byte header")
    magic, n, code = _CMX_HEADER.unpack_from(blob)
    if magic != CMX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    try:
        metric = ConnectivityMetric.from_code(code)
    except ValueError:
        raise FormatError(f"{path}: unknown metric code {code}") from None
    payload = blob[_CMX_HEADER.size:]
    expected = n * n * 8
    if len(payload) < expected:
        raise FormatError(f"{path}: payload shorter than N*N*8 bytes ({len(payload)} < {expected})")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(np.float64)
    try:
        return ConnectivityMatrix(values, metric)
    except DataError as exc:
        raise FormatError(f"{path}: {exc}") from None


def export_matrix_csv(matrix, path):
    """Plain CSV dump for inspection; not a round-trip format."""
    np.savetxt(path, matrix.values, delimiter=",", fmt="%.17g")


def write_manifest(dataset, path, channel_files):
    """Write a manifest JSON; ``channel_files[i]`` lists instance i's .cmx paths."""
    base = os.path.dirname(os.path.abspath(path))
    doc = {
        "roi_count": dataset.roi_count,
        "channel_metrics": [m.value for m in dataset.channel_metrics],
        "instances": [
            {"id": inst.id, "label": inst.label, "subject_id": inst.subject_id,
             "channel_files": [os.path.relpath(os.path.abspath(f), base) for f in files]}
            for inst, files in zip(dataset.instances, channel_files)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_manifest(path):
    """Load a dataset manifest; channel paths resolve relative to the manifest."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    for key in ("roi_count", "channel_metrics", "instances"):
        if key not in doc:
            raise FormatError(f"{path}: missing key {key!r}")
    base = os.path.dirname(os.path.abspath(path))
    metrics = [ConnectivityMetric.parse(m) for m in doc["channel_metrics"]]
    n = int(doc["roi_count"])
    tensor = np.empty((len(doc["instances"]), len(metrics), n, n))
    labels, subjects, ids = [], [], []
    for i, entry in enumerate(doc["instances"]):
        files = entry["channel_files"]
        if len(files) != len(metrics):
            raise FormatError(f"{path}: instance {entry['id']} lists {len(files)} channel files, "
                              f"expected {len(metrics)}")
        for c, f in enumerate(files):
            m = load_matrix(os.path.join(base, f))
            if m.metric is not metrics[c] or m.size != n:
                raise FormatError(f"{f}: metric {m.metric.value} / N={m.size} does not match "
                                  f"manifest ({metrics[c].value}, N={n})")
            tensor[i, c] = m.values
        labels.append(entry["label"])
        subjects.append(entry["subject_id"])
        ids.append(entry["id"])
    return Dataset.from_arrays(tensor, labels, subjects, metrics, ids=ids)

