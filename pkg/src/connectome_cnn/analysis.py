"""First-layer weight introspection, ground-truth recovery and report/plot output."""

import csv
import json
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ImportanceProfile:
    """Per-channel ROI importance (C, N) and filter importance (C, f1)."""

    roi: np.ndarray
    filters: np.ndarray
    channel_metrics: tuple = ()

    def to_json(self):
        return {
            "channel_metrics": list(self.channel_metrics),
            "roi_importance": self.roi.tolist(),
            "filter_importance": self.filters.tolist(),
        }


def _conv1_weights(w1):
    w1 = np.asarray(w1, dtype=np.float64)
    if w1.ndim != 3:
        raise DataError(f"first-layer weights must be (filters, channels, N), got shape {w1.shape}")
    return w1


def roi_importance(w1):
    """``out[c, j] = sum_f |W1[f, c, j]|``."""
    return np.abs(_conv1_weights(w1)).sum(axis=0)


def filter_importance(w1):
    """``out[c, f] = sum_j |W1[f, c, j]|``."""
    return np.abs(_conv1_weights(w1)).sum(axis=2).T


def importance_profile(store_or_w1, channel_metrics=()):
    w1 = store_or_w1.params["W1"] if hasattr(store_or_w1, "params") else store_or_w1
    return ImportanceProfile(roi_importance(w1), filter_importance(w1),
                             tuple(getattr(m, "value", str(m)) for m in channel_metrics))


def top_k(importance, k):
    """Indices of the ``k`` largest entries; ties go to the lower index."""
    importance = np.asarray(importance, dtype=np.float64)
    if importance.ndim != 1:
        raise DataError("importance must be a vector")
    if not 1 <= k <= importance.size:
        raise ConfigError(f"top-k must lie in [1, {importance.size}], got {k}")
    return np.argsort(-importance, kind="stable")[:k]


def recovery_score(importance, truth, k):
    """Return ``(hits, top_k_indices)`` where hits counts top-k ROIs in ``truth``."""
    rois = truth.modified_roi_indices if hasattr(truth, "modified_roi_indices") else truth
    top = top_k(importance, k)
    hits = len(set(int(i) for i in top) & set(int(r) for r in rois))
    return hits, [int(i) for i in top]


def emit_report(obj, path, fmt="json"):
    """Write a profile or report deterministically as JSON, or a profile as CSV."""
    if fmt == "json":
        doc = obj.to_json() if hasattr(obj, "to_json") else obj
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        if not isinstance(obj, ImportanceProfile):
            raise ConfigError("CSV output is only defined for importance profiles")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["roi_index", "channel", "importance"])
            for c in range(obj.roi.shape[0]):
                for j in range(obj.roi.shape[1]):
                    w.writerow([j, c, repr(float(obj.roi[c, j]))])
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


MODEL_COLORS = {"simple": "#2ca02c", "deep": "#1f77b4", "ccnn": "#d62728"}
_FALLBACK_COLORS = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def emit_accuracy_plot(series, baseline, path, title="Accuracy vs. noise weight"):
    """Self-contained SVG: one polyline per model, dashed chance baseline.

    ``series`` maps model name to ``{noise_weight: accuracy}``.
    """
    if not series or not any(series.values()):
        raise DataError("nothing to plot")
    width, height = 560, 380
    left, right, top, bottom = 60, 130, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({float(x) for pts in series.values() for x in pts})
    x_lo, x_hi = xs[0], xs[-1]
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1

    def sx(x):
        return left + (float(x) - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + (1.0 - float(y)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for tick in np.linspace(0, 1, 6):
        y = sy(tick)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{tick:.1f}</text>')
    for x in xs:
        px = sx(x)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">noise weight</text>')
    out.append(f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2:.1f})">accuracy</text>')

    by = sy(baseline)
    out.append(f'<line class="baseline" x1="{left}" y1="{by:.2f}" x2="{left + pw}" y2="{by:.2f}" '
               f'stroke="gray" stroke-dasharray="6,4" data-value="{baseline:.4f}"/>')
    out.append(f'<text x="{left + pw + 6}" y="{by + 4:.2f}" fill="gray">chance {100 * baseline:.2f}%</text>')

    fallback = iter(_FALLBACK_COLORS * 10)
    for rank, (name, pts) in enumerate(series.items()):
        color = MODEL_COLORS.get(name) or next(fallback)
        coords = [(sx(x), sy(pts[x])) for x in sorted(pts, key=float)]
        if len(coords) > 1:
            joined = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{joined}"/>')
        for x, y in coords:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * rank
        out.append(f'<line x1="{left + pw + 6}" y1="{ly}" x2="{left + pw + 26}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 30}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
