"""End-to-end runs: the simulated noise sweep and the real-data CV pipeline."""

import csv
import json
import logging
import os
from itertools import combinations

import jsonschema
import numpy as np

from . import seeding
from .analysis import emit_accuracy_plot, emit_report, importance_profile, recovery_score
from .connectivity import ConnectivityJob, connectivity_matrix
from .core import ConnectivityMetric, Dataset
from .errors import ConfigError, ConnectomeError, DataError
from .evaluation import baseline_accuracy, compare_classifiers, grouped_kfold, plain_kfold, run_crossval
from .io import load_matrix, load_timeseries, save_matrix
from .nn import model_inputs, save_params, train
from .simulate import SimulationConfig, generate_dataset, synthesize_base_pair

log = logging.getLogger(__name__)

SESSION_MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["sessions"],
    "properties": {
        "sessions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "subject_id", "label", "timeseries"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "subject_id": {"type": "string", "minLength": 1},
                    "label": {"enum": [0, 1]},
                    "timeseries": {"type": "string"},
                },
            },
        },
    },
}

REAL_DEFAULT_FOLDS = 7


def write_json(doc, path):
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_pair(cfg):
    sim = cfg.simulation
    if "base_healthy" in sim:
        return load_matrix(sim["base_healthy"]), load_matrix(sim["base_patient"])
    if "base_patient" in sim:
        raise ConfigError("give both base matrices or neither")
    return synthesize_base_pair(seeding.derive_seed(cfg.seed, seeding.STAGE_BASE), sim["roi_count"],
                                sim["timepoints"], sim["factors"])


def _cell_seed(cfg, ki, wi):
    return seeding.derive_seed(cfg.seed, seeding.STAGE_SWEEP, ki, wi)


def run_cell(cfg, healthy, patient, ki, wi):
    """Generate one (k, noise) dataset and cross-validate every model on it."""
    sim = cfg.simulation
    k, w = sim["modified_roi_counts"][ki], sim["noise_weights"][wi]
    sim_cfg = SimulationConfig(sim["roi_count"], k, w, sim["replicas_per_class"],
                               seed=_cell_seed(cfg, ki, wi), base_healthy=healthy, base_patient=patient)
    dataset, truth = generate_dataset(sim_cfg)
    folds = plain_kfold(len(dataset), cfg.folds, seeding.derive_seed(cfg.seed, seeding.STAGE_FOLDS, ki, wi))
    reports = {}
    for mi, entry in enumerate(cfg.models):
        spec = entry.spec(sim["roi_count"], 1)
        tcfg = entry.train_config(seeding.derive_seed(cfg.seed, seeding.STAGE_TRAIN, ki, wi, mi))
        reports[entry.name] = run_crossval(dataset, spec, tcfg, folds, workers=cfg.workers,
                                           model_name=entry.name)
    return dataset, truth, reports


def run_sweep(cfg):
    """Every (k, noise weight) cell x every model; returns the summary document.

    Writes ``summary.json``, one ``accuracy_k<k>.svg`` per modification level
    and per-cell EvalReports under ``cells/``. A failing cell is recorded
    with its error and the remaining cells still run.
    """
    sim = cfg.simulation
    os.makedirs(os.path.join(cfg.out, "cells"), exist_ok=True)
    healthy, patient = _base_pair(cfg)
    n = 2 * sim["replicas_per_class"]
    base_k, base_acc = baseline_accuracy(n)
    cells = []
    for ki, k in enumerate(sim["modified_roi_counts"]):
        for wi, w in enumerate(sim["noise_weights"]):
            cell = {"k": k, "noise_weight": w}
            try:
                _, truth, reports = run_cell(cfg, healthy, patient, ki, wi)
            except ConnectomeError as exc:
                log.error("cell k=%s noise=%s failed: %s", k, w, exc)
                cell["error"] = f"{type(exc).__name__}: {exc}"
                cells.append(cell)
                continue
            cell["modified_roi_indices"] = list(truth.modified_roi_indices)
            cell["results"] = {}
            for name, rep in reports.items():
                cell["results"][name] = {
                    "pooled_accuracy": rep.pooled_accuracy,
                    "pooled_auc": rep.pooled_auc,
                    "fold_mean_accuracy": rep.fold_mean_accuracy,
                    "significant": rep.pooled_accuracy >= base_acc,
                }
                write_json(rep.to_json(), os.path.join(cfg.out, "cells", f"k{k}_w{w:g}_{name}.json"))
            log.info("cell k=%s noise=%s: %s", k, w,
                     ", ".join(f"{m}={r['pooled_accuracy']:.3f}" for m, r in cell["results"].items()))
            cells.append(cell)
    summary = {
        "seed": cfg.seed,
        "roi_count": sim["roi_count"],
        "replicas_per_class": sim["replicas_per_class"],
        "folds": cfg.folds,
        "models": [m.name for m in cfg.models],
        "baseline": {"n": n, "k": base_k, "accuracy": base_acc},
        "cells": cells,
    }
    write_json(summary, os.path.join(cfg.out, "summary.json"))
    for k in sim["modified_roi_counts"]:
        series = sweep_series(summary, k)
        if any(series.values()):
            emit_accuracy_plot(series, base_acc, os.path.join(cfg.out, f"accuracy_k{k}.svg"),
                               title=f"{k} modified ROI(s)")
    return summary


def sweep_series(summary, k):
    """``{model: {noise_weight: accuracy}}`` for one modification level."""
    series = {m: {} for m in summary["models"]}
    for cell in summary["cells"]:
        if cell["k"] != k or "results" not in cell:
            continue
        for m, res in cell["results"].items():
            series[m][cell["noise_weight"]] = res["pooled_accuracy"]
    return series


def run_simulated_pipeline(cfg):
    """simulate -> cross-validate -> train on everything -> analyze -> plot, for one cell."""
    sim = cfg.simulation
    os.makedirs(cfg.out, exist_ok=True)
    healthy, patient = _base_pair(cfg)
    dataset, truth, reports = run_cell(cfg, healthy, patient, 0, 0)
    k, w = sim["modified_roi_counts"][0], sim["noise_weights"][0]
    write_json(truth.to_json(), os.path.join(cfg.out, "ground_truth.json"))
    doc = {"k": k, "noise_weight": w, "models": {}}
    for mi, entry in enumerate(cfg.models):
        rep = reports[entry.name]
        write_json(rep.to_json(), os.path.join(cfg.out, f"crossval_{entry.name}.json"))
        doc["models"][entry.name] = {"pooled_accuracy": rep.pooled_accuracy, "pooled_auc": rep.pooled_auc}
        if entry.kind != "ccnn":
            continue
        spec = entry.spec(sim["roi_count"], 1)
        tcfg = entry.train_config(seeding.derive_seed(cfg.seed, seeding.STAGE_TRAIN, mi))
        store, _ = train(spec, model_inputs(spec, dataset), dataset.labels, tcfg)
        save_params(store, os.path.join(cfg.out, f"{entry.name}.prm"))
        write_json({"spec": spec.to_json(), "train": tcfg.to_json()},
                   os.path.join(cfg.out, f"{entry.name}.json"))
        profile = importance_profile(store, dataset.channel_metrics)
        emit_report(profile, os.path.join(cfg.out, f"importance_{entry.name}.json"))
        emit_report(profile, os.path.join(cfg.out, f"importance_{entry.name}.csv"), "csv")
        top = min(cfg.top_k, sim["roi_count"])
        hits, idx = recovery_score(profile.roi[0], truth, top)
        doc["models"][entry.name]["recovery"] = {"top_k": top, "hits": hits, "top_indices": idx,
                                                 "truth": list(truth.modified_roi_indices)}
    base = baseline_accuracy(len(dataset))[1]
    emit_accuracy_plot({m: {w: r["pooled_accuracy"]} for m, r in doc["models"].items()}, base,
                       os.path.join(cfg.out, "accuracy.svg"), title=f"{k} modified ROI(s)")
    write_json(doc, os.path.join(cfg.out, "pipeline.json"))
    return doc


def load_session_manifest(path):
    """Session manifest: ``{"sessions": [{id, subject_id, label, timeseries}]}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    try:
        jsonschema.validate(doc, SESSION_MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DataError(f"{path}: {exc.message}") from None
    base = os.path.dirname(os.path.abspath(path))
    sessions = []
    seen = set()
    for s in doc["sessions"]:
        if s["id"] in seen:
            raise DataError(f"{path}: duplicate session id {s['id']!r}")
        seen.add(s["id"])
        ts_path = os.path.join(base, s["timeseries"])
        if not os.path.exists(ts_path):
            raise DataError(f"{path}: session {s['id']}: missing file {ts_path}")
        sessions.append(dict(s, timeseries=ts_path))
    return sessions


def channel_name(job):
    if job.metric is ConnectivityMetric.CORRELATION:
        return "corr"
    if job.metric is ConnectivityMetric.DTW_DISTANCE:
        return "dtw"
    return "path" if job.path_variant == "excess" else "path_rel"


def _job_key(job):
    return (job.metric.value, job.dtw_cfg, job.path_variant)


def compute_session_matrices(sessions, jobs, out_dir=None):
    """``{job key: array (S, N, N)}``; matrices are also saved as .cmx when ``out_dir`` is set."""
    result = {}
    n = None
    for si, s in enumerate(sessions):
        ts = load_timeseries(s["timeseries"], subject_id=s["subject_id"], session_id=s["id"])
        if n is None:
            n = ts.roi_count
        elif ts.roi_count != n:
            raise DataError(f"session {s['id']} has N={ts.roi_count}, earlier sessions have N={n}")
        for job in jobs:
            key = _job_key(job)
            m = connectivity_matrix(ts, job)
            if key not in result:
                result[key] = np.empty((len(sessions), n, n))
            result[key][si] = m.values
            if out_dir:
                save_matrix(m, os.path.join(out_dir, f"{s['id']}_{channel_name(job)}.cmx"))
    return result


def run_real_pipeline(cfg):
    """Grouped CV of every model on every channel set; returns the report document.

    Writes ``report.json`` (table rows, fold assignment, pairwise p-values),
    ``table.csv`` with accuracy and AUC per model and channel set, and one
    EvalReport per run under ``reports/``.
    """
    if not cfg.manifest:
        raise ConfigError("the real-data pipeline needs a session manifest")
    sessions = load_session_manifest(cfg.manifest)
    channel_sets = cfg.channel_sets
    if not channel_sets:
        channel_sets = ((ConnectivityJob("correlation", on_constant=cfg.on_constant),),)
    jobs = {}
    for cs in channel_sets:
        for job in cs:
            jobs.setdefault(_job_key(job), job)
    os.makedirs(os.path.join(cfg.out, "matrices"), exist_ok=True)
    os.makedirs(os.path.join(cfg.out, "reports"), exist_ok=True)
    matrices = compute_session_matrices(sessions, list(jobs.values()), os.path.join(cfg.out, "matrices"))

    ids = [s["id"] for s in sessions]
    subjects = [s["subject_id"] for s in sessions]
    labels = [s["label"] for s in sessions]
    k = cfg.folds if "folds" in cfg.raw.get("cv", {}) else REAL_DEFAULT_FOLDS
    folds = grouped_kfold(subjects, k, seeding.derive_seed(cfg.seed, seeding.STAGE_FOLDS), ids=ids)
    n = len(sessions)
    base_k, base_acc = baseline_accuracy(n)
    rows, runs = [], {}
    for si, cs in enumerate(channel_sets):
        tensor = np.stack([matrices[_job_key(job)] for job in cs], axis=1)
        dataset = Dataset.from_arrays(tensor, labels, subjects, [job.metric for job in cs], ids=ids)
        set_name = "+".join(channel_name(job) for job in cs)
        for mi, entry in enumerate(cfg.models):
            spec = entry.spec(dataset.roi_count, len(cs))
            tcfg = entry.train_config(seeding.derive_seed(cfg.seed, seeding.STAGE_TRAIN, si, mi))
            rep = run_crossval(dataset, spec, tcfg, folds, workers=cfg.workers,
                               model_name=f"{entry.name}:{set_name}")
            runs[rep.model] = rep
            write_json(rep.to_json(), os.path.join(cfg.out, "reports", f"{entry.name}_{set_name}.json"))
            rows.append({"model": entry.name, "channels": set_name, "accuracy": rep.pooled_accuracy,
                         "auc": rep.pooled_auc, "significant": rep.pooled_accuracy >= base_acc,
                         "per_fold_accuracy": rep.per_fold_accuracy})
            log.info("%s on %s: accuracy %.3f, AUC %.3f", entry.name, set_name,
                     rep.pooled_accuracy, rep.pooled_auc)
    comparisons = []
    for a, b in combinations(sorted(runs), 2):
        pv = compare_classifiers(runs[a].predictions, runs[b].predictions, runs[a].labels)
        comparisons.append({"a": a, "b": b, "p_value": pv})
    report = {
        "n": n,
        "subjects": len(set(subjects)),
        "folds": k,
        "baseline_k": base_k,
        "baseline_accuracy": base_acc,
        "fold_assignment": {str(i): f for i, f in folds.assignment.items()},
        "table": rows,
        "comparisons": comparisons,
    }
    write_json(report, os.path.join(cfg.out, "report.json"))
    _write_table(rows, os.path.join(cfg.out, "table.csv"))
    return report


def _write_table(rows, path):
    sets = list(dict.fromkeys(r["channels"] for r in rows))
    models = list(dict.fromkeys(r["model"] for r in rows))
    cell = {(r["model"], r["channels"]): r for r in rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for m in models:
            w.writerow([m] + sets)
            w.writerow(["accuracy_percent"] + [f"{100 * cell[m, s]['accuracy']:.1f}" for s in sets])
            w.writerow(["auc"] + [f"{cell[m, s]['auc']:.3f}" for s in sets])
