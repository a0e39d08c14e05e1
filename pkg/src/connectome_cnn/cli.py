"""Command-line interface.

Exit codes: 0 success, 2 configuration/validation error, 3 data error,
4 numerical failure during training.
"""

import argparse
import json
import logging
import os
import sys

from . import __version__, seeding
from .analysis import emit_accuracy_plot, emit_report, importance_profile, recovery_score
from .config import U64_MAX, channel_job, load_pipeline_config
from .connectivity import connectivity_matrix
from .errors import ConfigError, ConnectomeError, DataError
from .evaluation import baseline_accuracy, compare_classifiers, grouped_kfold, plain_kfold, run_crossval
from .io import load_manifest, load_matrix, load_timeseries, save_matrix, write_manifest
from .nn import ModelSpec, TrainConfig, load_params, model_inputs, save_params, train
from .pipeline import run_real_pipeline, run_simulated_pipeline, run_sweep, sweep_series, write_json
from .simulate import SimulationConfig, generate_dataset

log = logging.getLogger("connectome_cnn")


def u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64 - 1]")
    return value


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _read_json(path, error=ConfigError):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise error(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise error(f"{path}: invalid JSON ({exc})") from None


def _out_dir(args, default="out"):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, fallback=0):
    return fallback if args.seed is None else args.seed


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args):
    base = (None, None)
    if args.base_healthy or args.base_patient:
        if not (args.base_healthy and args.base_patient):
            raise ConfigError("--base-healthy and --base-patient go together")
        base = (load_matrix(args.base_healthy), load_matrix(args.base_patient))
    cfg = SimulationConfig(args.n, args.k, args.noise_weight, args.replicas, seed=_seed(args),
                           timepoints=args.timepoints, factors=args.factors,
                           base_healthy=base[0], base_patient=base[1])
    out = _out_dir(args)
    dataset, truth = generate_dataset(cfg)
    files = []
    for inst in dataset.instances:
        path = os.path.join(out, f"{inst.id}.cmx")
        save_matrix(inst.channels[0], path)
        files.append([path])
    write_manifest(dataset, os.path.join(out, "manifest.json"), files)
    write_json(truth.to_json(), os.path.join(out, "ground_truth.json"))
    print(f"wrote {len(dataset)} instances to {out}; modified ROIs {list(truth.modified_roi_indices)}")


def cmd_connect(args):
    ch = {"metric": args.metric}
    if args.window is not None:
        ch["window"] = args.window
    ch.update(cost=args.cost, znormalize=args.znorm == "on", path_variant=args.path_variant)
    job = channel_job(ch, args.on_constant)
    ts = load_timeseries(args.input)
    matrix = connectivity_matrix(ts, job)
    output = args.output or os.path.join(_out_dir(args), "matrix.cmx")
    save_matrix(matrix, output)
    print(f"wrote {matrix.size}x{matrix.size} {matrix.metric.value} matrix to {output}")


def _train_setup(args):
    """Model spec and TrainConfig from --config (training JSON) and flags."""
    doc = _read_json(args.config) if args.config else {}
    kind = args.model or doc.get("model")
    if kind is None:
        raise ConfigError("name the model with --model or a 'model' key in --config")
    spec_doc = doc.get("spec", {})
    train_doc = {k: v for k, v in doc.items() if k not in ("model", "spec")}
    if args.epochs is not None:
        train_doc["epochs"] = args.epochs
    if args.learning_rate is not None:
        train_doc["learning_rate"] = args.learning_rate
    if args.seed is not None:
        train_doc["seed"] = args.seed
    train_doc.setdefault("optimizer", "sgd" if kind == "simple" else "adam")
    return kind, spec_doc, TrainConfig.from_json(train_doc)


def _spec_for(kind, spec_doc, dataset):
    return ModelSpec.from_json(dict(spec_doc, kind=kind, roi_count=dataset.roi_count,
                                    channels=len(dataset.channel_metrics)))


def cmd_train(args):
    dataset = load_manifest(args.manifest)
    dataset.require_both_labels()
    kind, spec_doc, tcfg = _train_setup(args)
    spec = _spec_for(kind, spec_doc, dataset)
    store, history = train(spec, model_inputs(spec, dataset), dataset.labels, tcfg)
    out = _out_dir(args)
    save_params(store, os.path.join(out, "model.prm"))
    write_json({"spec": spec.to_json(), "train": tcfg.to_json()}, os.path.join(out, "model.json"))
    write_json({"loss": history}, os.path.join(out, "history.json"))
    print(f"trained {kind} for {tcfg.epochs} epochs; final loss {history[-1] if history else float('nan'):.4f}")


def cmd_crossval(args):
    dataset = load_manifest(args.manifest)
    kind, spec_doc, tcfg = _train_setup(args)
    spec = _spec_for(kind, spec_doc, dataset)
    seed = tcfg.seed
    if args.grouped:
        folds = grouped_kfold(dataset.subject_ids, args.folds, seeding.derive_seed(seed, seeding.STAGE_FOLDS))
    else:
        folds = plain_kfold(len(dataset), args.folds, seeding.derive_seed(seed, seeding.STAGE_FOLDS))
    report = run_crossval(dataset, spec, tcfg, folds, workers=args.workers or 1)
    out = _out_dir(args)
    write_json(report.to_json(), os.path.join(out, "report.json"))
    print(f"{kind}: pooled accuracy {report.pooled_accuracy:.4f}, AUC {report.pooled_auc:.4f}, "
          f"n={report.n}, chance threshold {report.baseline_accuracy:.4f}")


def _pipeline_config(args):
    if not args.config:
        raise ConfigError("this subcommand needs --config <pipeline.json>")
    cfg = load_pipeline_config(args.config)
    return cfg.with_overrides(seed=args.seed, workers=args.workers, out=args.out)


def cmd_sweep(args):
    cfg = _pipeline_config(args)
    summary = run_sweep(cfg)
    failed = [c for c in summary["cells"] if "error" in c]
    print(f"sweep: {len(summary['cells'])} cells, {len(failed)} failed; summary in "
          f"{os.path.join(cfg.out, 'summary.json')}")
    return 3 if failed and len(failed) == len(summary["cells"]) else 0


def cmd_baseline(args):
    k, acc = baseline_accuracy(args.n)
    print(f"{k} {acc:.4f}")


def _predictions(path):
    doc = _read_json(path, DataError)
    if isinstance(doc, dict) and "predictions" in doc:
        doc = doc["predictions"]
    if doc and isinstance(doc[0], dict):
        return [d["prediction"] for d in doc], [d["label"] for d in doc]
    return doc, None


def cmd_compare(args):
    a, labels_a = _predictions(args.a)
    b, _ = _predictions(args.b)
    if args.labels:
        labels = _read_json(args.labels, DataError)
        if isinstance(labels, dict):
            labels = labels["labels"]
    elif labels_a is not None:
        labels = labels_a
    else:
        raise ConfigError("--labels is required when the prediction files carry no labels")
    if not len(a) == len(b) == len(labels):
        raise DataError(f"length mismatch: {len(a)}, {len(b)}, {len(labels)}")
    print(f"{compare_classifiers(a, b, labels):.10g}")


def cmd_analyze(args):
    store = load_params(args.params)
    doc = _read_json(args.spec)
    spec = ModelSpec.from_json(doc.get("spec", doc))
    if spec.kind != "ccnn":
        raise ConfigError("ROI importance is defined for the ccnn model only")
    if store.params["W1"].shape != (spec.conv1_filters, spec.channels, spec.roi_count):
        raise DataError("parameter file does not match the model spec")
    profile = importance_profile(store, [f"channel{c}" for c in range(spec.channels)])
    out = _out_dir(args)
    emit_report(profile, os.path.join(out, "importance.json"))
    emit_report(profile, os.path.join(out, "importance.csv"), "csv")
    summary = {"top_k": args.top_k, "channels": []}
    truth = _read_json(args.truth, DataError)["modified_roi_indices"] if args.truth else None
    for c in range(spec.channels):
        if truth is not None:
            hits, top = recovery_score(profile.roi[c], truth, args.top_k)
            summary["channels"].append({"channel": c, "hits": hits, "top_indices": top, "truth": truth})
        else:
            _, top = recovery_score(profile.roi[c], [], args.top_k)
            summary["channels"].append({"channel": c, "top_indices": top})
    write_json(summary, os.path.join(out, "recovery.json"))
    for ch in summary["channels"]:
        extra = f", {ch['hits']} of {len(truth)} modified ROIs recovered" if truth is not None else ""
        print(f"channel {ch['channel']}: top-{args.top_k} ROIs {ch['top_indices']}{extra}")


def cmd_plot(args):
    if bool(args.summary) == bool(args.series):
        raise ConfigError("give exactly one of --summary or --series")
    output = args.output or os.path.join(_out_dir(args), "accuracy.svg")
    if args.summary:
        summary = _read_json(args.summary, DataError)
        ks = sorted({c["k"] for c in summary["cells"]})
        k = args.k if args.k is not None else ks[0]
        series = sweep_series(summary, k)
        baseline = summary["baseline"]["accuracy"]
        title = f"{k} modified ROI(s)"
    else:
        series = _read_json(args.series, DataError)
        baseline = args.baseline if args.baseline is not None else baseline_accuracy(150)[1]
        title = "Accuracy vs. noise weight"
    emit_accuracy_plot(series, baseline, output, title=title)
    print(f"wrote {output}")


def cmd_pipeline(args):
    cfg = _pipeline_config(args)
    if cfg.manifest:
        report = run_real_pipeline(cfg)
        for row in report["table"]:
            print(f"{row['model']:>8} {row['channels']:<12} accuracy {100 * row['accuracy']:5.1f}%  "
                  f"AUC {row['auc']:.3f}")
    else:
        doc = run_simulated_pipeline(cfg)
        for name, res in doc["models"].items():
            print(f"{name}: pooled accuracy {res['pooled_accuracy']:.4f}")


# ---------------------------------------------------------------- parser


def _add_global(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, metavar="JSON",
                   help="config document (training JSON for train/crossval, pipeline JSON for sweep/pipeline)")
    p.add_argument("--seed", type=u64, default=default, metavar="U64", help="master seed")
    p.add_argument("--workers", type=positive_int, default=default, metavar="N",
                   help="parallel fold runs (default 1)")
    p.add_argument("--out", default=default, metavar="DIR", help="output directory")


def _add_train_flags(p):
    p.add_argument("--manifest", required=True, help="dataset manifest JSON (.cmx instances)")
    p.add_argument("--model", choices=["ccnn", "simple", "deep"], help="architecture (or 'model' in --config)")
    p.add_argument("--epochs", type=int, help="override epochs")
    p.add_argument("--learning-rate", type=float, help="override learning rate")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="connectome-cnn",
        description="Connectivity matrices, simulated connectome datasets and CCNN / MLP classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_global(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "Generate a simulated two-class connectome dataset.")
    p.add_argument("--n", type=int, required=True, help="ROI count N")
    p.add_argument("--k", type=int, required=True, help="number of modified ROIs")
    p.add_argument("--noise-weight", type=float, required=True, help="noise weight w")
    p.add_argument("--replicas", type=int, default=75, help="instances per class (default 75)")
    p.add_argument("--base-healthy", help="healthy template .cmx (default: synthetic pair)")
    p.add_argument("--base-patient", help="patient template .cmx")
    p.add_argument("--timepoints", type=int, default=120, help="synthetic pair series length")
    p.add_argument("--factors", type=int, default=10, help="synthetic pair latent factor count")
    p.add_argument("--out-dir", dest="out", help="alias for --out")

    p = add("connect", cmd_connect, "Compute one connectivity matrix from an ROI time-series CSV.")
    p.add_argument("--input", required=True, help="time-series CSV (T rows x N ROI columns, header row)")
    p.add_argument("--metric", required=True, choices=["correlation", "dtw", "path"])
    p.add_argument("--window", type=int, help="warping window w (dtw/path)")
    p.add_argument("--cost", choices=["squared", "absolute"], default="squared")
    p.add_argument("--path-variant", choices=["excess", "relative"], default="excess")
    p.add_argument("--znorm", choices=["on", "off"], default="on")
    p.add_argument("--on-constant", choices=["error", "zero"], default="error",
                   help="constant ROI series under correlation: fail, or write 0")
    p.add_argument("--output", help="output .cmx path")

    p = add("train", cmd_train, "Train one model on a full dataset and save its parameters.")
    _add_train_flags(p)

    p = add("crossval", cmd_crossval, "Cross-validate one model and write an EvalReport JSON.")
    _add_train_flags(p)
    p.add_argument("--folds", type=positive_int, default=10)
    p.add_argument("--grouped", action="store_true", help="keep each subject within one fold")

    add("sweep", cmd_sweep, "Run the (modified ROIs x noise weight) simulation grid.")

    p = add("baseline", cmd_baseline, "Print the binomial chance threshold (k, accuracy) for n predictions.")
    p.add_argument("--n", type=positive_int, required=True)

    p = add("compare", cmd_compare, "Two-sided binomial test between two classifiers' predictions.")
    p.add_argument("--a", required=True, help="predictions JSON (list or EvalReport)")
    p.add_argument("--b", required=True, help="predictions JSON (list or EvalReport)")
    p.add_argument("--labels", help="labels JSON list (optional with EvalReports)")

    p = add("analyze", cmd_analyze, "ROI and filter importance from first-layer CCNN weights.")
    p.add_argument("--params", required=True, help=".prm parameter file")
    p.add_argument("--spec", required=True, help="model JSON (as written by train)")
    p.add_argument("--truth", help="ground_truth.json from simulate")
    p.add_argument("--top-k", type=positive_int, default=5)

    p = add("plot", cmd_plot, "Accuracy-vs-noise SVG from a sweep summary or a series JSON.")
    p.add_argument("--summary", help="summary.json from sweep")
    p.add_argument("--k", type=int, help="modification level to plot (default: smallest)")
    p.add_argument("--series", help='JSON {"model": {"noise": accuracy}}')
    p.add_argument("--baseline", type=float, help="chance line for --series (default 0.5667)")
    p.add_argument("--output", help="output SVG path")

    add("pipeline", cmd_pipeline,
        "End-to-end run: real sessions when the config names a manifest, else one simulated cell.")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except ConnectomeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
