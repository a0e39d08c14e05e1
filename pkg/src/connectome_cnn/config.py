"""Pipeline configuration documents and their JSON schema.

A pipeline config is one JSON object. Every key is optional; omitted keys
take the defaults below. It is validated against ``PIPELINE_SCHEMA`` before
any work starts.

Example::

    {
      "seed": 7,
      "simulation": {"roi_count": 100, "modified_roi_counts": [5],
                     "noise_weights": [4, 5, 6, 7]},
      "models": [{"kind": "ccnn", "train": {"epochs": 20}}],
      "cv": {"folds": 10}
    }
"""

import copy
import json
from dataclasses import dataclass, field

import jsonschema

from .connectivity import ConnectivityJob
from .dtw import DtwConfig
from .errors import ConfigError
from .nn.spec import ModelSpec, default_train_config

U64_MAX = 2**64 - 1

_METRICS = ["correlation", "corr", "dtw", "dtw_distance", "path", "path_length"]

_CHANNEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["metric"],
    "properties": {
        "metric": {"enum": _METRICS},
        "window": {"type": "integer", "minimum": 0},
        "cost": {"enum": ["squared", "absolute", "squared_difference", "absolute_difference"]},
        "znormalize": {"type": "boolean"},
        "path_variant": {"enum": ["excess", "relative"]},
    },
}

_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["ccnn", "simple", "deep"]},
        "name": {"type": "string", "minLength": 1},
        "spec": {"type": "object"},
        "train": {"type": "object"},
    },
}

PIPELINE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "connectome_cnn pipeline config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": U64_MAX},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "roi_count": {"type": "integer", "minimum": 2},
                "modified_roi_counts": {"type": "array", "minItems": 1,
                                        "items": {"type": "integer", "minimum": 1}},
                "noise_weights": {"type": "array", "minItems": 1,
                                  "items": {"type": "number", "minimum": 0}},
                "replicas_per_class": {"type": "integer", "minimum": 1},
                "timepoints": {"type": "integer", "minimum": 2},
                "factors": {"type": "integer", "minimum": 1},
                "base_healthy": {"type": "string"},
                "base_patient": {"type": "string"},
            },
        },
        "connectivity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "channel_sets": {"type": "array", "minItems": 1,
                                 "items": {"type": "array", "minItems": 1, "items": _CHANNEL}},
                "on_constant": {"enum": ["error", "zero"]},
            },
        },
        "models": {"type": "array", "minItems": 1, "items": _MODEL},
        "cv": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "folds": {"type": "integer", "minimum": 2},
                "grouped": {"type": "boolean"},
            },
        },
        "manifest": {"type": "string"},
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"top_k": {"type": "integer", "minimum": 1}},
        },
    },
}

# Training settings used by the sweep and pipelines unless overridden. They
# are tuned for the short desk-scale runs; the library-level TrainConfig
# defaults are left untouched.
DEFAULT_MODELS = [
    {"kind": "simple", "train": {"optimizer": "sgd", "learning_rate": 1e-2, "epochs": 40}},
    {"kind": "deep", "train": {"optimizer": "adam", "learning_rate": 1e-3, "epochs": 20}},
    {"kind": "ccnn", "train": {"optimizer": "adam", "learning_rate": 1e-3, "epochs": 20}},
]

DEFAULT_SIMULATION = {
    "roi_count": 499,
    "modified_roi_counts": [1, 5, 10],
    "noise_weights": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
    "replicas_per_class": 75,
    "timepoints": 120,
    "factors": 10,
}


@dataclass(frozen=True)
class ModelEntry:
    name: str
    kind: str
    spec_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)

    def spec(self, roi_count, channels):
        doc = dict(self.spec_overrides, kind=self.kind, roi_count=roi_count, channels=channels)
        return ModelSpec.from_json(doc)

    def train_config(self, seed):
        return default_train_config(self.kind, **dict(self.train_overrides, seed=seed))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    out: str = "out"
    simulation: dict = field(default_factory=lambda: dict(DEFAULT_SIMULATION))
    channel_sets: tuple = ()
    on_constant: str = "error"
    models: tuple = ()
    folds: int = 10
    grouped: bool = False
    manifest: str = None
    top_k: int = 5
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_json(cls, doc):
        validate_pipeline_doc(doc)
        sim = dict(DEFAULT_SIMULATION)
        sim.update(doc.get("simulation", {}))
        conn = doc.get("connectivity", {})
        models = []
        seen = set()
        for entry in doc.get("models", DEFAULT_MODELS):
            name = entry.get("name", entry["kind"])
            if name in seen:
                raise ConfigError(f"duplicate model name {name!r}")
            seen.add(name)
            me = ModelEntry(name, entry["kind"], dict(entry.get("spec", {})), dict(entry.get("train", {})))
            # fail early on bad fields
            me.spec(sim["roi_count"], 1)
            me.train_config(0)
            models.append(me)
        channel_sets = tuple(tuple(channel_job(ch, conn.get("on_constant", "error")) for ch in cs)
                             for cs in conn.get("channel_sets", []))
        cv = doc.get("cv", {})
        return cls(
            seed=doc.get("seed", 0),
            workers=doc.get("workers", 1),
            out=doc.get("out", "out"),
            simulation=sim,
            channel_sets=channel_sets,
            on_constant=conn.get("on_constant", "error"),
            models=tuple(models),
            folds=cv.get("folds", 10),
            grouped=cv.get("grouped", False),
            manifest=doc.get("manifest"),
            top_k=doc.get("analysis", {}).get("top_k", 5),
            raw=copy.deepcopy(doc),
        )

    def with_overrides(self, seed=None, workers=None, out=None):
        doc = copy.deepcopy(self.raw)
        for key, value in (("seed", seed), ("workers", workers), ("out", out)):
            if value is not None:
                doc[key] = value
        return PipelineConfig.from_json(doc)


def validate_pipeline_doc(doc):
    try:
        jsonschema.validate(doc, PIPELINE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid pipeline config at {where}: {exc.message}") from None


def load_pipeline_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return PipelineConfig.from_json(doc)


_COSTS = {"squared": "squared_difference", "absolute": "absolute_difference"}


def channel_job(ch, on_constant):
    metric = ch["metric"]
    dtw_cfg = None
    if metric not in ("correlation", "corr"):
        if "window" not in ch:
            raise ConfigError(f"channel {metric!r} needs a warping window")
        cost = _COSTS.get(ch.get("cost", "squared"), ch.get("cost"))
        dtw_cfg = DtwConfig(ch["window"], cost=cost, znormalize=ch.get("znormalize", True))
    return ConnectivityJob(metric, dtw_cfg, ch.get("path_variant", "excess"), on_constant)
