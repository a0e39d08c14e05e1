"""Architecture and training descriptors, plus closed-form parameter counts."""

from dataclasses import asdict, dataclass, field, fields

from ..core import feature_count
from ..errors import ConfigError

KINDS = ("ccnn", "simple", "deep")

DEFAULT_DROPOUT = {
    "ccnn": ("conv2", "fc"),
    "simple": (),
    "deep": ("hidden1", "hidden2"),
}
DROPOUT_SITES = {
    "ccnn": ("conv1", "conv2", "fc"),
    "simple": (),
    "deep": ("hidden1", "hidden2"),
}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor.

    ``ccnn``: row filters (``conv1_filters`` x C x N), column filters
    (``conv2_filters`` x ``conv1_filters`` x N), a ``hidden``-unit dense layer
    and a softmax output.  ``simple``: one sigmoid layer of ``feature_units``.
    ``deep``: ReLU layers of ``feature_units`` and ``hidden`` units.
    """

    kind: str
    roi_count: int
    channels: int = 1
    conv1_filters: int = 64
    conv2_filters: int = 128
    hidden: int = 96
    feature_units: int = 128
    classes: int = 2
    dropout_layers: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for name in ("roi_count", "channels", "conv1_filters", "conv2_filters",
                     "hidden", "feature_units", "classes"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.roi_count < 2 or self.classes < 2:
            raise ConfigError("need roi_count >= 2 and classes >= 2")
        sites = DEFAULT_DROPOUT[self.kind] if self.dropout_layers is None else tuple(self.dropout_layers)
        unknown = set(sites) - set(DROPOUT_SITES[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind} has no dropout site(s) {sorted(unknown)}")
        object.__setattr__(self, "dropout_layers", sites)

    @property
    def input_features(self):
        return self.channels * feature_count(self.roi_count)

    def to_json(self):
        d = asdict(self)
        d["dropout_layers"] = list(self.dropout_layers)
        return d

    @classmethod
    def from_json(cls, doc):
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown model fields {sorted(extra)}")
        return cls(**doc)


def param_shapes(spec):
    """Ordered ``{name: shape}`` of the trainable arrays."""
    c, n, k = spec.channels, spec.roi_count, spec.classes
    if spec.kind == "ccnn":
        f1, f2, h = spec.conv1_filters, spec.conv2_filters, spec.hidden
        return {"W1": (f1, c, n), "b1": (f1,), "W2": (f2, f1, n), "b2": (f2,),
                "W3": (h, f2), "b3": (h,), "W4": (k, h), "b4": (k,)}
    d, u = spec.input_features, spec.feature_units
    if spec.kind == "simple":
        return {"W1": (u, d), "b1": (u,), "W2": (k, u), "b2": (k,)}
    h = spec.hidden
    return {"W1": (u, d), "b1": (u,), "W2": (h, u), "b2": (h,), "W3": (k, h), "b3": (k,)}


def param_count(spec):
    """Return ``(weights, biases)`` for the architecture."""
    c, n, k = spec.channels, spec.roi_count, spec.classes
    if spec.kind == "ccnn":
        f1, f2, h = spec.conv1_filters, spec.conv2_filters, spec.hidden
        return c * n * f1 + n * f1 * f2 + f2 * h + h * k, f1 + f2 + h + k
    d, u = spec.input_features, spec.feature_units
    if spec.kind == "simple":
        return d * u + u * k, u + k
    h = spec.hidden
    return d * u + u * h + h * k, u + h + k


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = None
    batch_size: int = 16
    epochs: int = 100
    keep_prob: float = 0.6
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", 1e-4 if self.optimizer == "adam" else 1e-2)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0 < self.keep_prob <= 1:
            raise ConfigError("keep_prob must lie in (0, 1]")

    def to_json(self):
        d = asdict(self)
        d.pop("extra")
        return d

    @classmethod
    def from_json(cls, doc):
        known = {f.name for f in fields(cls)} - {"extra"}
        args = {k: v for k, v in doc.items() if k in known}
        return cls(**args, extra={k: v for k, v in doc.items() if k not in known})


def default_train_config(kind, **overrides):
    """Per-architecture defaults: SGD for the simple net, Adam otherwise."""
    base = {"optimizer": "sgd" if kind == "simple" else "adam"}
    base.update(overrides)
    return TrainConfig(**base)
