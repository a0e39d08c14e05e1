"""Parameter storage, initialization and the ``.prm`` file format.

``.prm`` layout (little-endian)::

    b"PRM1" | u32 array count
    per array: u16 name length | UTF-8 name | u8 ndim | u32 dims[ndim] | float64 payload
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from .spec import param_shapes

PRM_MAGIC = b"PRM1"


@dataclass
class ParamStore:
    """Named parameter arrays plus Adam moments and step counter."""

    params: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        for name, arr in self.params.items():
            self.m.setdefault(name, np.zeros_like(arr))
            self.v.setdefault(name, np.zeros_like(arr))

    def __getitem__(self, name):
        return self.params[name]

    def names(self):
        return list(self.params)

    def copy(self):
        return ParamStore({k: a.copy() for k, a in self.params.items()},
                          {k: a.copy() for k, a in self.m.items()},
                          {k: a.copy() for k, a in self.v.items()}, self.t)

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.params.values())


def _init_std(spec, name, shape):
    fan_in = int(np.prod(shape[1:]))
    if spec.kind == "simple" and name == "W1":
        return np.sqrt(1.0 / fan_in)
    output_layer = {"ccnn": "W4", "simple": "W2", "deep": "W3"}[spec.kind]
    if name == output_layer:
        return np.sqrt(1.0 / fan_in)
    return np.sqrt(2.0 / fan_in)


# The CCNN starts from a shrunken He init; at full scale its wide second
# layer memorizes the training folds within a few epochs.
DEFAULT_GAIN = {"ccnn": 0.1, "simple": 1.0, "deep": 1.0}


def init_params(spec, rng, gain=None):
    """Gaussian weights (He for ReLU/conv layers, LeCun for sigmoid/output), zero biases.

    Parameters
    ----------
    spec : ModelSpec
    rng : numpy.random.Generator
    gain : float, optional
        Multiplier on every weight std. Defaults to ``DEFAULT_GAIN[spec.kind]``.
    """
    if gain is None:
        gain = DEFAULT_GAIN[spec.kind]
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.standard_normal(shape) * (gain * _init_std(spec, name, shape))
    return ParamStore(params)


def zero_params(spec):
    return ParamStore({name: np.zeros(shape) for name, shape in param_shapes(spec).items()})


def save_params(store, path):
    params = store.params if isinstance(store, ParamStore) else store
    with open(path, "wb") as fh:
        fh.write(PRM_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PRM_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise FormatError(f"{path}: truncated at byte {pos}")
        out = struct.unpack_from(fmt, blob, pos)
        pos += size
        return out

    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = bytes(take(f"<{name_len}s")[0]).decode("utf-8")
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(blob):
            raise FormatError(f"{path}: payload of {name!r} truncated")
        params[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return ParamStore(params)
