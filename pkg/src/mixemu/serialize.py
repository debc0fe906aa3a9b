"""Binary model files.

Layout (little-endian)::

    b"MXM1" | u32 version | u16 len + family tag | u32 len + JSON metadata
    | u32 array count | per array: u16 len + name, u8 ndim, u64 dims..., float64 data

The metadata mirrors the model's object tree; every ndarray in it is replaced
by a reference to a named float64 block (its original dtype is recorded so
integer arrays come back as integers).
"""

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from . import bayes, ensemble, linear, mlp, trees
from .campaign import Preprocessor
from .emulators import BinnedNbRegressor, EmulatorModel
from .errors import FormatError

MAGIC = b"MXM1"
VERSION = 1

_TYPES = {cls.__name__: cls for cls in [
    EmulatorModel, BinnedNbRegressor,
    linear.LinearModel, linear.PolynomialModel, linear.LogisticModel, linear.KernelRidgeModel,
    bayes.BayesianRidgeModel, bayes.GammaPriors, bayes.GpModel, bayes.GaussianNbModel,
    bayes.DiscriminantModel, trees.Tree, ensemble.EnsembleModel, mlp.MlpModel,
]}


def _plain(x):
    """JSON-safe copy of dict/list metadata (numpy scalars become Python numbers)."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _encode(obj, path, arrays):
    if isinstance(obj, np.ndarray):
        name = path
        arrays.append((name, obj))
        return {"__array__": name, "dtype": obj.dtype.str}
    if isinstance(obj, Preprocessor):
        return {"__pre__": obj.kind,
                "stats": {k: _encode(v, f"{path}.{k}", arrays) for k, v in obj.to_arrays().items()}}
    if dataclasses.is_dataclass(obj):
        name = type(obj).__name__
        if name not in _TYPES:
            raise FormatError(f"cannot serialize objects of type {name}")
        fields = {f.name: _encode(getattr(obj, f.name), f"{path}.{f.name}", arrays)
                  for f in dataclasses.fields(obj)}
        return {"__type__": name, "fields": fields}
    if isinstance(obj, (list, tuple)):
        kind = "tuple" if isinstance(obj, tuple) else "list"
        return {"__seq__": kind, "items": [_encode(v, f"{path}.{i}", arrays) for i, v in enumerate(obj)]}
    if isinstance(obj, dict):
        return {"__dict__": _plain(obj)}
    return _plain(obj)


def _decode(node, arrays):
    if isinstance(node, dict):
        if "__array__" in node:
            a = arrays[node["__array__"]]
            dt = np.dtype(node["dtype"])
            return a if dt == np.float64 else a.astype(dt)
        if "__pre__" in node:
            return Preprocessor.from_arrays(node["__pre__"],
                                            {k: _decode(v, arrays) for k, v in node["stats"].items()})
        if "__type__" in node:
            cls = _TYPES.get(node["__type__"])
            if cls is None:
                raise FormatError(f"unknown model type {node['__type__']!r}")
            return cls(**{k: _decode(v, arrays) for k, v in node["fields"].items()})
        if "__seq__" in node:
            items = [_decode(v, arrays) for v in node["items"]]
            return tuple(items) if node["__seq__"] == "tuple" else items
        if "__dict__" in node:
            return node["__dict__"]
    return node


def dumps(model):
    arrays = []
    meta = _encode(model, "m", arrays)
    tag = (model.name if isinstance(model, EmulatorModel) else type(model).__name__).encode()
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<H", len(tag)), tag,
           struct.pack("<I", len(blob)), blob, struct.pack("<I", len(arrays))]
    for name, a in arrays:
        nb = name.encode()
        data = np.ascontiguousarray(a, dtype="<f8")
        out += [struct.pack("<H", len(nb)), nb, struct.pack("<B", data.ndim),
                struct.pack(f"<{data.ndim}Q", *data.shape), data.tobytes()]
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError("model file is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def loads(buf):
    r = _Reader(buf)
    if bytes(r.take(4)) != MAGIC:
        raise FormatError("not a model file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    (n,) = r.unpack("<H")
    tag = bytes(r.take(n)).decode()
    (n,) = r.unpack("<I")
    meta = json.loads(bytes(r.take(n)).decode())
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = bytes(r.take(n)).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after model data")
    model = _decode(meta, arrays)
    if isinstance(model, EmulatorModel) and model.name != tag:
        raise FormatError(f"family tag {tag!r} does not match model {model.name!r}")
    return model


def save_model(path, model):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(model))


def load_model(path):
    return loads(Path(path).read_bytes())
