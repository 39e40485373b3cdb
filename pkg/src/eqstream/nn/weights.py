"""Seeded weight initialization and the ``EQW1`` weight file."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from ..rng import keyed_rng
from .network import NetworkConfig, check_weights

MAGIC = b"EQW1"
VERSION = 1
_HEAD = struct.Struct("<4sHQI")


@dataclass(eq=False)
class WeightStore:
    tensors: dict                       # name -> float32 array, in config order
    config_hash: int
    seed: int | None = None
    version: int = VERSION
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __eq__(self, other):
        if not isinstance(other, WeightStore):
            return NotImplemented
        return (self.config_hash == other.config_hash
                and list(self.tensors) == list(other.tensors)
                and all(self.tensors[k].shape == other.tensors[k].shape
                        and self.tensors[k].tobytes() == other.tensors[k].tobytes() for k in self.tensors))

    def num_values(self):
        return sum(a.size for a in self.tensors.values())


def init_bound(shape, gain=1.0):
    """Half-width of the fan-in scaled uniform initializer for a conv weight shape."""
    fan_in = int(np.prod(shape[1:]))
    return gain * math.sqrt(3.0 / fan_in)


def init_weights(config: NetworkConfig, seed: int = 0) -> WeightStore:
    """Uniform ``+-sqrt(3 / fan_in)`` weights and biases; forget-gate bias 1; LN gain 1, offset 0."""
    shapes = config.param_shapes()
    tensors = {}
    for name, shape in shapes.items():
        kind = name.rsplit(".", 1)[1]
        if kind == "gain":
            arr = np.ones(shape)
        elif kind == "offset":
            arr = np.zeros(shape)
        else:
            w_shape = shapes[name[:-1] + "w"]
            bound = init_bound(w_shape)
            arr = keyed_rng(seed, "init", name).uniform(-bound, bound, size=shape)
            if name.endswith("lstm.b"):
                c = shape[0] // 4
                arr[c:2 * c] = 1.0
        tensors[name] = arr.astype(np.float32)
    return WeightStore(tensors, config.hash64(), seed)


def save_weights(store: WeightStore, path):
    chunks = [_HEAD.pack(MAGIC, VERSION, store.config_hash, len(store.tensors))]
    for name, arr in store.tensors.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"weight file truncated while reading {what} at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def load_weights(path, config: NetworkConfig | None = None) -> WeightStore:
    """Parse a weight file; with ``config``, also check hash, names and shapes."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read weight file {path}: {exc}") from None
    r = _Reader(data)
    magic, version, chash, count = r.unpack(_HEAD.format, "header")
    if magic != MAGIC:
        raise FormatError(f"bad weight file magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    tensors = {}
    for i in range(count):
        (nlen,) = r.unpack("<H", f"name length of tensor {i}")
        try:
            name = r.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"tensor {i} name is not UTF-8") from None
        (ndim,) = r.unpack("<B", f"ndim of {name}")
        dims = r.unpack(f"<{ndim}I", f"dims of {name}")
        size = int(np.prod(dims)) if ndim else 1
        raw = r.take(4 * size, f"data of {name}")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last tensor")
    if config is not None:
        if chash != config.hash64():
            raise FormatError(f"weight file config hash {chash:016x} does not match network config "
                              f"{config.hash64():016x}")
        check_weights(tensors, config)
    return WeightStore(tensors, chash)
