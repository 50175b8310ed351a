"""Named parameters, Adam, seeded generators and the binary checkpoint container."""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, UsageError
from .tensor import DTYPE, Tensor

MAGIC = b"KINJ1"


def make_rng(seed, stream=""):
    """Return a PCG64 generator for ``(seed, stream)``.

    PCG64 is numpy's 128-bit-state permuted congruential generator. Named
    streams give each consumer (initialization, dropout, batch order) its own
    sequence so that adding one consumer never perturbs another.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode("utf-8"))]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParameterStore:
    """Ordered name -> Tensor map plus per-parameter Adam moments."""

    def __init__(self):
        self.params = {}
        self.state = {}

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self, prefix=""):
        return [n for n in self.params if n.startswith(prefix)]

    def add(self, name, values):
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(values, dtype=DTYPE), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def set(self, name, values):
        values = np.asarray(values, dtype=DTYPE)
        if name in self.params:
            if self.params[name].shape != values.shape:
                raise ConfigError(
                    f"parameter {name!r}: shape {values.shape} does not match {self.params[name].shape}"
                )
            self.params[name].data = values.copy()
            self.state.pop(name, None)
        else:
            self.add(name, values)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def copy(self):
        other = ParameterStore()
        for name, t in self.params.items():
            other.add(name, t.data.copy())
        return other

    def arrays(self):
        return {name: t.data for name, t in self.params.items()}

    def subset(self, prefixes):
        other = ParameterStore()
        for name, t in self.params.items():
            if name.startswith(tuple(prefixes)):
                other.add(name, t.data.copy())
        return other

    def update_from(self, other):
        for name in other:
            self.set(name, other[name].data)


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-8, names=None):
    """One bias-corrected Adam update of ``names`` (default: every parameter)."""
    for name in store.names() if names is None else names:
        p = store[name]
        if p.grad is None:
            raise UsageError(f"parameter {name!r} has no gradient")
        m, v, t = store.state.get(name, (np.zeros_like(p.data), np.zeros_like(p.data), 0))
        g = p.grad
        t += 1
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        store.state[name] = (m, v, t)
    return store


def dumps(store):
    parts = [MAGIC]
    for name, t in store.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(blob):
    if not blob.startswith(MAGIC):
        raise DataError("not a checkpoint: missing KINJ1 header")
    store = ParameterStore()
    pos = len(MAGIC)
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise DataError(f"checkpoint truncated inside parameter {name!r}")
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            store.add(name, values.astype(DTYPE))
    except struct.error as exc:
        raise DataError("checkpoint truncated") from exc
    return store


def save_checkpoint(store, path):
    Path(path).write_bytes(dumps(store))


def load_checkpoint(path):
    return loads(Path(path).read_bytes())
