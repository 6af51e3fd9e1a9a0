"""Binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"PFCP"
    version u32      currently 1
    seed    u64      the run's root random seed
    step    u64      training step the state was captured at
    cfg_len u32      followed by cfg_len bytes of UTF-8 configuration text
    meta_len u32     followed by key=value metadata lines (UTF-8)
    count   u32      number of parameter records, then per record:
        name_len u16, name (UTF-8)
        ndim     u8,  ndim x u32 dims
        dtype    u8   (0 = float32, 1 = float64)
        payload  little-endian array bytes

Parameter payloads round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PFCP"
VERSION = 1
_DTYPES = {0: "<f4", 1: "<f8"}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(RuntimeError):
    pass


def save(path, params, config_text="", step=0, seed=0, meta=None):
    """Write named parameter arrays plus run metadata."""
    chunks = [MAGIC, struct.pack("<IQQ", VERSION, seed, step)]
    cfg = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(cfg)))
    chunks.append(cfg)
    meta_text = "\n".join(f"{k}={v}" for k, v in sorted((meta or {}).items()))
    meta_bytes = meta_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_bytes)))
    chunks.append(meta_bytes)
    chunks.append(struct.pack("<I", len(params)))
    seen = set()
    for p in params:
        if p.name in seen:
            raise CheckpointError(f"duplicate parameter name {p.name!r}")
        seen.add(p.name)
        name = p.name.encode("utf-8")
        dtype = np.dtype(p.data.dtype)
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {dtype} for {p.name!r}")
        code = _DTYPE_CODES[dtype]
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", p.data.ndim))
        for dim in p.data.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(struct.pack("<B", code))
        chunks.append(np.ascontiguousarray(p.data).astype(_DTYPES[code]).tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def read(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load(path):
    """Read a checkpoint into a dict.

    Returns {"params": {name: array}, "config_text": str, "step": int,
    "seed": int, "meta": {key: value}}.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    r = _Reader(path.read_bytes(), path)
    if r.read(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, seed, step = r.unpack("<IQQ")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = r.unpack("<I")
    config_text = r.read(cfg_len).decode("utf-8")
    (meta_len,) = r.unpack("<I")
    meta_text = r.read(meta_len).decode("utf-8")
    meta = {}
    for line in meta_text.splitlines():
        if line:
            k, _, v = line.partition("=")
            meta[k] = v
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.read(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = tuple(r.unpack("<I")[0] for _ in range(ndim))
        (code,) = r.unpack("<B")
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        dtype = np.dtype(_DTYPES[code])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
        arr = np.frombuffer(r.read(n_bytes), dtype=dtype).reshape(shape)
        params[name] = arr.astype(dtype.newbyteorder("="))
    return {"params": params, "config_text": config_text, "step": step,
            "seed": seed, "meta": meta}


def restore_model(model, loaded):
    """Assign loaded arrays onto a model's params by name (shape-checked)."""
    available = loaded["params"]
    for p in model.params():
        if p.name not in available:
            raise CheckpointError(f"checkpoint is missing parameter {p.name!r}")
        arr = available[p.name]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"parameter {p.name!r}: checkpoint shape {arr.shape} != model shape {p.data.shape}"
            )
        p.data = arr.astype(p.data.dtype).copy()
    if loaded["meta"].get("actnorm_initialized") == "1":
        model.decoder.mark_initialized()
