"""``.ccaw`` checkpoints: named little-endian tensors behind a trailing FNV-1a checksum.

Layout::

    "CCAW"  version:u8  profile_id:u8  entry_count:u32
    entry * count: name_len:u16  name  dtype:u8  rank:u8  dims:u32*rank  values
    fnv1a64:u64   (of every preceding byte)

Integers are little-endian.  The slice schedule is recovered from the shapes
of the per-stage entropy heads, so any ``(n, k)`` round-trips.
"""

from __future__ import annotations

import os
import re
import struct

import numpy as np

from . import kernels
from .entropy import build_schedule
from .network import PROFILE_IDS, CCAModel, profile_config

MAGIC = b"CCAW"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


class CheckpointError(ValueError):
    pass


def fnv1a64(data: bytes) -> int:
    return kernels.fnv1a64(np.frombuffer(bytes(data), dtype=np.uint8))


def serialize_model(model: CCAModel) -> bytes:
    params = list(model.named_parameters())
    out = [MAGIC, struct.pack("<BBI", VERSION, model.config.profile_id, len(params))]
    for name, t in params:
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(t.data)
        code = _DTYPE_CODES.get(data.dtype)
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {data.dtype}")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<BB{data.ndim}I", code, data.ndim, *data.shape))
        out.append(data.astype(_DTYPES[code], copy=False).tobytes())
    body = b"".join(out)
    return body + struct.pack("<Q", fnv1a64(body))


def model_checksum(model: CCAModel) -> int:
    """FNV-1a of the canonical checkpoint body; identifies the model in containers."""
    return fnv1a64(serialize_model(model)[:-8])


def save_checkpoint(model: CCAModel, path) -> int:
    """Write atomically; returns the checksum."""
    blob = serialize_model(model)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)
    return struct.unpack("<Q", blob[-8:])[0]


def parse_checkpoint(blob: bytes) -> tuple[int, dict[str, np.ndarray], int]:
    """Returns ``(profile_id, tensors, checksum)`` after validating the whole file."""
    if len(blob) < 18 or blob[:4] != MAGIC:
        raise CheckpointError("not a CCAW checkpoint")
    body, tail = blob[:-8], blob[-8:]
    checksum = struct.unpack("<Q", tail)[0]
    if fnv1a64(body) != checksum:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    version, profile_id, count = struct.unpack_from("<BBI", body, 4)
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {VERSION}")
    pos = 10
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            code, rank = struct.unpack_from("<BB", body, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            dtype = _DTYPES[code]
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if pos + size > len(body):
                raise CheckpointError(f"{name}: data runs past the end of the file")
            tensors[name] = np.frombuffer(body, dtype=dtype, count=size // dtype.itemsize,
                                          offset=pos).reshape(dims).astype(np.float64)
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint entry: {exc}") from None
    if pos != len(body):
        raise CheckpointError(f"{len(body) - pos} unexpected bytes after the last entry")
    return profile_id, tensors, checksum


def _infer_config(profile_id: int, tensors: dict[str, np.ndarray]):
    names = {v: k for k, v in PROFILE_IDS.items()}
    if profile_id not in names:
        raise CheckpointError(f"unknown profile id {profile_id}")
    base = profile_config(names[profile_id])
    heads = {}
    for name, arr in tensors.items():
        m = re.fullmatch(r"entropy(\d+)\.out\.weight", name)
        if m:
            heads[int(m.group(1))] = arr.shape[0] // 2
    if not heads or sorted(heads) != list(range(1, len(heads) + 1)):
        raise CheckpointError("checkpoint lacks a complete set of entropy heads")
    counts = tuple(heads[i] for i in range(1, len(heads) + 1))
    for k in (base.k, 0.0):
        if sum(counts) == base.M and build_schedule(base.M, len(counts), k).counts == counts:
            return profile_config(names[profile_id], n=len(counts), k=k)
    return profile_config(names[profile_id], n=len(counts), counts=counts)


def load_checkpoint_bytes(blob: bytes) -> CCAModel:
    profile_id, tensors, _ = parse_checkpoint(blob)
    config = _infer_config(profile_id, tensors)
    model = CCAModel(config)
    own = dict(model.named_parameters())
    if set(own) != set(tensors):
        missing = sorted(set(own) - set(tensors))[:3]
        extra = sorted(set(tensors) - set(own))[:3]
        raise CheckpointError(f"parameter names differ (missing {missing}, unexpected {extra})")
    for name, t in own.items():
        if t.data.shape != tensors[name].shape:
            raise CheckpointError(f"{name}: shape {tensors[name].shape}, expected {t.data.shape}")
        t.data = tensors[name].copy()
    return model


def load_checkpoint(path) -> CCAModel:
    with open(path, "rb") as f:
        return load_checkpoint_bytes(f.read())
