"""Single-file checkpoint container.

Layout (all integers little-endian):

    bytes 0-3    magic b"SXRC"
    bytes 4-7    format version (u32)
    bytes 8-39   sha256 digest of everything after byte 39
    bytes 40-47  manifest length in bytes (u64)
    manifest     JSON: {"config": {...}, "meta": {...},
                        "tensors": [{"name", "dtype", "shape", "nbytes"}, ...]}
    payload      raw tensor bytes, concatenated in manifest order

Tensors are stored little-endian. Writes go through a temp file + rename so
an interrupted save never leaves a readable-but-wrong file at the target.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

MAGIC = b"SXRC"
VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class CheckpointError(ValueError):
    pass


class DigestMismatchError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedFileError(CheckpointError):
    pass


class TensorShapeError(CheckpointError):
    pass


def save_checkpoint(path, tensors, config=None, meta=None):
    """Persist named arrays plus a config/meta snapshot, atomically."""
    entries = []
    chunks = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype = arr.dtype.newbyteorder("<")
        if dtype.str not in _DTYPES:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = arr.astype(dtype, copy=False).tobytes()
        entries.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape), "nbytes": len(raw)})
        chunks.append(raw)
    manifest = json.dumps(
        {"config": config or {}, "meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    body = struct.pack("<Q", len(manifest)) + manifest + b"".join(chunks)
    digest = hashlib.sha256(body).digest()
    blob = MAGIC + struct.pack("<I", VERSION) + digest + body
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (tensors, config, meta); refuses corrupt or mismatched files."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 48:
        raise TruncatedFileError(f"{path}: {len(blob)} bytes is shorter than any valid checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {VERSION}")
    stored = blob[8:40]
    body = blob[40:]
    if hashlib.sha256(body).digest() != stored:
        raise DigestMismatchError(f"{path}: digest mismatch, file is corrupt")
    (manifest_len,) = struct.unpack("<Q", body[:8])
    if len(body) < 8 + manifest_len:
        raise TruncatedFileError(f"{path}: manifest truncated")
    manifest = json.loads(body[8 : 8 + manifest_len].decode("utf-8"))
    offset = 8 + manifest_len
    tensors = {}
    for entry in manifest["tensors"]:
        nbytes = entry["nbytes"]
        raw = body[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise TruncatedFileError(f"{path}: payload truncated at tensor {entry['name']!r}")
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr
        offset += nbytes
    return tensors, manifest["config"], manifest["meta"]


def load_into(params, tensors, prefix=""):
    """Copy checkpoint arrays into a named parameter table, shape-checked."""
    for name, p in params.items():
        key = prefix + name
        if key not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise TensorShapeError(
                f"tensor {key!r}: checkpoint shape {tuple(arr.shape)} vs model shape {tuple(p.data.shape)}"
            )
        p.data = arr.astype(p.data.dtype, copy=True)
