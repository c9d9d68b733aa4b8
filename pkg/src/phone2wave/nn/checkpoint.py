#!/usr/bin/env python3
"""Versioned named-array container for model and optimizer state.

Layout (little-endian):
    magic  b"P2WCKPT\\0"
    u16    format version
    u32    header length
    JSON   header {"meta", "layers", "arrays": [{"name", "shape", "offset"}]}
    data   float32 arrays, concatenated in header order
    32     sha256 digest of everything before it
"""

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import IntegrityError, VersionMismatchError
from .base import LayerSpec

CHECKPOINT_MAGIC = b"P2WCKPT\0"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_DIGEST_SIZE = 32


class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    arrays: Dict[str, np.ndarray]
    meta: Dict[str, Any] = Field(default_factory=dict)
    layers: List[LayerSpec] = Field(default_factory=list)


def save_checkpoint(
    path,
    arrays: Dict[str, np.ndarray],
    meta: Optional[Dict[str, Any]] = None,
    layers: Optional[List[LayerSpec]] = None,
    verbose=False,
) -> None:
    """Write arrays as float32; the file is replaced atomically"""
    narrowed = [name for name, a in arrays.items() if np.asarray(a).dtype == np.float64]
    if narrowed:
        print(
            f"Warning: narrowing {len(narrowed)} float64 arrays to float32 "
            f"(first: {narrowed[0]})"
        )

    entries = []
    chunks = []
    offset = 0
    for name, value in arrays.items():
        data = np.ascontiguousarray(value, dtype="<f4")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes

    header = json.dumps(
        {
            "meta": meta or {},
            "layers": [spec.model_dump() for spec in (layers or [])],
            "arrays": entries,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = _PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header)) + header + b"".join(chunks)
    digest = hashlib.sha256(body).digest()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(body)
        f.write(digest)
    os.replace(tmp, path)
    if verbose:
        print(f"[DEBUG] Wrote checkpoint {path} ({len(entries)} arrays, {offset} data bytes)")


def load_checkpoint(path, verbose=False) -> Checkpoint:
    path = Path(path)
    if verbose:
        print(f"[DEBUG] Loading checkpoint {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST_SIZE:
        raise IntegrityError(f"{path}: truncated checkpoint ({len(raw)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise IntegrityError(f"{path}: not a phone2wave checkpoint")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch")

    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{path}: unreadable header: {e}")
    data = body[start + header_len:]

    arrays: Dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        begin = entry["offset"]
        end = begin + 4 * count
        if end > len(data):
            raise IntegrityError(f"{path}: array {entry['name']} runs past end of data")
        arrays[entry["name"]] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=begin).reshape(shape).astype(np.float32)
        )
    layers = [LayerSpec(**spec) for spec in header.get("layers", [])]
    return Checkpoint(arrays=arrays, meta=header.get("meta", {}), layers=layers)
