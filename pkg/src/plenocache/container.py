"""Versioned binary container shared by weights, factor tables, and caches.

Layout (all integers little-endian):

    offset 0   4 bytes   magic b"PLNC"
    offset 4   4 bytes   kind tag (b"MLPW", b"FACT", b"CACH", ...)
    offset 8   u32       format version (currently 1)
    offset 12  u32       metadata length in bytes
    offset 16  ...       metadata, canonical JSON (sorted keys, no spaces)
    then                 raw array payloads, in metadata["arrays"] order

Each entry of metadata["arrays"] is {"name", "dtype", "shape"}; payloads are
the arrays' little-endian bytes, concatenated without padding. Canonical JSON
plus raw little-endian payloads make save -> load -> save byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ParseError, VersionMismatch

MAGIC = b"PLNC"
VERSION = 1

_HEADER = struct.Struct("<4s4sII")


def write_container(path, kind: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(kind) != 4:
        raise ValueError("kind tag must be exactly 4 bytes")
    meta = dict(meta)
    meta["arrays"] = [
        {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
        for name, arr in arrays.items()
    ]
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, kind, VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr)
            if a.dtype.byteorder == ">":
                a = a.astype(a.dtype.newbyteorder("<"))
            f.write(a.tobytes())


def read_container(path, kind: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, file_kind, version, meta_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if file_kind != kind:
        raise ParseError(f"{path}: kind {file_kind!r}, expected {kind!r}")
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {VERSION}")
    body = raw[_HEADER.size :]
    if len(body) < meta_len:
        raise ParseError(f"{path}: truncated metadata")
    try:
        meta = json.loads(body[:meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: metadata is not valid JSON: {e}") from e
    if "arrays" not in meta:
        raise ParseError(f"{path}: metadata lacks an arrays index")

    arrays: dict[str, np.ndarray] = {}
    offset = meta_len
    for entry in meta["arrays"]:
        try:
            name, dtype, shape = entry["name"], np.dtype(entry["dtype"]), tuple(entry["shape"])
        except (KeyError, TypeError) as e:
            raise ParseError(f"{path}: malformed array entry {entry!r}") from e
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(body):
            raise ParseError(f"{path}: payload for {name!r} truncated")
        arrays[name] = np.frombuffer(body[offset : offset + nbytes], dtype=dtype).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise ParseError(f"{path}: {len(body) - offset} trailing bytes after payloads")
    return meta, arrays
