"""Binary field container.

Layout: an 8-byte little-endian unsigned header length ``n``, ``n`` bytes of
UTF-8 JSON header, then the row-major little-endian float64 payload.  Complex
arrays are stored as interleaved (re, im) pairs.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = "diracflow-field/1"
_DTYPES = {"float64": np.dtype("<f8"), "complex128": np.dtype("<c16")}


class FieldFormatError(ValueError):
    pass


def field_bytes(values: np.ndarray, extents=None, t: float = 0.0, label: str = "") -> bytes:
    arr = np.asarray(values)
    if np.iscomplexobj(arr):
        tag, arr = "complex128", np.ascontiguousarray(arr, dtype="<c16")
    else:
        tag, arr = "float64", np.ascontiguousarray(arr, dtype="<f8")
    payload = arr.tobytes(order="C")
    header = {
        "format": MAGIC,
        "shape": list(arr.shape),
        "dtype": tag,
        "extents": [float(e) for e in (extents or [])],
        "t": float(t),
        "label": str(label),
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(head)) + head + payload


def write_field(values: np.ndarray, path, extents=None, t: float = 0.0, label: str = "") -> Path:
    path = Path(path)
    path.write_bytes(field_bytes(values, extents, t, label))
    return path


def parse_field(blob: bytes, source: str = "<bytes>") -> tuple[np.ndarray, dict]:
    if len(blob) < 8:
        raise FieldFormatError(f"{source}: expected at least 8 header-length bytes, got {len(blob)}")
    (n,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + n:
        raise FieldFormatError(f"{source}: header declares {n} bytes but only {len(blob) - 8} follow")
    try:
        header = json.loads(blob[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"{source}: unreadable header ({exc})") from None
    if header.get("format") != MAGIC or header.get("dtype") not in _DTYPES:
        raise FieldFormatError(f"{source}: not a {MAGIC} container")
    dtype = _DTYPES[header["dtype"]]
    shape = tuple(int(s) for s in header["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = blob[8 + n:]
    if len(payload) != expected or header["payload_bytes"] != expected:
        raise FieldFormatError(f"{source}: expected {expected} payload bytes for shape {list(shape)}, "
                               f"found {len(payload)}")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise FieldFormatError(f"{source}: payload checksum mismatch")
    values = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return values, header


def read_field(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    return parse_field(path.read_bytes(), str(path))


def file_digest(path) -> tuple[str, int]:
    data = Path(path).read_bytes()
    return hashlib.sha256(data).hexdigest(), len(data)
