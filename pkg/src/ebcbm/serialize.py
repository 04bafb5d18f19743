"""Single-file container: one JSON manifest line followed by raw array blobs.

The manifest records a format version, a caller-supplied metadata document,
and an array table (name, shape, dtype, byte offset and length within the
blob) plus a SHA-256 checksum of the blob. Arrays are stored little-endian,
contiguous, in manifest order. Supported dtypes: float32 ("f32le"),
uint8 ("u8").
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ParseError, VersionError

FORMAT_VERSION = 1

_DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}
_TAGS = {np.dtype("float32"): "f32le", np.dtype("uint8"): "u8"}


def write_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    table = []
    blob = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _TAGS:
            raise ValueError(f"unsupported array dtype {arr.dtype} for '{name}'")
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        table.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": _TAGS[arr.dtype],
            "offset": len(blob),
            "length": len(raw),
        })
        blob.extend(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "arrays": table,
        "checksum": hashlib.sha256(bytes(blob)).hexdigest(),
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(header)
        f.write(b"\n")
        f.write(bytes(blob))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing manifest terminator", offset=len(data))
    try:
        manifest = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"manifest is not valid JSON: {e}", offset=0) from e
    if not isinstance(manifest, dict) or "format_version" not in manifest:
        raise ParseError("manifest lacks format_version", offset=0)
    if manifest["format_version"] != FORMAT_VERSION:
        raise VersionError(
            f"format version {manifest['format_version']} not supported "
            f"(expected {FORMAT_VERSION})")
    blob = data[nl + 1:]
    if manifest.get("checksum") != hashlib.sha256(blob).hexdigest():
        raise ParseError("blob checksum mismatch", offset=nl + 1)
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest.get("arrays", []):
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            dtype = _DTYPES[entry["dtype"]]
            off, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"malformed array table entry: {e}", offset=nl + 1) from e
        if off + length > len(blob):
            raise ParseError(f"array '{name}' extends past end of blob",
                             offset=nl + 1 + off)
        arr = np.frombuffer(blob, dtype=dtype, count=length // dtype.itemsize,
                            offset=off)
        if arr.size != int(np.prod(shape)):
            raise ParseError(f"array '{name}' length does not match shape {shape}",
                             offset=nl + 1 + off)
        arrays[name] = arr.reshape(shape).copy()
    return manifest["meta"], arrays
