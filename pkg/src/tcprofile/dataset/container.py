"""Directory container: ``manifest.json`` plus one little-endian blob per array.

Each blob file is ``MAGIC`` followed by the raw array bytes. The manifest
records shape, dtype and SHA-256 of every blob, the schema version, and a
checksum over its own canonical body. Archives and model checkpoints share
this layout.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

MAGIC = b"TCPBLOB1"
SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


class ArchiveError(IOError):
    """Base class for unreadable containers."""


class VersionMismatchError(ArchiveError):
    pass


class TruncatedFileError(ArchiveError):
    pass


class ChecksumError(ArchiveError):
    pass


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False).encode("utf-8")


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Write ``arrays`` and JSON-serialisable ``meta`` under directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blobs = {}
    for name, arr in sorted(arrays.items()):
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype
        le = np.ascontiguousarray(arr, dtype=dt)
        if le.dtype.str not in _DTYPES:
            raise TypeError(f"unsupported dtype {le.dtype.str} for {name}")
        payload = MAGIC + le.tobytes()
        fname = f"{name}.bin"
        _atomic_write(path / fname, payload)
        blobs[name] = {
            "file": fname,
            "dtype": le.dtype.str,
            "shape": list(le.shape),
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
    body = {"kind": kind, "schema_version": SCHEMA_VERSION, "blobs": blobs, "meta": meta}
    manifest = dict(body, manifest_sha256=hashlib.sha256(_canonical(body)).hexdigest())
    _atomic_write(path / MANIFEST, _canonical(manifest) + b"\n")
    return path


def read_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and verify a container; returns ``(meta, arrays)``."""
    path = Path(path)
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"no manifest at {mpath}")
    raw = mpath.read_bytes()
    try:
        manifest = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        if not raw.rstrip().endswith(b"}"):
            raise TruncatedFileError(f"{mpath} is truncated") from exc
        raise ChecksumError(f"{mpath} is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or "schema_version" not in manifest:
        raise ChecksumError(f"{mpath} is not a container manifest")
    if manifest["schema_version"] != SCHEMA_VERSION:
        raise VersionMismatchError(f"{mpath}: schema {manifest['schema_version']}, expected {SCHEMA_VERSION}")
    body = {k: v for k, v in manifest.items() if k != "manifest_sha256"}
    if hashlib.sha256(_canonical(body)).hexdigest() != manifest.get("manifest_sha256"):
        raise ChecksumError(f"{mpath}: manifest checksum mismatch")
    if kind is not None and manifest["kind"] != kind:
        raise ArchiveError(f"{path} holds a {manifest['kind']!r}, expected {kind!r}")
    arrays = {}
    for name, info in manifest["blobs"].items():
        dt = np.dtype(info["dtype"])
        expected = len(MAGIC) + dt.itemsize * int(np.prod(info["shape"], dtype=np.int64))
        bpath = path / info["file"]
        if not bpath.is_file():
            raise TruncatedFileError(f"missing blob {bpath}")
        payload = bpath.read_bytes()
        if len(payload) < expected:
            raise TruncatedFileError(f"{bpath}: {len(payload)} bytes, expected {expected}")
        if len(payload) > expected or hashlib.sha256(payload).hexdigest() != info["sha256"]:
            raise ChecksumError(f"{bpath}: checksum mismatch")
        if payload[: len(MAGIC)] != MAGIC:
            raise ChecksumError(f"{bpath}: bad magic bytes")
        arrays[name] = np.frombuffer(payload, dtype=dt, offset=len(MAGIC)).reshape(info["shape"]).copy()
    return manifest["meta"], arrays


def _atomic_write(target: Path, data: bytes):
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, target)
