"""Container format shared by datasets and trained models.

A container is a directory holding ``manifest.json`` plus raw arrays. Each
array file starts with the 8-byte magic ``b"WZ01\\0\\0\\0\\0"``, a uint64
rank and ``rank`` uint64 dims, followed by little-endian float64 data. The
manifest records the SHA-256 of every array file.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"WZ01\x00\x00\x00\x00"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Container on disk is malformed or inconsistent with its manifest."""


def encode_array(arr) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    header = MAGIC + np.array([arr.ndim, *arr.shape], dtype="<u8").tobytes()
    return header + arr.tobytes(order="C")


def decode_array(buf: bytes) -> np.ndarray:
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise FormatError("bad array magic")
    rank = int(np.frombuffer(buf, "<u8", 1, 8)[0])
    if len(buf) < 16 + 8 * rank:
        raise FormatError("truncated array header")
    dims = tuple(int(d) for d in np.frombuffer(buf, "<u8", rank, 16))
    offset = 16 + 8 * rank
    expected = int(np.prod(dims)) * 8
    if len(buf) - offset != expected:
        raise FormatError(f"array shape mismatch: header says {dims} ({expected} bytes), found {len(buf) - offset}")
    return np.frombuffer(buf, "<f8", offset=offset).reshape(dims).astype(np.float64)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_array(path, arr) -> str:
    data = encode_array(arr)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    return sha256(data)


def read_array(path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def save_container(directory, manifest: dict, arrays: dict) -> str:
    """Write ``arrays`` (relative path -> array) and the manifest; returns its hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hashes = {rel: write_array(directory / rel, arr) for rel, arr in sorted(arrays.items())}
    manifest = dict(manifest, format_version=FORMAT_VERSION, arrays=hashes)
    data = dump_json(manifest)
    (directory / "manifest.json").write_bytes(data)
    return sha256(data)


def load_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {manifest.get('format_version')}")
    return manifest


def load_container(directory, verify=True) -> tuple[dict, dict]:
    directory = Path(directory)
    manifest = load_manifest(directory)
    arrays = {}
    for rel, digest in manifest["arrays"].items():
        buf = (directory / rel).read_bytes()
        arrays[rel] = decode_array(buf)
        if verify and sha256(buf) != digest:
            raise FormatError(f"checksum mismatch for {rel}")
    return manifest, arrays


def manifest_hash(directory) -> str:
    return sha256((Path(directory) / "manifest.json").read_bytes())
