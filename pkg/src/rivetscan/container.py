"""Binary container files for pipeline artifacts.

Every artifact (FRF matrices, time records, PCA bases, trained networks)
is stored in one self-describing format:

    bytes 0..5   magic ``FRFD1\\n``
    bytes 6..9   header length ``L`` as little-endian uint32
    next L       UTF-8 JSON header
    rest         payload: the listed arrays back to back, row-major,
                 little-endian IEEE-754 float64; complex arrays are stored
                 as interleaved re/im float64 pairs (i.e. raw ``<c16``)

The header carries ``schema``, ``version``, an ``arrays`` list of
``{name, shape, dtype}`` entries (dtype ``f8`` or ``c16``), free-form
``metadata``, and ``content_hash`` = SHA-256 hex digest of the payload.
The hash is verified on every load, so truncated or corrupted files are
rejected deterministically.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"FRFD1\n"
FORMAT_VERSION = 1

_DTYPES = {"f8": np.dtype("<f8"), "c16": np.dtype("<c16")}


class ContainerError(Exception):
    """Malformed, truncated, or corrupted container file."""


def _dtype_tag(arr: np.ndarray) -> str:
    if np.iscomplexobj(arr):
        return "c16"
    return "f8"


def write_container(path, schema: str, arrays: dict[str, np.ndarray],
                    metadata: dict | None = None) -> str:
    """Write arrays to ``path`` under the given schema name.

    Returns the payload content hash (hex). Array insertion order is
    preserved in the file and on reload.
    """
    entries = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _dtype_tag(arr)
        arr = arr.astype(_DTYPES[tag], copy=False)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag})
        chunks.append(np.ascontiguousarray(arr).tobytes())
    payload = b"".join(chunks)
    content_hash = hashlib.sha256(payload).hexdigest()
    header = {
        "schema": schema,
        "version": FORMAT_VERSION,
        "arrays": entries,
        "metadata": metadata or {},
        "content_hash": content_hash,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(4, "little"))
        fh.write(header_bytes)
        fh.write(payload)
    return content_hash


def read_container(path, expect_schema: str | None = None):
    """Load a container file; returns ``(arrays, metadata, header)``.

    Raises ContainerError on bad magic, truncation, shape/payload length
    disagreement, or content-hash mismatch.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise ContainerError(f"{path}: truncated before header")
    if raw[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: bad magic bytes")
    hlen = int.from_bytes(raw[len(MAGIC): len(MAGIC) + 4], "little")
    hstart = len(MAGIC) + 4
    if len(raw) < hstart + hlen:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(raw[hstart: hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable header ({exc})") from exc
    payload = raw[hstart + hlen:]

    expected_len = 0
    for entry in header.get("arrays", []):
        n = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        expected_len += n * _DTYPES[entry["dtype"]].itemsize
    if len(payload) != expected_len:
        raise ContainerError(
            f"{path}: payload length {len(payload)} does not match declared "
            f"shapes ({expected_len} bytes expected)")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("content_hash"):
        raise ContainerError(f"{path}: content hash mismatch")
    if expect_schema is not None and header.get("schema") != expect_schema:
        raise ContainerError(
            f"{path}: schema {header.get('schema')!r}, expected {expect_schema!r}")

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        dt = _DTYPES[entry["dtype"]]
        n = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        chunk = payload[offset: offset + n * dt.itemsize]
        offset += n * dt.itemsize
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dt).reshape(entry["shape"]).copy()
    return arrays, header.get("metadata", {}), header
