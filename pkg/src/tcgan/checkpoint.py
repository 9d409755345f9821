"""Versioned binary checkpoints.

Layout: 4-byte magic, uint32 version, uint64 header length, JSON header,
then raw little-endian parameter blocks in header order. Every block
carries a sha256 in the header, so truncation and corruption are both
detected at load time.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

MAGIC = b"TCGN"
VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class CheckpointError(RuntimeError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def digest_array(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def digest_named(named):
    """name -> sha256 for a list of (name, Parameter|ndarray) pairs."""
    out = {}
    for name, p in named:
        arr = p.data if hasattr(p, "data") else p
        out[name] = digest_array(arr)
    return out


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path, payload):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_state(path, arrays, meta):
    """Write named arrays plus a JSON-serializable meta dict."""
    entries = []
    blocks = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr.data if hasattr(arr, "data") else arr)
        tag = "<f4" if arr.dtype == np.float32 else "<f8"
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": tag,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        blocks.append(raw)
    header = dict(meta)
    header["arrays"] = entries
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bytearray()
    payload += MAGIC
    payload += VERSION.to_bytes(4, "little")
    payload += len(hjson).to_bytes(8, "little")
    payload += hjson
    for raw in blocks:
        payload += raw
    _atomic_write(path, bytes(payload))
    return file_digest(path)


def load_state(path):
    """Read a checkpoint; returns (meta dict, {name: ndarray})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a checkpoint file")
    version = int.from_bytes(blob[4:8], "little")
    if version > VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} is newer than supported {VERSION}"
        )
    hlen = int.from_bytes(blob[8:16], "little")
    if 16 + hlen > len(blob):
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header: {e}") from None
    arrays = {}
    off = 16 + hlen
    for ent in header["arrays"]:
        raw = blob[off : off + ent["nbytes"]]
        if len(raw) != ent["nbytes"]:
            raise CorruptCheckpointError(
                f"{path}: truncated block for {ent['name']!r}"
            )
        if hashlib.sha256(raw).hexdigest() != ent["sha256"]:
            raise CorruptCheckpointError(
                f"{path}: digest mismatch for {ent['name']!r}"
            )
        arr = np.frombuffer(raw, dtype=_DTYPES[ent["dtype"]]).reshape(ent["shape"])
        arrays[ent["name"]] = arr.copy()
        off += ent["nbytes"]
    meta = {k: v for k, v in header.items() if k != "arrays"}
    return meta, arrays
