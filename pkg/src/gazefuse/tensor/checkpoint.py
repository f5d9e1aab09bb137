"""Binary parameter checkpoints.

Layout::

    b"GZCKPT\\n"                      magic
    b"<n>\\n"                        decimal byte length of the JSON header
    <n bytes of UTF-8 JSON>          header, keys sorted
    <payload>                        concatenated little-endian float64 arrays

The header carries ``format_version``, ``precision``, ``seed``,
``hyperparameters`` (free-form JSON) and ``tensors``: a list of
``{"name", "shape", "offset", "count"}`` records in payload order. Values are
stored as raw IEEE-754 doubles, so save/load round-trips bit-exactly and two
saves of equal state produce equal bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from gazefuse.errors import ParseError

MAGIC = b"GZCKPT\n"
FORMAT_VERSION = 1


def dumps(state: dict[str, np.ndarray], seed: int, hyperparameters: dict[str, Any] | None = None) -> bytes:
    records = []
    chunks = []
    offset = 0
    for name in sorted(state):
        arr = np.asarray(state[name], dtype="<f8")
        records.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = {
        "format_version": FORMAT_VERSION,
        "precision": "float64",
        "seed": int(seed),
        "hyperparameters": hyperparameters or {},
        "tensors": records,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + str(len(blob)).encode() + b"\n" + blob + b"".join(chunks)


def loads(raw: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if not raw.startswith(MAGIC):
        raise ParseError("not a checkpoint file (bad magic)")
    rest = raw[len(MAGIC) :]
    newline = rest.find(b"\n")
    if newline < 0:
        raise ParseError("truncated checkpoint header")
    size = int(rest[:newline])
    header = json.loads(rest[newline + 1 : newline + 1 + size].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {header.get('format_version')}")
    payload = np.frombuffer(rest[newline + 1 + size :], dtype="<f8")
    state = {}
    for rec in header["tensors"]:
        start, count = rec["offset"], rec["count"]
        if start + count > payload.size:
            raise ParseError(f"payload too short for tensor {rec['name']}")
        state[rec["name"]] = payload[start : start + count].astype(np.float64).reshape(tuple(rec["shape"]))
    return state, header


def save(path: str | Path, state: dict[str, np.ndarray], seed: int, hyperparameters: dict[str, Any] | None = None) -> None:
    Path(path).write_bytes(dumps(state, seed, hyperparameters))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
