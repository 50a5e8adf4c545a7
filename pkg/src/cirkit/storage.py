"""File formats: the CIRF embedding binary and line-aligned JSONL sidecars.

CIRF layout: magic "CIRF", version u16, count u64, dim u32 (little-endian),
followed by count*dim little-endian float32 values, row-major. Row ids (and
optionally captions) live in a sibling .jsonl file, one line per row.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"CIRF"
VERSION = 1
_HEADER = struct.Struct("<HQI")  # version, count, dim


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".jsonl")


def write_embeddings(path, ids, matrix, captions=None) -> None:
    """Write a CIRF file plus its line-aligned id sidecar."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DataError(f"expected a 2-d matrix, got shape {matrix.shape}")
    count, dim = matrix.shape
    if len(ids) != count:
        raise DataError(f"{len(ids)} ids for {count} rows")
    if captions is not None and len(captions) != count:
        raise DataError(f"{len(captions)} captions for {count} rows")
    if len(set(ids)) != count:
        raise DataError("row ids must be unique")

    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(VERSION, count, dim))
        f.write(matrix.astype("<f4").tobytes())

    rows = []
    for i, rid in enumerate(ids):
        row = {"id": rid}
        if captions is not None:
            row["caption"] = captions[i]
        rows.append(row)
    write_jsonl(sidecar_path(path), rows)


def read_embeddings(path):
    """Read a CIRF file. Returns (ids, captions-or-None, float32 matrix)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DataError(f"{path}: truncated header")
        version, count, dim = _HEADER.unpack(header)
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = f.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise DataError(f"{path}: expected {expected} data bytes, got {len(payload)}")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)

    rows = read_jsonl(sidecar_path(path))
    if len(rows) != count:
        raise DataError(
            f"{sidecar_path(path)}: {len(rows)} sidecar lines for {count} rows"
        )
    ids = []
    captions = []
    has_captions = True
    for row in rows:
        if "id" not in row:
            raise DataError(f"{sidecar_path(path)}: sidecar line missing 'id'")
        ids.append(row["id"])
        if "caption" in row:
            captions.append(row["caption"])
        else:
            has_captions = False
    if len(set(ids)) != count:
        raise DataError(f"{sidecar_path(path)}: duplicate ids")
    return ids, (captions if has_captions else None), matrix


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False))
            f.write("\n")


def read_jsonl(path):
    rows = []
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return rows
