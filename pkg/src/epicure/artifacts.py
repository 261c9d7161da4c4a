"""Versioned binary containers for pipeline artifacts.

Every artifact is a single file: an 8-byte magic/version prefix, a 4-byte
little-endian header length, a UTF-8 JSON header with sorted keys, then the
named arrays in sorted-name order. Writing is fully deterministic so strict
pipeline reruns can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"EPIC\x00\x01\x00\x00"

_DTYPES = {
    "int32": "<i4",
    "int64": "<i8",
    "uint8": "|u1",
    "float32": "<f4",
    "float64": "<f8",
}


class ArtifactError(ValueError):
    """Raised when an artifact file is missing, truncated or the wrong kind."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_blob(path: str | Path, kind: str, header: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = dict(header)
    meta["kind"] = kind
    meta["arrays"] = {
        name: {"dtype": str(arr.dtype), "shape": list(arr.shape)} for name, arr in arrays.items()
    }
    for name, arr in arrays.items():
        if str(arr.dtype) not in _DTYPES:
            raise ArtifactError(f"array {name!r}: unsupported dtype {arr.dtype}")
    head = _canonical_json(meta)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(len(head).to_bytes(4, "little"))
        fh.write(head)
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            fh.write(arr.astype(_DTYPES[str(arr.dtype)], copy=False).tobytes())


def read_blob(path: str | Path, expect_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    with path.open("rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ArtifactError(f"{path}: bad magic {magic!r}")
        head_len = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(head_len).decode("utf-8"))
        if expect_kind is not None and header.get("kind") != expect_kind:
            raise ArtifactError(f"{path}: expected kind {expect_kind!r}, found {header.get('kind')!r}")
        arrays: dict[str, np.ndarray] = {}
        for name in sorted(header["arrays"]):
            spec = header["arrays"][name]
            dtype = np.dtype(_DTYPES[spec["dtype"]])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ArtifactError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).astype(spec["dtype"])
    return header, arrays


def write_json(path: str | Path, payload: dict) -> None:
    """Deterministic JSON writer used for reports, manifests and the atlas."""
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
