"""Dense-vector store: EMB1 binary I/O and cosine similarity.

Embeddings cross a file-interchange boundary rather than being computed
in-process; any encoder that writes the EMB1 layout can feed the pipeline.

EMB1 layout (little-endian):
    magic "EMB1" | u32 count | u32 dim | records...
    record: u16 id-byte-length | id bytes (UTF-8) | dim * f32

Vectors are float32 on disk; similarity accumulates in float64. Provenance
(which encoder produced the file) travels in an optional ``<file>.json``
sidecar because the binary layout has no metadata slot.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"EMB1"
_HEADER = struct.Struct("<II")
_IDLEN = struct.Struct("<H")


class EmbeddingFormatError(ValueError):
    """EMB1 file violates the binary layout or vector invariants."""


@dataclass
class EmbeddingStore:
    dim: int
    vectors: dict[str, np.ndarray]
    provenance: str = ""

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Read an EMB1 file, validating header, payload size, and components."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 4 + _HEADER.size or data[:4] != MAGIC:
        raise EmbeddingFormatError(f"{path}: missing EMB1 magic bytes")
    count, dim = _HEADER.unpack_from(data, 4)
    if dim < 1:
        raise EmbeddingFormatError(f"{path}: dimension must be >= 1, got {dim}")
    offset = 4 + _HEADER.size
    vectors: dict[str, np.ndarray] = {}
    vec_bytes = 4 * dim
    for _ in range(count):
        if offset + _IDLEN.size > len(data):
            raise EmbeddingFormatError(f"{path}: payload truncated (header says {count} records)")
        (id_len,) = _IDLEN.unpack_from(data, offset)
        offset += _IDLEN.size
        if offset + id_len + vec_bytes > len(data):
            raise EmbeddingFormatError(f"{path}: payload truncated (header says {count} records)")
        vid = data[offset:offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"{path}: vector for id {vid!r} has NaN/Inf components")
        if vid in vectors:
            raise EmbeddingFormatError(f"{path}: duplicate id {vid!r}")
        vectors[vid] = vec
    if offset != len(data):
        raise EmbeddingFormatError(
            f"{path}: {len(data) - offset} trailing bytes after {count} records"
        )
    return EmbeddingStore(dim=dim, vectors=vectors, provenance=_read_provenance(path))


def _read_provenance(path: Path) -> str:
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return path.name
        if isinstance(meta, dict):
            if "provenance" in meta:
                return str(meta["provenance"])
            if "encoder" in meta:
                pooling = meta.get("pooling", "")
                return f"{meta['encoder']}/{pooling}" if pooling else str(meta["encoder"])
    return path.name


def write_embeddings(store: EmbeddingStore | Mapping[str, np.ndarray],
                     path: str | Path, sidecar: bool = False) -> None:
    """Write EMB1 bytes; load(write(s)) round-trips bit-exactly."""
    if isinstance(store, EmbeddingStore):
        vectors, dim, provenance = store.vectors, store.dim, store.provenance
    else:
        vectors = dict(store)
        if not vectors:
            raise EmbeddingFormatError("refusing to write an empty store without a dim")
        dim = len(next(iter(vectors.values())))
        provenance = ""
    path = Path(path)
    chunks = [MAGIC, _HEADER.pack(len(vectors), dim)]
    for vid, vec in vectors.items():
        arr = np.asarray(vec, dtype="<f4")
        if arr.shape != (dim,):
            raise EmbeddingFormatError(f"vector for id {vid!r} has length {arr.size}, expected {dim}")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingFormatError(f"vector for id {vid!r} has NaN/Inf components")
        id_bytes = vid.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise EmbeddingFormatError(f"id {vid!r} exceeds 65535 bytes")
        chunks.append(_IDLEN.pack(len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))
    if sidecar and provenance:
        path.with_name(path.name + ".json").write_text(
            json.dumps({"provenance": provenance}), encoding="utf-8"
        )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, accumulated in float64 and clamped to [-1, 1].

    A zero vector yields 0.0 with a warning rather than an error.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"vector length mismatch: {u.shape} vs {v.shape}")
    a = u.astype(np.float64, copy=False)
    b = v.astype(np.float64, copy=False)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine of a zero vector is defined as 0", stacklevel=2)
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def pair_similarity(store: EmbeddingStore, query_id: str, passage_id: str) -> float:
    """Cosine of the stored vectors for a (query, passage) pair."""
    if query_id not in store.vectors:
        raise KeyError(f"query id {query_id!r} not in embedding store")
    if passage_id not in store.vectors:
        raise KeyError(f"passage id {passage_id!r} not in embedding store")
    return cosine(store.vectors[query_id], store.vectors[passage_id])
