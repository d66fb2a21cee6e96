"""Dense retrieval: rewrite pooling and exact inner-product search.

A turn's dense query is the weighted centroid of its rewrite embeddings,
each rewrite scaled by its rewrite score; the pooled vector drops into any
dot-product retrieval system unchanged. Search here is exact (no approximate
nearest neighbor): scores accumulate left to right in float64, row-major, so
results are bit-reproducible and testable against a naive loop.

Passage embeddings live in a little-endian binary file (magic ``CMQE``):
u32 version=1, u32 dimension, u64 count, then ``count`` records of
[u32 id byte length, id bytes UTF-8, dimension x f32].
"""

from __future__ import annotations

import hashlib
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .rewriting import RewriteSet
from .text import tokenize

EMBEDDING_MAGIC = b"CMQE"
EMBEDDING_VERSION = 1

DEFAULT_ENCODER_DIM = 256
DEFAULT_ENCODER_SEED = 42


class Encoder(ABC):
    """Deterministic text-to-vector map with a fixed output dimension."""

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def encode(self, text: str) -> np.ndarray: ...


class HashProjectionEncoder(Encoder):
    """Signed feature hashing of token counts, L2-normalized.

    Each token hashes to a bucket and a sign via a keyed blake2b digest, so
    vectors are identical across runs and platforms for a given seed. Texts
    sharing tokens share buckets, which preserves lexical similarity without
    any learned weights. Empty (or fully cancelling) text maps to the zero
    vector.
    """

    def __init__(self, dimension: int = DEFAULT_ENCODER_DIM,
                 seed: int = DEFAULT_ENCODER_SEED):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self._dimension = dimension
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=True)

    @property
    def dimension(self) -> int:
        return self._dimension

    def _hash(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), key=self._key,
                                 digest_size=9).digest()
        bucket = int.from_bytes(digest[:8], "little") % self._dimension
        sign = 1.0 if digest[8] & 1 else -1.0
        return bucket, sign

    def encode(self, text: str) -> np.ndarray:
        vector = np.zeros(self._dimension, dtype=np.float64)
        counts: dict[str, int] = {}
        for token in tokenize(text):
            counts[token] = counts.get(token, 0) + 1
        for token in sorted(counts):
            bucket, sign = self._hash(token)
            vector[bucket] += sign * counts[token]
        norm = math.sqrt(float(np.dot(vector, vector)))
        if norm > 0.0:
            vector /= norm
        return vector


@dataclass
class VectorStore:
    """Row-per-passage embedding matrix with its id table. Immutable by use."""

    matrix: np.ndarray  # (count, dimension), float32
    ids: list[str]

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {self.matrix.shape}")
        if self.matrix.shape[0] != len(self.ids):
            raise ValueError(
                f"matrix has {self.matrix.shape[0]} rows but {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("id table contains duplicates")
        if self.matrix.size and not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def build_store(
    embeddings: Iterable[tuple[str, np.ndarray]], dimension: int | None = None
) -> VectorStore:
    """Materialize a store from (passage_id, vector) pairs in input order."""
    ids: list[str] = []
    seen: set[str] = set()
    rows: list[np.ndarray] = []
    for passage_id, vector in embeddings:
        if passage_id in seen:
            raise ValueError(f"duplicate passage_id {passage_id!r}")
        row = np.asarray(vector, dtype=np.float32).reshape(-1)
        if dimension is None:
            dimension = row.shape[0]
        if row.shape[0] != dimension:
            raise ValueError(
                f"passage {passage_id!r}: vector has dimension {row.shape[0]}, "
                f"expected {dimension}"
            )
        if not np.all(np.isfinite(row)):
            raise ValueError(f"passage {passage_id!r}: vector has non-finite entries")
        seen.add(passage_id)
        ids.append(passage_id)
        rows.append(row)
    if dimension is None:
        dimension = 0
    matrix = (
        np.stack(rows).astype(np.float32)
        if rows
        else np.zeros((0, dimension), dtype=np.float32)
    )
    return VectorStore(matrix=matrix, ids=ids)


def pool_rewrites(
    rewrite_set: RewriteSet, encoder: Encoder, normalize_rs: bool = False
) -> np.ndarray:
    """Weighted centroid of the rewrite embeddings: ``sum_j encode(q_j) * RS_j``.

    Follows the pooling formula literally (no normalizer); pass
    ``normalize_rs=True`` to divide by the total rewrite-score mass, which
    rescales the vector without changing any dot-product ranking.
    """
    if not rewrite_set.rewrites:
        raise ValueError("rewrite set must contain at least one rewrite")
    pooled = np.zeros(encoder.dimension, dtype=np.float64)
    for hyp in rewrite_set.rewrites:
        vector = np.asarray(encoder.encode(hyp.text), dtype=np.float64)
        if vector.shape != (encoder.dimension,):
            raise ValueError(
                f"encoder returned shape {vector.shape}, expected ({encoder.dimension},)"
            )
        pooled += vector * hyp.rs_score
    if normalize_rs:
        pooled /= math.fsum(h.rs_score for h in rewrite_set.rewrites)
    return pooled


def search_dense(
    store: VectorStore, query: np.ndarray, top_k: int
) -> list[tuple[str, float]]:
    """Exact dot-product search, best first, passage_id ascending on ties.

    Scores are accumulated dimension by dimension in float64 so each row's
    sum is exactly the left-to-right scalar loop over its entries.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != store.dimension:
        raise ValueError(
            f"query dimension {query.shape[0]} does not match store dimension "
            f"{store.dimension}"
        )
    matrix = store.matrix.astype(np.float64)
    scores = np.zeros(store.count, dtype=np.float64)
    for j in range(store.dimension):
        scores += matrix[:, j] * query[j]
    results = [(store.ids[row], float(scores[row])) for row in range(store.count)]
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[:top_k]


# ---------------------------------------------------------------------------
# CMQE embedding file
# ---------------------------------------------------------------------------


def write_embeddings(store: VectorStore, path: str) -> None:
    """Write a store to a CMQE file; round-trips bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IIQ", EMBEDDING_VERSION, store.dimension, store.count))
        for row in range(store.count):
            raw = store.ids[row].encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(store.matrix[row].astype("<f4").tobytes())


def read_embeddings(path: str) -> VectorStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: not a CMQE embedding file")
    version, dimension, count = struct.unpack_from("<IIQ", data, 4)
    if version != EMBEDDING_VERSION:
        raise ValueError(f"{path}: unsupported embedding file version {version}")
    offset = 4 + 16
    ids: list[str] = []
    matrix = np.zeros((count, dimension), dtype=np.float32)
    for row in range(count):
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        vector = np.frombuffer(data, dtype="<f4", count=dimension, offset=offset)
        offset += 4 * dimension
        matrix[row] = vector
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return VectorStore(matrix=matrix, ids=ids)
