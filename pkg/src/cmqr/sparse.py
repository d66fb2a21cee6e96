"""Sparse retrieval: inverted index and BM25 over weighted bag-of-words queries.

The query side is where multi-query rewriting shows up: all rewrites of a
turn are folded into a single term->weight map. Each rewrite contributes its
term frequencies scaled by its share of the total rewrite-score mass, so the
aggregate is a convex combination of per-rewrite term-frequency vectors and a
single rewrite degenerates to plain term counts.

The index is immutable once built; concurrent searches need no locking.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .rewriting import RewriteSet
from .text import tokenize

__all__ = [
    "Passage",
    "InvertedIndex",
    "WeightedQuery",
    "tokenize",
    "build_index",
    "aggregate_rewrites",
    "bm25_term_weight",
    "search_sparse",
    "read_collection",
]

INDEX_FILE_NAME = "index.cmqi"
_INDEX_MAGIC = b"CMQI"
_INDEX_VERSION = 1


@dataclass(frozen=True)
class Passage:
    passage_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.passage_id:
            raise ValueError("passage_id must be nonempty")
        if not self.text:
            raise ValueError(f"passage {self.passage_id!r}: text must be nonempty")


@dataclass
class WeightedQuery:
    """Bag-of-words query: term -> positive finite weight."""

    weights: dict[str, float]

    def __post_init__(self) -> None:
        cleaned: dict[str, float] = {}
        for term, weight in self.weights.items():
            if not math.isfinite(weight) or weight < 0:
                raise ValueError(f"weight for {term!r} must be finite and >= 0, got {weight}")
            if weight > 0:
                cleaned[term] = weight
        self.weights = cleaned


class InvertedIndex:
    """Term postings plus the per-document statistics BM25 needs."""

    def __init__(self) -> None:
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self.doc_lengths: list[int] = []
        self.ids: list[str] = []
        self._ordinals: dict[str, int] = {}

    @property
    def doc_count(self) -> int:
        return len(self.ids)

    @property
    def avg_doc_length(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths) / len(self.doc_lengths)

    @property
    def vocabulary_size(self) -> int:
        return len(self.postings)

    def ordinal(self, passage_id: str) -> int:
        return self._ordinals[passage_id]

    def document_frequency(self, term: str) -> int:
        return len(self.postings.get(term, []))

    def term_frequency(self, term: str, doc: int) -> int:
        for ordinal, tf in self.postings.get(term, []):
            if ordinal == doc:
                return tf
        return 0

    def _add_document(self, passage_id: str, counts: dict[str, int], length: int) -> None:
        if passage_id in self._ordinals:
            raise ValueError(f"duplicate passage_id {passage_id!r}")
        ordinal = len(self.ids)
        self.ids.append(passage_id)
        self._ordinals[passage_id] = ordinal
        self.doc_lengths.append(length)
        for term in sorted(counts):
            self.postings.setdefault(term, []).append((ordinal, counts[term]))

    # -- persistence (internal binary format, little-endian, versioned) ----

    def save(self, directory: str) -> None:
        import os

        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, INDEX_FILE_NAME)
        with open(path, "wb") as fh:
            fh.write(_INDEX_MAGIC)
            fh.write(struct.pack("<IQ", _INDEX_VERSION, self.doc_count))
            for passage_id in self.ids:
                raw = passage_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(struct.pack(f"<{self.doc_count}I", *self.doc_lengths))
            fh.write(struct.pack("<I", len(self.postings)))
            for term in sorted(self.postings):
                raw = term.encode("utf-8")
                plist = self.postings[term]
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", len(plist)))
                flat = [v for pair in plist for v in pair]
                fh.write(struct.pack(f"<{2 * len(plist)}I", *flat))

    @classmethod
    def load(cls, directory: str) -> "InvertedIndex":
        import os

        path = os.path.join(directory, INDEX_FILE_NAME)
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != _INDEX_MAGIC:
            raise ValueError(f"{path}: not a CMQI index file")
        (version, doc_count) = struct.unpack_from("<IQ", data, 4)
        if version != _INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        offset = 4 + 12
        index = cls()
        for _ in range(doc_count):
            (id_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            passage_id = data[offset : offset + id_len].decode("utf-8")
            offset += id_len
            index.ids.append(passage_id)
            index._ordinals[passage_id] = len(index.ids) - 1
        lengths = struct.unpack_from(f"<{doc_count}I", data, offset)
        offset += 4 * doc_count
        index.doc_lengths = list(lengths)
        (term_count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        for _ in range(term_count):
            (term_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            term = data[offset : offset + term_len].decode("utf-8")
            offset += term_len
            (df,) = struct.unpack_from("<I", data, offset)
            offset += 4
            flat = struct.unpack_from(f"<{2 * df}I", data, offset)
            offset += 8 * df
            index.postings[term] = [
                (flat[i], flat[i + 1]) for i in range(0, len(flat), 2)
            ]
        return index


def build_index(passages: Iterable[Passage]) -> InvertedIndex:
    """Index a passage stream; idempotent given the same input order."""
    index = InvertedIndex()
    for passage in passages:
        tokens = tokenize(passage.text)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        index._add_document(passage.passage_id, counts, len(tokens))
    return index


def aggregate_rewrites(rewrite_set: RewriteSet) -> WeightedQuery:
    """Fold all rewrites of a turn into one weighted bag-of-words query.

    Term weight: ``sum_j (RS_j / sum(RS)) * count(term, rewrite_j)``. Each
    rewrite's share is computed first so a single rewrite reduces exactly to
    its raw term frequencies.
    """
    rewrites = rewrite_set.rewrites
    if not rewrites:
        raise ValueError("rewrite set must contain at least one rewrite")
    total = math.fsum(h.rs_score for h in rewrites)
    weights: dict[str, float] = {}
    any_tokens = False
    for hyp in rewrites:
        share = hyp.rs_score / total
        for term in tokenize(hyp.text):
            any_tokens = True
            weights[term] = weights.get(term, 0.0) + share
    if not any_tokens:
        raise ValueError("all rewrites tokenize to empty")
    return WeightedQuery(weights=weights)


def _idf(doc_count: int, df: int) -> float:
    return math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))


def _bm25(tf: int, df: int, doc_length: int, doc_count: int, avgdl: float,
          k1: float, b: float) -> float:
    norm = tf + k1 * (1.0 - b + b * doc_length / avgdl)
    return _idf(doc_count, df) * tf * (k1 + 1.0) / norm


def bm25_term_weight(
    index: InvertedIndex, term: str, doc: int, k1: float = 0.82, b: float = 0.68
) -> float:
    """BM25 document-side weight of ``term`` in document ordinal ``doc``.

    ``idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*|d|/avgdl))`` with the
    nonnegative idf ``ln(1 + (N - df + 0.5)/(df + 0.5))``.
    """
    tf = index.term_frequency(term, doc)
    if tf == 0:
        raise ValueError(f"term {term!r} does not occur in document {doc}")
    return _bm25(
        tf,
        index.document_frequency(term),
        index.doc_lengths[doc],
        index.doc_count,
        index.avg_doc_length,
        k1,
        b,
    )


def search_sparse(
    index: InvertedIndex,
    query: WeightedQuery,
    top_k: int,
    k1: float = 0.82,
    b: float = 0.68,
) -> list[tuple[str, float]]:
    """Score ``sum_t w_t * bm25(t, d)`` over the postings of the query terms.

    Returns at most ``top_k`` passages with positive scores, sorted by score
    descending with ascending passage_id as the tie-break. Query terms are
    visited in sorted order so scores accumulate identically on every run.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if not query.weights:
        raise ValueError("query has no terms")
    doc_count = index.doc_count
    avgdl = index.avg_doc_length
    scores: dict[int, float] = {}
    for term in sorted(query.weights):
        plist = index.postings.get(term)
        if not plist:
            continue
        weight = query.weights[term]
        df = len(plist)
        for ordinal, tf in plist:
            contribution = weight * _bm25(
                tf, df, index.doc_lengths[ordinal], doc_count, avgdl, k1, b
            )
            scores[ordinal] = scores.get(ordinal, 0.0) + contribution
    results = [
        (index.ids[ordinal], score) for ordinal, score in scores.items() if score > 0.0
    ]
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[:top_k]


# ---------------------------------------------------------------------------
# Collection input: JSON lines {"id", "contents"} or TSV "id<TAB>text"
# ---------------------------------------------------------------------------


def read_collection(path: str) -> Iterator[Passage]:
    """Stream passages from a collection file, detecting JSONL vs TSV."""
    import json

    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip():
                continue
            try:
                if stripped.lstrip().startswith("{"):
                    record = json.loads(stripped)
                    passage = Passage(str(record["id"]), str(record["contents"]))
                else:
                    pid, text = stripped.split("\t", 1)
                    passage = Passage(pid, text)
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            yield passage
