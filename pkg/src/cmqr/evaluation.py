"""Rank-quality metrics over TREC-format run files and relevance judgments.

MRR, MAP, and Recall@10, reported overall and per subset. Reciprocal rank
and average precision are computed at full ranking depth (no cutoff);
relevance means a judgment grade of at least 1. Queries without any relevant
passage in the qrels are excluded before evaluation; queries judged relevant
but missing from the run score zero on every metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence


@dataclass
class Qrels:
    """Relevance judgments: query_id -> passage_id -> grade (>= 0)."""

    judgments: dict[str, dict[str, int]]

    def relevant(self, query_id: str) -> set[str]:
        return {
            pid for pid, grade in self.judgments.get(query_id, {}).items() if grade >= 1
        }

    def evaluable_query_ids(self) -> list[str]:
        """Queries with at least one relevant passage, in insertion order."""
        return [qid for qid in self.judgments if self.relevant(qid)]


@dataclass
class SubsetMetrics:
    mrr: float
    map: float
    recall_at_10: float
    query_count: int

    def as_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "map": self.map,
            "recall_at_10": self.recall_at_10,
            "query_count": self.query_count,
        }


@dataclass
class MetricsReport:
    overall: SubsetMetrics
    subsets: dict[str, SubsetMetrics]
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {"overall": self.overall.as_dict()}
        for label in sorted(self.subsets):
            out[label] = self.subsets[label].as_dict()
        return out


def reciprocal_rank(ranking: Sequence[str], relevant: set[str]) -> float:
    """1/rank of the first relevant passage; 0 when none is retrieved."""
    for position, passage_id in enumerate(ranking, start=1):
        if passage_id in relevant:
            return 1.0 / position
    return 0.0


def average_precision(ranking: Sequence[str], relevant: set[str]) -> float:
    """Mean of precision@r over relevant ranks, against all relevant items."""
    if not relevant:
        raise ValueError("average precision needs at least one relevant passage")
    hits = 0
    precision_sum = 0.0
    for position, passage_id in enumerate(ranking, start=1):
        if passage_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / len(relevant)


def recall_at_k(ranking: Sequence[str], relevant: set[str], k: int = 10) -> float:
    """Fraction of the relevant passages found in the top ``k``."""
    if not relevant:
        raise ValueError("recall needs at least one relevant passage")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    found = sum(1 for passage_id in ranking[:k] if passage_id in relevant)
    return found / len(relevant)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate(
    run: Mapping[str, Sequence[tuple[str, float, int]]],
    qrels: Qrels,
    subset_map: Mapping[str, str] | None = None,
) -> MetricsReport:
    """Score a run against qrels, overall and per subset.

    ``run`` maps query_id to its ranked (passage_id, score, rank) list.
    Run queries absent from the qrels (or judged with no relevant passage)
    are excluded and reported in ``warnings``; qrels queries absent from the
    run contribute 0 to every metric. With a subset map, unlabeled queries
    fall into the ``"unlabeled"`` subset, so the overall numbers are always
    the query-count-weighted mean of the subset numbers.
    """
    evaluable = qrels.evaluable_query_ids()
    evaluable_set = set(evaluable)
    warnings = []
    for query_id in run:
        if query_id not in qrels.judgments:
            warnings.append(f"run query {query_id!r} not in qrels; excluded")
        elif query_id not in evaluable_set:
            warnings.append(
                f"run query {query_id!r} has no relevant passage in qrels; excluded"
            )

    per_subset: dict[str, dict[str, list[float]]] = {}
    for query_id in evaluable:
        relevant = qrels.relevant(query_id)
        ranking = [passage_id for passage_id, _, _ in run.get(query_id, [])]
        label = "overall" if subset_map is None else subset_map.get(query_id, "unlabeled")
        bucket = per_subset.setdefault(label, {"rr": [], "ap": [], "r10": []})
        bucket["rr"].append(reciprocal_rank(ranking, relevant))
        bucket["ap"].append(average_precision(ranking, relevant))
        bucket["r10"].append(recall_at_k(ranking, relevant, 10))

    all_rr = [v for bucket in per_subset.values() for v in bucket["rr"]]
    all_ap = [v for bucket in per_subset.values() for v in bucket["ap"]]
    all_r10 = [v for bucket in per_subset.values() for v in bucket["r10"]]
    overall = SubsetMetrics(
        mrr=_mean(all_rr),
        map=_mean(all_ap),
        recall_at_10=_mean(all_r10),
        query_count=len(all_rr),
    )
    subsets = {}
    if subset_map is not None:
        for label, bucket in per_subset.items():
            subsets[label] = SubsetMetrics(
                mrr=_mean(bucket["rr"]),
                map=_mean(bucket["ap"]),
                recall_at_10=_mean(bucket["r10"]),
                query_count=len(bucket["rr"]),
            )
    return MetricsReport(overall=overall, subsets=subsets, warnings=warnings)


# ---------------------------------------------------------------------------
# TREC-format files
# ---------------------------------------------------------------------------


def load_qrels(path: str) -> Qrels:
    """Parse whitespace-separated ``query_id 0 passage_id grade`` lines."""
    judgments: dict[str, dict[str, int]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(
                    f"{path}: line {lineno}: expected 4 fields, got {len(fields)}"
                )
            query_id, _, passage_id, grade_text = fields
            try:
                grade = int(grade_text)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad grade {grade_text!r}") from exc
            if grade < 0:
                raise ValueError(f"{path}: line {lineno}: grade must be >= 0, got {grade}")
            judgments.setdefault(query_id, {})[passage_id] = grade
    return Qrels(judgments=judgments)


def load_run(path: str) -> dict[str, list[tuple[str, float, int]]]:
    """Parse ``query_id Q0 passage_id rank score tag`` lines and validate.

    Per query, ranks must be contiguous from 1 and scores non-increasing
    with rank.
    """
    raw: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ValueError(
                    f"{path}: line {lineno}: expected 6 fields, got {len(fields)}"
                )
            query_id, _, passage_id, rank_text, score_text, _ = fields
            try:
                rank = int(rank_text)
                score = float(score_text)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            raw.setdefault(query_id, []).append((rank, passage_id, score))
    run: dict[str, list[tuple[str, float, int]]] = {}
    for query_id, entries in raw.items():
        entries.sort(key=lambda e: e[0])
        for position, (rank, _, _) in enumerate(entries, start=1):
            if rank != position:
                raise ValueError(
                    f"{path}: query {query_id!r}: ranks must be contiguous from 1"
                )
        for (_, _, prev), (_, _, cur) in zip(entries, entries[1:]):
            if cur > prev:
                raise ValueError(
                    f"{path}: query {query_id!r}: scores must be non-increasing with rank"
                )
        run[query_id] = [(pid, score, rank) for rank, pid, score in entries]
    return run


def write_run(
    results: Iterable[tuple[str, Sequence[tuple[str, float]]]],
    handle: IO[str],
    tag: str,
) -> None:
    """Write ranked results as TREC run lines, one block per query."""
    for query_id, ranked in results:
        for rank, (passage_id, score) in enumerate(ranked, start=1):
            handle.write(f"{query_id} Q0 {passage_id} {rank} {float(score)!r} {tag}\n")


def load_subset_map(path: str) -> dict[str, str]:
    """Parse whitespace-separated ``query_id subset_label`` lines."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected 2 fields, got {len(fields)}"
                )
            query_id, label = fields
            if label == "overall":
                raise ValueError(
                    f"{path}: line {lineno}: subset label 'overall' is reserved"
                )
            mapping[query_id] = label
    return mapping
