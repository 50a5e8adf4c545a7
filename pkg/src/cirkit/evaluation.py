"""Exact retrieval ranking and metrics: Recall@k over the full index,
Recall@k within per-query candidate subsets, and mAP@k.

Ranking is brute force over the gallery with a deterministic lexicographic
tie-break. Average precision is accumulated in exact rational arithmetic and
rounded to float once, so results are bit-reproducible and match any exact
oracle digit for digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .composer import ComposerParams, TextFeaturizer, compose
from .errors import (
    DataError,
    DimMismatch,
    EmptyQuerySet,
    MissingId,
    MissingSubset,
)

SUBSET_METRIC_NOTE = (
    "recall-subset is considered unreliable for comparing retrieval methods; "
    "reported for completeness only"
)


@dataclass
class RetrievalIndex:
    """Candidate gallery: unique ids aligned with unit-norm embedding rows."""

    ids: list
    embeddings: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise DataError(f"index needs an (N, d) matrix with N >= 1, got "
                            f"{self.embeddings.shape}")
        if len(self.ids) != self.embeddings.shape[0]:
            raise DataError(f"{len(self.ids)} ids for {self.embeddings.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("index ids must be unique")
        norms = np.linalg.norm(self.embeddings.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise DataError("index rows must be unit norm")
        self._pos = {rid: i for i, rid in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __contains__(self, rid) -> bool:
        return rid in self._pos

    def get(self, rid) -> np.ndarray:
        if rid not in self._pos:
            raise MissingId(f"id {rid!r} not in index")
        return self.embeddings[self._pos[rid]]


@dataclass
class QueryRecord:
    query_id: str
    reference_id: str | None
    text: str | None
    gt_ids: frozenset
    subset_ids: tuple | None = None

    def __post_init__(self):
        self.gt_ids = frozenset(self.gt_ids)
        if not self.gt_ids:
            raise DataError(f"query {self.query_id!r}: empty ground-truth set")
        if self.reference_id is not None and self.reference_id in self.gt_ids:
            raise DataError(
                f"query {self.query_id!r}: reference id inside ground truth"
            )
        if self.subset_ids is not None:
            self.subset_ids = tuple(self.subset_ids)


def _ordered_by_score(ids_arr, scores):
    """Positions sorted by score descending, ties by id ascending."""
    by_id = np.argsort(ids_arr)
    by_score = np.argsort(-scores[by_id], kind="stable")
    return by_id[by_score]


def rank(index: RetrievalIndex, query, exclude=frozenset()):
    """Gallery ids by descending cosine similarity to the query."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape[0] != index.dim:
        raise DimMismatch(f"query dim {q.shape[0]} vs index dim {index.dim}")
    scores = index.embeddings.astype(np.float64) @ q
    ids_arr = np.asarray(index.ids)
    if exclude:
        keep = np.fromiter((rid not in exclude for rid in index.ids), dtype=bool)
        ids_arr = ids_arr[keep]
        scores = scores[keep]
    order = _ordered_by_score(ids_arr, scores)
    return [str(ids_arr[i]) for i in order]


def rank_subset(index: RetrievalIndex, query, subset_ids, exclude=frozenset()):
    """Ranking restricted to the given candidate subset."""
    if subset_ids is None:
        raise MissingSubset("query has no subset ids")
    q = np.asarray(query, dtype=np.float64)
    if q.shape[0] != index.dim:
        raise DimMismatch(f"query dim {q.shape[0]} vs index dim {index.dim}")
    kept = [rid for rid in subset_ids if rid not in exclude]
    if not kept:
        return []
    emb = np.stack([index.get(rid) for rid in kept]).astype(np.float64)
    scores = emb @ q
    order = _ordered_by_score(np.asarray(kept), scores)
    return [kept[i] for i in order]


def recall_at_k(rankings, gt_sets, k: int) -> float:
    """Fraction of queries with at least one ground-truth id in the top k."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(rankings) != len(gt_sets):
        raise DataError("rankings and ground truths differ in length")
    hits = sum(
        1 for ranking, gt in zip(rankings, gt_sets) if any(r in gt for r in ranking[:k])
    )
    return hits / len(rankings)


def average_precision_at_k(ranking, gt, k: int) -> Fraction:
    """AP@k as an exact rational: sum of precision at each hit, normalized
    by min(k, |gt|)."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not gt:
        raise DataError("ground-truth set must be non-empty")
    hits = 0
    total = Fraction(0)
    for pos, rid in enumerate(ranking[:k], start=1):
        if rid in gt:
            hits += 1
            total += Fraction(hits, pos)
    return total / min(k, len(gt))


def map_at_k(rankings, gt_sets, k: int) -> float:
    """Mean AP@k over queries, computed exactly and rounded to float once."""
    if len(rankings) != len(gt_sets):
        raise DataError("rankings and ground truths differ in length")
    total = Fraction(0)
    for ranking, gt in zip(rankings, gt_sets):
        total += average_precision_at_k(ranking, gt, k)
    return float(total / len(rankings))


@dataclass
class MetricReport:
    recall_at: dict
    recall_subset_at: dict | None
    map_at: dict
    num_queries: int

    def __post_init__(self):
        for name, table in (("recall", self.recall_at), ("map", self.map_at)):
            for k, v in table.items():
                if not 0.0 <= v <= 1.0:
                    raise DataError(f"{name}@{k} = {v} outside [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "num_queries": self.num_queries,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "recall_sum": sum(self.recall_at.values()),
            "map_at": {str(k): v for k, v in sorted(self.map_at.items())},
        }
        if self.recall_subset_at is not None:
            out["recall_subset_at"] = {
                str(k): v for k, v in sorted(self.recall_subset_at.items())
            }
            out["recall_subset_note"] = SUBSET_METRIC_NOTE
        return out


def evaluate(
    params: ComposerParams,
    queries,
    index: RetrievalIndex,
    ks=(1, 5, 10, 50),
    featurizer: TextFeaturizer | None = None,
) -> MetricReport:
    """Compose each query, rank the gallery without its reference image, and
    aggregate every metric."""
    if not queries:
        raise EmptyQuerySet("no queries to evaluate")
    if featurizer is None:
        featurizer = TextFeaturizer(params.vocab_buckets)

    rankings = []
    subset_rankings = []
    subset_gts = []
    gt_sets = []
    for query in queries:
        for gid in query.gt_ids:
            if gid not in index:
                raise MissingId(f"query {query.query_id!r}: gt id {gid!r} not in index")
        ref_emb = None
        exclude = frozenset()
        if query.reference_id is not None:
            ref_emb = index.get(query.reference_id)
            exclude = frozenset({query.reference_id})
        composed = compose(params, ref_emb, query.text, featurizer)
        rankings.append(rank(index, composed, exclude))
        gt_sets.append(query.gt_ids)
        if query.subset_ids is not None:
            if not query.gt_ids & set(query.subset_ids):
                raise DataError(
                    f"query {query.query_id!r}: subset lacks every ground truth"
                )
            subset_rankings.append(
                rank_subset(index, composed, query.subset_ids, exclude)
            )
            subset_gts.append(query.gt_ids)

    recall = {k: recall_at_k(rankings, gt_sets, k) for k in ks}
    maps = {k: map_at_k(rankings, gt_sets, k) for k in ks}
    subset = None
    if subset_rankings:
        subset = {k: recall_at_k(subset_rankings, subset_gts, k) for k in ks}
    return MetricReport(
        recall_at=recall,
        recall_subset_at=subset,
        map_at=maps,
        num_queries=len(queries),
    )
