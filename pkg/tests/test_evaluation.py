from fractions import Fraction

import numpy as np
import pytest

from cirkit.composer import init_params
from cirkit.errors import (
    DataError,
    DimMismatch,
    EmptyQuerySet,
    MissingId,
    MissingSubset,
)
from cirkit.evaluation import (
    MetricReport,
    QueryRecord,
    RetrievalIndex,
    average_precision_at_k,
    evaluate,
    map_at_k,
    rank,
    rank_subset,
    recall_at_k,
)
from cirkit.oracles import oracle_map_at_k, oracle_rank, oracle_recall_at_k

from conftest import random_unit


def _index(rng, n=6, d=4, prefix="it"):
    emb = np.stack([random_unit(rng, d) for _ in range(n)])
    return RetrievalIndex(ids=[f"{prefix}{i}" for i in range(n)], embeddings=emb)


def test_rank_exact_match_first(rng):
    index = _index(rng)
    assert rank(index, index.embeddings[3])[0] == "it3"


def test_rank_exclusion_promotes_runner_up(rng):
    index = _index(rng)
    full = rank(index, index.embeddings[2])
    assert rank(index, index.embeddings[2], exclude={full[0]})[0] == full[1]


def test_rank_matches_selection_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(2, 16))
        d = int(rng.integers(2, 8))
        emb = np.stack([random_unit(rng, d) for _ in range(n)])
        ids = [f"x{i}" for i in range(n)]
        index = RetrievalIndex(ids=ids, embeddings=emb)
        q = random_unit(rng, d)
        assert rank(index, q) == oracle_rank(ids, emb, q)


def test_rank_tie_break_lexicographic():
    emb = np.array(
        [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], dtype=np.float32
    )
    index = RetrievalIndex(ids=["bb", "aa", "ab"], embeddings=emb)
    # "bb" and "ab" tie at similarity 1: lexicographic order wins
    assert rank(index, np.array([1.0, 0.0])) == ["ab", "bb", "aa"]


def test_rank_dim_mismatch(rng):
    with pytest.raises(DimMismatch):
        rank(_index(rng, d=4), np.zeros(3))


def test_recall_at_k_basics():
    rankings = [["a", "b", "c"], ["b", "a", "c"]]
    gts = [{"a"}, {"a"}]
    assert recall_at_k(rankings, gts, 1) == 0.5
    assert recall_at_k(rankings, gts, 2) == 1.0
    # single query with the truth at rank 2
    assert recall_at_k([["x", "gt", "y"]], [{"gt"}], 1) == 0.0
    assert recall_at_k([["x", "gt", "y"]], [{"gt"}], 3) == 1.0


def test_recall_k_exhaustive_window(rng):
    index = _index(rng, n=5)
    ranking = rank(index, random_unit(rng, 4))
    assert recall_at_k([ranking], [{"it2"}], 50) == 1.0


def test_recall_monotone_in_k(rng):
    rankings = []
    gts = []
    for _ in range(20):
        perm = rng.permutation(10)
        rankings.append([f"r{i}" for i in perm])
        gts.append({f"r{int(rng.integers(10))}"})
    values = [recall_at_k(rankings, gts, k) for k in range(1, 11)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_ap_hand_case_exact():
    ap = average_precision_at_k(["a", "x", "b", "y"], {"a", "b"}, 4)
    assert ap == Fraction(5, 6)
    assert map_at_k([["a", "x", "b", "y"]], [{"a", "b"}], 4) == 5 / 6


def test_ap_single_gt_first():
    assert average_precision_at_k(["a", "b"], {"a"}, 2) == 1


def test_ap_missing_gt_zero():
    assert average_precision_at_k(["x", "y"], {"a"}, 2) == 0


def test_map_leq_recall_single_gt(rng):
    for _ in range(30):
        n = 8
        perm = rng.permutation(n)
        ranking = [f"r{i}" for i in perm]
        gt = {f"r{int(rng.integers(n))}"}
        for k in (1, 3, 5):
            assert map_at_k([ranking], [gt], k) <= recall_at_k([ranking], [gt], k)


def test_metrics_match_oracles_randomized(rng):
    for _ in range(100):
        n = int(rng.integers(2, 20))
        ids = [f"i{i}" for i in range(n)]
        rankings = []
        gts = []
        for _ in range(int(rng.integers(1, 4))):
            rankings.append([ids[j] for j in rng.permutation(n)])
            size = int(rng.integers(1, min(4, n) + 1))
            gts.append(set(rng.choice(ids, size=size, replace=False)))
        k = int(rng.integers(1, n + 2))
        assert recall_at_k(rankings, gts, k) == oracle_recall_at_k(rankings, gts, k)
        assert map_at_k(rankings, gts, k) == oracle_map_at_k(rankings, gts, k)


def test_rank_subset(rng):
    index = _index(rng, n=8)
    q = random_unit(rng, 4)
    subset = ["it1", "it3", "it5"]
    got = rank_subset(index, q, subset)
    full = rank(index, q)
    assert got == [r for r in full if r in set(subset)]
    with pytest.raises(MissingSubset):
        rank_subset(index, q, None)


def test_subset_recall_cases(rng):
    index = _index(rng, n=8)
    # degenerate singleton subset: always recalled
    q = random_unit(rng, 4)
    ranking = rank_subset(index, q, ["it2"])
    assert recall_at_k([ranking], [{"it2"}], 1) == 1.0
    # six-element subset with the target ranked third
    sub = rank_subset(index, index.embeddings[0], [f"it{i}" for i in range(6)])
    target = sub[2]
    assert recall_at_k([sub], [{target}], 2) == 0.0
    assert recall_at_k([sub], [{target}], 3) == 1.0


def test_query_record_validation():
    with pytest.raises(DataError):
        QueryRecord("q", None, "t", gt_ids=set())
    with pytest.raises(DataError):
        QueryRecord("q", "ref", "t", gt_ids={"ref"})


def test_index_validation(rng):
    with pytest.raises(DataError):
        RetrievalIndex(ids=["a", "a"], embeddings=np.stack([random_unit(rng, 3)] * 2))
    with pytest.raises(DataError):
        RetrievalIndex(ids=["a"], embeddings=np.array([[2.0, 0.0, 0.0]]))
    with pytest.raises(MissingId):
        _index(rng).get("nope")


def test_evaluate_empty_queries(rng):
    params = init_params(4, 6, 4, 16)
    with pytest.raises(EmptyQuerySet):
        evaluate(params, [], _index(rng))


def test_evaluate_report_shape(rng):
    params = init_params(4, 6, 4, 16, seed=2)
    index = _index(rng, n=10, d=4)
    queries = [
        QueryRecord(f"q{i}", f"it{i}", f"find thing {i}",
                    gt_ids={f"it{(i + 1) % 10}"},
                    subset_ids=[f"it{(i + 1) % 10}", f"it{(i + 2) % 10}"])
        for i in range(5)
    ]
    report = evaluate(params, queries, index, ks=(1, 3, 5))
    payload = report.to_dict()
    assert payload["num_queries"] == 5
    for table in ("recall_at", "map_at", "recall_subset_at"):
        assert set(payload[table]) == {"1", "3", "5"}
        assert all(0.0 <= v <= 1.0 for v in payload[table].values())
    assert "unreliable" in payload["recall_subset_note"]
    assert payload["recall_sum"] == pytest.approx(sum(report.recall_at.values()))


def test_evaluate_rejects_unknown_gt(rng):
    params = init_params(4, 6, 4, 16)
    index = _index(rng, n=4)
    queries = [QueryRecord("q", None, "text", gt_ids={"missing"})]
    with pytest.raises(MissingId):
        evaluate(params, queries, index)


def test_report_range_validation():
    with pytest.raises(DataError):
        MetricReport(recall_at={1: 1.5}, recall_subset_at=None, map_at={}, num_queries=1)
