"""Benchmark refinement: validate each triplet against hard negatives,
regenerate texts for the failures, re-validate the rewrites coarsest-first.

Per triplet the judge sees the target shuffled among its three hardest
negatives three times; two correct picks out of three is a pass. Triplets the
judge refuses to assess throughout are removed as harmful; triplets whose
rewrites all fail re-validation are removed as ambiguous.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, IndexTooSmall, MalformedGeneration, MissingId
from .evaluation import RetrievalIndex, rank
from .judge import JudgeClient

NUM_NEGATIVES = 3
ROUNDS_PER_PASS = 3
PASS_THRESHOLD = 2

GOOD = "good"
REGENERATED = "regenerated"
REMOVED_AMBIGUOUS = "removed_ambiguous"
REMOVED_HARMFUL = "removed_harmful"


@dataclass(frozen=True)
class BenchmarkTriplet:
    ref_id: str
    target_id: str
    mod_text: str

    def __post_init__(self):
        if self.ref_id == self.target_id:
            raise DataError(f"reference and target coincide: {self.ref_id!r}")


@dataclass(frozen=True)
class ValidationResult:
    outcome: str  # "pass" | "fail" | "all_refused"
    correct: int
    refused: int
    rounds: tuple  # ((candidate_order, answer), ...) per round


@dataclass(frozen=True)
class RefinementRecord:
    triplet: BenchmarkTriplet
    state: str
    level: int | None = None  # 1..3 when regenerated
    new_text: str | None = None
    round_log: tuple = ()

    @property
    def final_text(self) -> str:
        return self.new_text if self.state == REGENERATED else self.triplet.mod_text


@dataclass
class RefinementStats:
    good: int = 0
    regenerated: dict = None
    removed_ambiguous: int = 0
    removed_harmful: int = 0

    def __post_init__(self):
        if self.regenerated is None:
            self.regenerated = {1: 0, 2: 0, 3: 0}

    @property
    def total(self) -> int:
        return (
            self.good
            + sum(self.regenerated.values())
            + self.removed_ambiguous
            + self.removed_harmful
        )

    def to_dict(self) -> dict:
        return {
            "good": self.good,
            "regenerated": {str(k): v for k, v in sorted(self.regenerated.items())},
            "removed_ambiguous": self.removed_ambiguous,
            "removed_harmful": self.removed_harmful,
        }


def mine_hard_negatives(index: RetrievalIndex, target_id, n=NUM_NEGATIVES):
    """The n gallery items most similar to the target, target excluded."""
    if target_id not in index:
        raise MissingId(f"target {target_id!r} not in index")
    if len(index) < n + 1:
        raise IndexTooSmall(f"index has {len(index)} items, need {n + 1}")
    ranking = rank(index, index.get(target_id), exclude=frozenset({target_id}))
    return ranking[:n]


def _distinct_orders(candidates, rng, rounds=ROUNDS_PER_PASS):
    """Draw `rounds` pairwise-distinct shuffles of the candidate list."""
    orders = []
    seen = set()
    attempts = 0
    while len(orders) < rounds:
        perm = tuple(int(p) for p in rng.permutation(len(candidates)))
        attempts += 1
        if perm in seen:
            if attempts > 1000:
                raise DataError("could not draw distinct candidate orders")
            continue
        seen.add(perm)
        orders.append(tuple(candidates[p] for p in perm))
    return orders


def validate_triplet(
    judge: JudgeClient, triplet: BenchmarkTriplet, negatives, rng
) -> ValidationResult:
    """Three judged rounds over shuffled candidates; pass needs two correct.

    A refusal or a -1 counts as an incorrect round; three refusals make the
    outcome "all_refused".
    """
    if len(negatives) != NUM_NEGATIVES:
        raise DataError(f"expected {NUM_NEGATIVES} negatives, got {len(negatives)}")
    candidates = [triplet.target_id] + list(negatives)
    correct = 0
    refused = 0
    rounds = []
    for order in _distinct_orders(candidates, rng):
        answer = judge.validate(triplet.ref_id, list(order), triplet.mod_text)
        rounds.append((order, answer))
        if answer is None:
            refused += 1
        elif answer == order.index(triplet.target_id):
            correct += 1
    if refused == ROUNDS_PER_PASS:
        outcome = "all_refused"
    elif correct >= PASS_THRESHOLD:
        outcome = "pass"
    else:
        outcome = "fail"
    return ValidationResult(outcome, correct, refused, tuple(rounds))


def regenerate_texts(judge: JudgeClient, triplet: BenchmarkTriplet, good_examples):
    """Ask the judge for exactly three rewrites, coarsest first. The
    coarse-to-fine hierarchy is the judge's contract; it is logged, not
    enforced."""
    texts = judge.generate(
        triplet.ref_id, triplet.target_id, triplet.mod_text, list(good_examples)
    )
    if len(texts) != 3:
        raise MalformedGeneration(f"expected 3 regenerated texts, got {len(texts)}")
    return list(texts)


def _triplet_rng(seed, triplet: BenchmarkTriplet) -> np.random.Generator:
    """Per-triplet stream: global seed combined with a stable triplet-id hash,
    so concurrency cannot reorder draws."""
    digest = hashlib.blake2b(
        f"{triplet.ref_id}->{triplet.target_id}".encode("utf-8"), digest_size=8
    ).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "little")])


def _refine_one(judge, triplet, negatives, seed, good_examples) -> RefinementRecord:
    rng = _triplet_rng(seed, triplet)
    first = validate_triplet(judge, triplet, negatives, rng)
    log = list(first.rounds)
    if first.outcome == "pass":
        return RefinementRecord(triplet, GOOD, round_log=tuple(log))
    if first.outcome == "all_refused":
        return RefinementRecord(triplet, REMOVED_HARMFUL, round_log=tuple(log))

    texts = regenerate_texts(judge, triplet, good_examples)
    for level, text in enumerate(texts, start=1):
        retry = validate_triplet(judge, replace(triplet, mod_text=text), negatives, rng)
        log.extend(retry.rounds)
        if retry.outcome == "pass":
            return RefinementRecord(
                triplet, REGENERATED, level=level, new_text=text, round_log=tuple(log)
            )
    return RefinementRecord(triplet, REMOVED_AMBIGUOUS, round_log=tuple(log))


def refine(
    triplets,
    index: RetrievalIndex,
    judge: JudgeClient,
    seed: int = 0,
    good_examples=(),
    workers: int = 4,
):
    """Run the three-step refinement over all triplets.

    Returns (refined, records, stats): the refined benchmark keeps input
    order, with removed triplets dropped and regenerated ones carrying their
    chosen text. Triplets are judged concurrently (up to `workers`), but all
    randomness is per-triplet, so output is independent of scheduling.
    """
    triplets = list(triplets)
    for t in triplets:
        if t.ref_id not in index:
            raise MissingId(f"reference {t.ref_id!r} not in index")
    negatives = {
        t.target_id: mine_hard_negatives(index, t.target_id) for t in triplets
    }

    def work(t):
        return _refine_one(judge, t, negatives[t.target_id], seed, good_examples)

    if workers > 1 and len(triplets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(work, triplets))
    else:
        records = [work(t) for t in triplets]

    stats = RefinementStats()
    refined = []
    for record in records:
        if record.state == GOOD:
            stats.good += 1
            refined.append(record.triplet)
        elif record.state == REGENERATED:
            stats.regenerated[record.level] += 1
            refined.append(replace(record.triplet, mod_text=record.new_text))
        elif record.state == REMOVED_AMBIGUOUS:
            stats.removed_ambiguous += 1
        else:
            stats.removed_harmful += 1
    return refined, records, stats
