"""Independent brute-force oracles and randomized property suites.

Everything here deliberately avoids the library code paths it checks: ranking
is a pure-Python selection scan, average precision is recomputed from the
precision-at-rank definition in exact rationals, and gradients come from
central finite differences over a flattened parameter vector. The `oracle`
CLI subcommand runs these suites so frozen test values can be regenerated.
"""

from __future__ import annotations

import time
from fractions import Fraction

import numpy as np

from .composer import ComposerParams, TextFeaturizer, init_params
from .embedding import normalize, slerp
from .errors import DataError
from .training import loss_gradients, pretrain_loss, triplet_loss


def oracle_rank(ids, matrix, query, exclude=frozenset()):
    """Selection-based ranking: repeatedly pick the best remaining candidate
    (highest similarity, then lexicographically smallest id)."""
    query = [float(x) for x in query]
    pool = []
    for rid, row in zip(ids, matrix):
        if rid in exclude:
            continue
        score = 0.0
        for a, b in zip(row, query):
            score += float(a) * b
        pool.append((rid, score))
    result = []
    while pool:
        best = 0
        for i in range(1, len(pool)):
            if pool[i][1] > pool[best][1] or (
                pool[i][1] == pool[best][1] and pool[i][0] < pool[best][0]
            ):
                best = i
        result.append(pool.pop(best)[0])
    return result


def oracle_recall_at_k(rankings, gt_sets, k):
    hits = 0
    for ranking, gt in zip(rankings, gt_sets):
        found = False
        for rid in list(ranking)[:k]:
            if rid in gt:
                found = True
        if found:
            hits += 1
    return hits / len(rankings)


def oracle_ap_at_k(ranking, gt, k) -> Fraction:
    """AP@k from the definition: precision at each rank times the relevance
    indicator, normalized by min(k, |gt|)."""
    top = list(ranking)[:k]
    total = Fraction(0)
    for i in range(1, len(top) + 1):
        rel = 1 if top[i - 1] in gt else 0
        if rel:
            hits_to_i = sum(1 for r in top[:i] if r in gt)
            total += Fraction(hits_to_i, i) * rel
    return total / min(k, len(gt))


def oracle_map_at_k(rankings, gt_sets, k) -> float:
    total = Fraction(0)
    for ranking, gt in zip(rankings, gt_sets):
        total += oracle_ap_at_k(ranking, gt, k)
    return float(total / len(rankings))


def params_to_vector(params: ComposerParams) -> np.ndarray:
    parts = [arr.ravel() for _, arr in params.array_items()]
    parts.append(np.array([params.tau]))
    return np.concatenate(parts)


def vector_to_params(vec: np.ndarray, template: ComposerParams) -> ComposerParams:
    out = template.copy()
    offset = 0
    for name, arr in out.array_items():
        size = arr.size
        arr[...] = vec[offset : offset + size].reshape(arr.shape)
        offset += size
    out.tau = float(vec[offset])
    return out


def finite_difference_grads(params, loss_fn, step=1e-4) -> np.ndarray:
    """Central differences of loss_fn over every parameter, tau included."""
    theta = params_to_vector(params)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        hi = theta.copy()
        lo = theta.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (
            loss_fn(vector_to_params(hi, params)) - loss_fn(vector_to_params(lo, params))
        ) / (2.0 * step)
    return grad


def gradient_relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-3): relative where it matters, absolute
    (scaled) floor for near-zero components."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    return np.abs(analytic - numeric) / denom


def _random_unit(rng, dim):
    """Exact-unit float64 vector; float32 storage rounding would bend the
    ill-conditioned angle checks near slerp endpoints."""
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def run_slerp_suite(cases=1000, seed=0):
    """Randomized slerp properties: endpoints, unit norm, the angle law, and
    continuity of the small-angle fallback. Returns (ok, lines)."""
    rng = np.random.default_rng(seed)
    lines = []
    ok = True
    start = time.perf_counter()
    worst_norm = 0.0
    worst_angle = 0.0
    for _ in range(cases):
        dim = int(rng.integers(2, 33))
        a = _random_unit(rng, dim)
        b = _random_unit(rng, dim)
        theta = float(np.arccos(np.clip(a.astype(np.float64) @ b.astype(np.float64), -1, 1)))
        if theta >= np.pi - 1e-5:
            continue
        alpha = float(rng.random())
        out = slerp(a, b, alpha)
        worst_norm = max(worst_norm, abs(float(np.linalg.norm(out.astype(np.float64))) - 1.0))
        got = float(np.arccos(np.clip(out.astype(np.float64) @ a.astype(np.float64), -1, 1)))
        worst_angle = max(worst_angle, abs(got - (1.0 - alpha) * theta))
        if not np.allclose(slerp(a, b, 1.0), a, atol=1e-6):
            ok = False
        if not np.allclose(slerp(a, b, 0.0), b, atol=1e-6):
            ok = False
    if worst_norm > 1e-6:
        ok = False
    if worst_angle > 1e-5:
        ok = False
    lines.append(f"unit-norm worst deviation: {worst_norm:.2e} (tol 1e-6)")
    lines.append(f"angle-law worst deviation: {worst_angle:.2e} (tol 1e-5)")

    # fallback continuity: tiny angles should agree with normalized lerp
    worst_gap = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 17))
        a = _random_unit(rng, dim)
        tweak = a.astype(np.float64) + rng.normal(size=dim) * 1e-8
        b = normalize(tweak)
        alpha = float(rng.random())
        via_slerp = slerp(a, b, alpha).astype(np.float64)
        via_lerp = normalize(
            alpha * a.astype(np.float64) + (1 - alpha) * b.astype(np.float64)
        ).astype(np.float64)
        worst_gap = max(worst_gap, float(np.linalg.norm(via_slerp - via_lerp)))
    if worst_gap > 1e-6:
        ok = False
    lines.append(f"small-angle continuity worst gap: {worst_gap:.2e} (tol 1e-6)")
    lines.append(f"elapsed: {time.perf_counter() - start:.3f}s over {cases} cases")
    return ok, lines


def run_rank_suite(galleries=1000, max_n=64, seed=0):
    """Library ranking vs the selection oracle on randomized galleries."""
    from .evaluation import RetrievalIndex, rank

    rng = np.random.default_rng(seed)
    for g in range(galleries):
        n = int(rng.integers(2, max_n + 1))
        dim = int(rng.integers(2, 17))
        emb = np.stack([_random_unit(rng, dim) for _ in range(n)])
        ids = [f"g{g}-{i:03d}" for i in range(n)]
        index = RetrievalIndex(ids=ids, embeddings=emb)
        q = _random_unit(rng, dim)
        exclude = frozenset({ids[0]}) if rng.random() < 0.3 else frozenset()
        got = rank(index, q, exclude)
        want = oracle_rank(ids, emb, q, exclude)
        if got != want:
            return False, [f"gallery {g}: mismatch {got[:5]} != {want[:5]}"]
    return True, [f"{galleries} galleries matched the selection oracle exactly"]


def run_metric_suite(galleries=1000, max_n=64, seed=0):
    """recall@k and map@k vs their enumeration oracles, plus the fixed
    AP hand case."""
    from .evaluation import average_precision_at_k, map_at_k, recall_at_k

    hand = average_precision_at_k(["a", "x", "b", "y"], {"a", "b"}, 4)
    if float(hand) != 5 / 6:
        return False, [f"hand case AP = {float(hand)} != 5/6"]

    rng = np.random.default_rng(seed)
    for g in range(galleries):
        n = int(rng.integers(2, max_n + 1))
        ids = [f"i{i:03d}" for i in range(n)]
        n_queries = int(rng.integers(1, 5))
        rankings = []
        gt_sets = []
        for _ in range(n_queries):
            perm = rng.permutation(n)
            rankings.append([ids[i] for i in perm])
            gt_size = int(rng.integers(1, min(4, n) + 1))
            gt_sets.append(set(rng.choice(ids, size=gt_size, replace=False)))
        k = int(rng.integers(1, n + 2))
        if recall_at_k(rankings, gt_sets, k) != oracle_recall_at_k(rankings, gt_sets, k):
            return False, [f"gallery {g}: recall@{k} mismatch"]
        if map_at_k(rankings, gt_sets, k) != oracle_map_at_k(rankings, gt_sets, k):
            return False, [f"gallery {g}: map@{k} mismatch"]
    return True, [
        f"{galleries} galleries matched enumeration oracles exactly",
        "hand case AP@4 == 5/6 exactly",
    ]


def random_gradcheck_config(rng, min_projection_norm=0.15):
    """A small random model plus batch for gradient checking.

    Configs whose pre-normalization projection norm is tiny are redrawn:
    there the curvature of y/|y| makes an h=1e-4 central difference
    meaningless, so such a draw probes the probe, not the gradients.
    """
    from .composer import forward_batch

    words = ["red", "blue", "car", "dog", "tree", "small", "wooden", "two"]
    for _ in range(100):
        d_img = int(rng.integers(3, 6))
        d_h = int(rng.integers(4, 9))
        d_out = int(rng.integers(3, 6))
        vocab = int(rng.integers(8, 17))
        b = int(rng.integers(2, 5))
        params = init_params(
            d_img, d_h, d_out, vocab,
            tau=float(rng.uniform(0.05, 0.5)),
            seed=int(rng.integers(0, 2**31)),
        )
        # gradients must hold at generic points, not just at init: noisy
        # biases exercise every path and keep the projection norm healthy
        for name, arr in params.array_items():
            if name.startswith("b_"):
                arr += rng.normal(0.0, 0.3, size=arr.shape)
        refs = np.stack([_random_unit(rng, d_img) for _ in range(b)])
        targets = np.stack([_random_unit(rng, d_out) for _ in range(b)])
        texts = [
            " ".join(rng.choice(words, size=int(rng.integers(1, 5)))) for _ in range(b)
        ]
        captions = [
            " ".join(rng.choice(words, size=int(rng.integers(1, 5)))) for _ in range(b)
        ]
        featurizer = TextFeaturizer(vocab)
        smallest = min(
            float(forward_batch(params, featurizer, r, t)[1]["norms"].min())
            for r, t in ((refs, [None] * b), (None, captions), (refs, texts))
        )
        if smallest >= min_projection_norm:
            return params, featurizer, refs, texts, captions, targets
    raise DataError("could not draw a well-conditioned gradcheck config")


def run_gradcheck(configs=20, seed=0, step=1e-4, tol=1e-4):
    """Analytic vs finite-difference gradients on random small models."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c in range(configs):
        params, feat, refs, texts, captions, targets = random_gradcheck_config(rng)
        mode = "pretrain" if c % 2 == 0 else "triplet"
        if mode == "pretrain":
            loss_fn = lambda p: pretrain_loss(p, feat, refs, texts, captions, targets)
        else:
            loss_fn = lambda p: triplet_loss(p, feat, refs, texts, targets)
        _, grads = loss_gradients(params, feat, refs, texts, captions, targets, mode)
        analytic = params_to_vector(grads)
        numeric = finite_difference_grads(params, loss_fn, step)
        rel = gradient_relative_errors(analytic, numeric)
        worst = max(worst, float(rel.max()))
        if rel.max() >= tol:
            return False, [f"config {c} ({mode}): max rel error {rel.max():.2e}"]
    return True, [f"{configs} configs passed, worst relative error {worst:.2e} (tol {tol})"]


SUITES = {
    "slerp": run_slerp_suite,
    "rank": run_rank_suite,
    "metrics": run_metric_suite,
    "gradcheck": run_gradcheck,
}


def run_suite(name, **kwargs):
    if name not in SUITES:
        raise DataError(f"unknown oracle suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kwargs)
