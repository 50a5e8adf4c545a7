"""Analytic gradients against central finite differences, plus the loss
contracts they back."""

import math

import numpy as np
import pytest

from cirkit.composer import TextFeaturizer, init_params
from cirkit.errors import BatchTooSmall
from cirkit.oracles import (
    finite_difference_grads,
    gradient_relative_errors,
    params_to_vector,
    random_gradcheck_config,
    run_gradcheck,
)
from cirkit.training import (
    contrastive_loss,
    loss_gradients,
    pretrain_loss,
    triplet_loss,
)

from conftest import random_unit


def test_contrastive_identity_closed_form():
    q = np.eye(2)
    assert contrastive_loss(q, q, 1.0) == pytest.approx(
        -math.log(math.e / (math.e + 1.0)), abs=1e-12
    )


def test_contrastive_perfect_alignment_small_tau():
    rng = np.random.default_rng(0)
    q = np.stack([random_unit(rng, 8).astype(np.float64) for _ in range(4)])
    assert contrastive_loss(q, q, 0.01) < 1e-6


def test_contrastive_permutation_invariance():
    rng = np.random.default_rng(1)
    q = np.stack([random_unit(rng, 6).astype(np.float64) for _ in range(5)])
    z = np.stack([random_unit(rng, 6).astype(np.float64) for _ in range(5)])
    base = contrastive_loss(q, z, 0.2)
    perm = np.random.default_rng(2).permutation(5)
    assert contrastive_loss(q[perm], z[perm], 0.2) == pytest.approx(base, abs=1e-12)


def test_contrastive_batch_too_small():
    q = np.array([[1.0, 0.0]])
    with pytest.raises(BatchTooSmall):
        contrastive_loss(q, q, 0.1)


def _tiny_batch(seed=0, b=3, d_img=4, d_out=4, vocab=16):
    rng = np.random.default_rng(seed)
    params = init_params(d_img, 8, d_out, vocab, seed=seed)
    feat = TextFeaturizer(vocab)
    refs = np.stack([random_unit(rng, d_img).astype(np.float64) for _ in range(b)])
    targets = np.stack([random_unit(rng, d_out).astype(np.float64) for _ in range(b)])
    texts = [f"sample text {i}" for i in range(b)]
    captions = [f"caption {i}" for i in range(b)]
    return params, feat, refs, texts, captions, targets


def test_pretrain_loss_is_mean_of_terms():
    params, feat, refs, texts, captions, targets = _tiny_batch()
    total = pretrain_loss(params, feat, refs, texts, captions, targets)
    from cirkit.composer import forward_batch
    from cirkit.training import _contrastive_loss_grads

    b = len(texts)
    qv, _ = forward_batch(params, feat, refs, [None] * b)
    qw, _ = forward_batch(params, feat, None, captions)
    qc, _ = forward_batch(params, feat, refs, texts)
    parts = [
        _contrastive_loss_grads(q, targets, params.tau)[0] for q in (qv, qw, qc)
    ]
    assert total == pytest.approx(sum(parts) / 3.0, abs=1e-12)


def test_pretrain_loss_brute_force_two_samples():
    # independent scalar recomputation: raw python softmax arithmetic
    params, feat, refs, texts, captions, targets = _tiny_batch(seed=9, b=2)
    total = pretrain_loss(params, feat, refs, texts, captions, targets)

    from cirkit.composer import forward_batch

    def ce_pair(sim, tau):
        # symmetric InfoNCE for B=2, from scratch
        a = [[sim[0][0] / tau, sim[0][1] / tau], [sim[1][0] / tau, sim[1][1] / tau]]
        row = -sum(
            math.log(math.exp(a[i][i]) / (math.exp(a[i][0]) + math.exp(a[i][1])))
            for i in range(2)
        ) / 2.0
        col = -sum(
            math.log(math.exp(a[j][j]) / (math.exp(a[0][j]) + math.exp(a[1][j])))
            for j in range(2)
        ) / 2.0
        return (row + col) / 2.0

    b = len(texts)
    expected = 0.0
    for refs_b, texts_b in ((refs, [None] * b), (None, captions), (refs, texts)):
        q, _ = forward_batch(params, feat, refs_b, texts_b)
        sim = [[float(q[i] @ targets[j]) for j in range(2)] for i in range(2)]
        expected += ce_pair(sim, params.tau) / 3.0
    assert total == pytest.approx(expected, abs=1e-10)


def test_loss_nonnegative():
    for seed in range(5):
        params, feat, refs, texts, captions, targets = _tiny_batch(seed=seed)
        assert pretrain_loss(params, feat, refs, texts, captions, targets) >= 0.0
        assert triplet_loss(params, feat, refs, texts, targets) >= 0.0


def test_identical_batch_is_stationary():
    # every sample identical: softmax rows are uniform and all gradients
    # cancel by symmetry
    rng = np.random.default_rng(3)
    params = init_params(4, 8, 4, 16, seed=3)
    feat = TextFeaturizer(16)
    ref = random_unit(rng, 4).astype(np.float64)
    target = random_unit(rng, 4).astype(np.float64)
    refs = np.stack([ref] * 3)
    targets = np.stack([target] * 3)
    texts = ["same text"] * 3
    captions = ["same caption"] * 3
    _, grads = loss_gradients(params, feat, refs, texts, captions, targets, "pretrain")
    assert np.linalg.norm(params_to_vector(grads)) < 1e-8


def test_gradients_match_finite_differences_pretrain():
    params, feat, refs, texts, captions, targets = _tiny_batch(seed=21)
    _, grads = loss_gradients(params, feat, refs, texts, captions, targets, "pretrain")
    numeric = finite_difference_grads(
        params, lambda p: pretrain_loss(p, feat, refs, texts, captions, targets)
    )
    rel = gradient_relative_errors(params_to_vector(grads), numeric)
    assert rel.max() < 1e-4


def test_gradients_match_finite_differences_triplet():
    params, feat, refs, texts, captions, targets = _tiny_batch(seed=22)
    _, grads = loss_gradients(params, feat, refs, texts, None, targets, "triplet")
    numeric = finite_difference_grads(
        params, lambda p: triplet_loss(p, feat, refs, texts, targets)
    )
    rel = gradient_relative_errors(params_to_vector(grads), numeric)
    assert rel.max() < 1e-4


def test_tau_gradient_matches_finite_differences():
    params, feat, refs, texts, captions, targets = _tiny_batch(seed=23)
    _, grads = loss_gradients(params, feat, refs, texts, captions, targets, "pretrain")

    def loss_at_tau(tau):
        p = params.copy()
        p.tau = tau
        return pretrain_loss(p, feat, refs, texts, captions, targets)

    h = 1e-4
    numeric = (loss_at_tau(params.tau + h) - loss_at_tau(params.tau - h)) / (2 * h)
    denom = max(abs(grads.tau), abs(numeric), 1e-3)
    assert abs(grads.tau - numeric) / denom < 1e-4


def test_gradcheck_suite_many_configs():
    ok, lines = run_gradcheck(configs=8, seed=5)
    assert ok, lines


def test_random_gradcheck_config_shapes():
    rng = np.random.default_rng(7)
    params, feat, refs, texts, captions, targets = random_gradcheck_config(rng)
    assert refs.shape[0] == targets.shape[0] == len(texts) == len(captions)
    assert refs.shape[1] == params.d_img
    assert targets.shape[1] == params.d_out
