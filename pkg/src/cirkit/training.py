"""Contrastive objectives, hand-derived gradients, and the Adam training loop.

The pretraining objective averages three query-to-target contrastive terms
(image-only, text-only, composed); the triplet objective keeps only the
composed term. Gradients are exact analytic expressions checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .composer import (
    ComposerParams,
    TextFeaturizer,
    backward_batch,
    forward_batch,
    init_params,
    zero_like_params,
)
from .errors import BatchTooSmall, DataError, DimMismatch, EmptyDataset
from .synthesis import SynthConfig, synthesize_batch


def _check_unit_rows(mat, tol=1e-4, what="matrix"):
    norms = np.linalg.norm(mat, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DataError(f"{what} rows must be unit norm (worst |n-1| = "
                        f"{np.max(np.abs(norms - 1.0)):.2e})")


def contrastive_loss(queries, targets, tau: float) -> float:
    """Symmetric InfoNCE with matched pairs on the diagonal."""
    loss, _, _ = _contrastive_loss_grads(
        np.asarray(queries, dtype=np.float64),
        np.asarray(targets, dtype=np.float64),
        tau,
    )
    return loss


def _contrastive_loss_grads(q, z, tau):
    """Returns (loss, dL/dq, dL/dtau)."""
    if q.shape != z.shape:
        raise DimMismatch(f"queries {q.shape} vs targets {z.shape}")
    b = q.shape[0]
    if b < 2:
        raise BatchTooSmall(f"contrastive loss needs a batch of >= 2, got {b}")
    _check_unit_rows(q, what="query")
    _check_unit_rows(z, what="target")

    s = q @ z.T
    a = s / tau
    # rows: queries against all targets; cols: targets against all queries
    a_row = a - a.max(axis=1, keepdims=True)
    lse_row = np.log(np.exp(a_row).sum(axis=1)) + a.max(axis=1)
    a_col = a - a.max(axis=0, keepdims=True)
    lse_col = np.log(np.exp(a_col).sum(axis=0)) + a.max(axis=0)
    diag = np.diag(a)
    loss = 0.5 * (np.mean(lse_row - diag) + np.mean(lse_col - diag))

    p_row = np.exp(a - lse_row[:, None])
    p_col = np.exp(a - lse_col[None, :])
    eye = np.eye(b)
    m = 0.5 * ((p_row - eye) + (p_col - eye)) / b  # dL/da
    dq = (m / tau) @ z
    dtau = -float(np.sum(m * s)) / (tau * tau)
    return float(loss), dq, dtau


def _forward_queries(params, featurizer, refs, mod_texts, captions, mode):
    """Forward passes for each active query branch.

    Yields (weight, queries, cache) triples: pretrain runs image-only,
    text-only (caption), and composed branches at weight 1/3 each; triplet
    runs the composed branch alone.
    """
    b = len(mod_texts)
    branches = []
    if mode == "pretrain":
        w = 1.0 / 3.0
        branches.append((w, forward_batch(params, featurizer, refs, [None] * b)))
        branches.append((w, forward_batch(params, featurizer, None, list(captions))))
        branches.append((w, forward_batch(params, featurizer, refs, list(mod_texts))))
    elif mode == "triplet":
        branches.append((1.0, forward_batch(params, featurizer, refs, list(mod_texts))))
    else:
        raise DataError(f"unknown mode {mode!r}")
    return [(w, q, cache) for w, (q, cache) in branches]


def pretrain_loss(params, featurizer, refs, mod_texts, captions, targets) -> float:
    """Mean of the three contrastive terms against the target embeddings."""
    z = np.asarray(targets, dtype=np.float64)
    total = 0.0
    for w, q, _ in _forward_queries(params, featurizer, refs, mod_texts, captions, "pretrain"):
        loss, _, _ = _contrastive_loss_grads(q, z, params.tau)
        total += w * loss
    return total


def triplet_loss(params, featurizer, refs, mod_texts, targets) -> float:
    """Contrastive loss of composed queries against target embeddings."""
    z = np.asarray(targets, dtype=np.float64)
    (w, q, _), = _forward_queries(params, featurizer, refs, mod_texts, None, "triplet")
    loss, _, _ = _contrastive_loss_grads(q, z, params.tau)
    return w * loss


def loss_gradients(params, featurizer, refs, mod_texts, captions, targets, mode):
    """Exact gradients of the selected objective. Returns (loss, grads)."""
    z = np.asarray(targets, dtype=np.float64)
    grads = zero_like_params(params)
    total = 0.0
    for w, q, cache in _forward_queries(params, featurizer, refs, mod_texts, captions, mode):
        loss, dq, dtau = _contrastive_loss_grads(q, z, params.tau)
        total += w * loss
        branch = backward_batch(params, cache, w * dq)
        for name, arr in grads.array_items():
            arr += getattr(branch, name)
        grads.tau += w * dtau
    return total, grads


@dataclass
class AdamState:
    m: ComposerParams
    v: ComposerParams
    t: int = 0

    @classmethod
    def for_params(cls, params: ComposerParams) -> "AdamState":
        return cls(m=zero_like_params(params), v=zero_like_params(params))


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update; the temperature is clamped afterwards."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, arr in params.array_items():
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    state.m.tau = beta1 * state.m.tau + (1.0 - beta1) * grads.tau
    state.v.tau = beta2 * state.v.tau + (1.0 - beta2) * grads.tau * grads.tau
    params.tau -= lr * (state.m.tau / bc1) / (np.sqrt(state.v.tau / bc2) + eps)
    params.clamp_tau()


@dataclass
class ModelConfig:
    d_img: int = 16
    d_h: int = 32
    d_out: int = 16
    vocab_buckets: int = 4096
    tau: float = 0.07


@dataclass
class TrainConfig:
    """Desk-scale defaults; large-scale contrastive runs typically use a
    smaller rate (1e-4) with batches of 1024 or more."""

    learning_rate: float = 1e-3
    batch_size: int = 64
    steps: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> "TrainConfig":
        if self.batch_size < 2:
            raise DataError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.steps < 0:
            raise DataError(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")
        return self


@dataclass
class TrainResult:
    params: ComposerParams
    losses: list


def train_on_items(items, model: ModelConfig, cfg: TrainConfig) -> TrainResult:
    """Pretraining loop: each step synthesizes triplets from a sampled batch
    of caption-embedding items, then applies one Adam update."""
    cfg = cfg.validate()
    if not items:
        raise EmptyDataset("no items to train on")
    if len(items) < 2:
        raise BatchTooSmall("training needs at least 2 items")

    params = init_params(
        model.d_img, model.d_h, model.d_out, model.vocab_buckets,
        tau=model.tau, seed=cfg.seed,
    )
    featurizer = TextFeaturizer(model.vocab_buckets)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(items)
    losses = []
    for _ in range(cfg.steps):
        take = min(cfg.batch_size, n)
        idx = rng.permutation(n)[:take]
        batch = [items[i] for i in idx]
        trips = synthesize_batch(batch, cfg.synth, rng=rng)
        refs = np.stack([t.reference_embedding for t in trips]).astype(np.float64)
        mod_texts = [t.modification_text for t in trips]
        captions = [item.caption for item in batch]
        targets = np.stack([item.embedding for item in batch]).astype(np.float64)
        loss, grads = loss_gradients(
            params, featurizer, refs, mod_texts, captions, targets, "pretrain"
        )
        adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        losses.append(loss)
    return TrainResult(params=params, losses=losses)


def train_on_triplets(triplets, model: ModelConfig, cfg: TrainConfig) -> TrainResult:
    """Fine-tuning loop over fixed (reference, text, target) triplets."""
    cfg = cfg.validate()
    if not triplets:
        raise EmptyDataset("no triplets to train on")
    if len(triplets) < 2:
        raise BatchTooSmall("training needs at least 2 triplets")

    params = init_params(
        model.d_img, model.d_h, model.d_out, model.vocab_buckets,
        tau=model.tau, seed=cfg.seed,
    )
    featurizer = TextFeaturizer(model.vocab_buckets)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(triplets)
    losses = []
    for _ in range(cfg.steps):
        take = min(cfg.batch_size, n)
        idx = rng.permutation(n)[:take]
        refs = np.stack([np.asarray(triplets[i][0], dtype=np.float64) for i in idx])
        mod_texts = [triplets[i][1] for i in idx]
        targets = np.stack([np.asarray(triplets[i][2], dtype=np.float64) for i in idx])
        loss, grads = loss_gradients(
            params, featurizer, refs, mod_texts, None, targets, "triplet"
        )
        adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        losses.append(loss)
    return TrainResult(params=params, losses=losses)
