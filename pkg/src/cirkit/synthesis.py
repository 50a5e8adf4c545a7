"""On-the-fly synthesis of retrieval training triplets from caption-embedding pairs.

Each item becomes a target; its reference embedding is interpolated between
the item's noise-augmented embedding and that of its in-batch nearest
neighbor, and its modification text is either a filled template contrasting
the two captions or the plain caption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .embedding import as_embedding, normalize, slerp_batch
from .errors import BatchTooSmall, DataError, UnknownTemplate

# Slot {new} takes the target's caption, {old} the neighbor's.
MOD_TEXT_TEMPLATES = {
    1: "show {new} instead of {old}",
    2: "{new} instead of {old}",
    3: "show {new} rather than {old}",
    4: "{new} rather than {old}",
    5: "rather than {old}, show {new}",
    6: "rather than {old}, {new}",
    7: "instead of {old}, {new}",
    8: "{old}, changed to {new}",
    9: "not {old}, but {new}",
    10: "show {new}, not {old}",
    11: "{old} is missing, {new}",
    12: "{new}, and {old} is missing",
    13: "remove {old}, add {new}",
    14: "add {new}, remove {old}",
    15: "{old} become {new}",
}

NEIGHBOR_STRATEGIES = ("nearest", "random")


@dataclass(frozen=True)
class CaptionedItem:
    """A precomputed unit embedding plus its caption."""

    id: str
    caption: str
    embedding: np.ndarray

    def __post_init__(self):
        if not self.id:
            raise DataError("item id must be non-empty")
        if not self.caption:
            raise DataError(f"item {self.id!r}: caption must be non-empty")
        object.__setattr__(self, "embedding", as_embedding(self.embedding))


@dataclass
class SynthConfig:
    """Knobs for triplet synthesis; defaults follow the tuned optimum
    (interpolation midpoint, texts synthesized for 75% of samples)."""

    alpha: float = 0.5
    text_synthesis_ratio: float = 0.75
    noise_sigma: float = 0.05
    template_ids: tuple = tuple(range(1, 16))
    seed: int = 0
    # "random" swaps the nearest in-batch neighbor for a uniform draw; kept
    # for the ablation harness, default preserves the main behavior.
    neighbor_strategy: str = "nearest"

    def validate(self) -> "SynthConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.text_synthesis_ratio <= 1.0:
            raise DataError(
                f"text_synthesis_ratio must be in [0, 1], got {self.text_synthesis_ratio}"
            )
        if self.noise_sigma < 0:
            raise DataError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        ids = tuple(self.template_ids)
        if not ids or not set(ids) <= set(MOD_TEXT_TEMPLATES):
            raise DataError(f"template_ids must be a non-empty subset of 1..15, got {ids}")
        if self.neighbor_strategy not in NEIGHBOR_STRATEGIES:
            raise DataError(f"unknown neighbor_strategy {self.neighbor_strategy!r}")
        return self


@dataclass(frozen=True)
class SynthesizedTriplet:
    reference_embedding: np.ndarray
    modification_text: str
    target_id: str
    neighbor_id: str
    template_id: int | None
    text_was_synthesized: bool

    def __post_init__(self):
        if self.target_id == self.neighbor_id:
            raise DataError(f"target and neighbor coincide: {self.target_id!r}")
        if self.text_was_synthesized != (self.template_id is not None):
            raise DataError("template_id must be present iff text was synthesized")


def augment_embedding(e, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb a unit embedding with isotropic Gaussian noise and renormalize.

    sigma=0 returns the input untouched. This is the embedding-space stand-in
    for an image augmentation: it decorrelates the synthesized reference from
    the target without a pixel pipeline.
    """
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return e
    e64 = as_embedding(e).astype(np.float64)
    noise = rng.normal(0.0, sigma, size=e64.shape[0])
    return normalize(e64 + noise)


def augment_batch(matrix: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise augment_embedding; consumes one batched draw from rng."""
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return matrix
    m64 = matrix.astype(np.float64) + rng.normal(0.0, sigma, size=matrix.shape)
    norms = np.linalg.norm(m64, axis=1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise DataError("augmentation produced a zero vector")
    return (m64 / norms).astype(np.float32)


def nearest_in_batch(batch, i: int) -> int:
    """Index of the most cosine-similar other element; ties take the smallest index."""
    mat = np.asarray(batch, dtype=np.float64)
    n = mat.shape[0]
    if n < 2:
        raise BatchTooSmall(f"need at least 2 embeddings, got {n}")
    if not 0 <= i < n:
        raise DataError(f"index {i} out of range for batch of {n}")
    sims = mat @ mat[i]
    sims[i] = -np.inf
    return int(np.argmax(sims))


def synthesize_mod_text(target_caption: str, neighbor_caption: str, template_id: int) -> str:
    """Fill one of the fifteen contrast templates verbatim."""
    template = MOD_TEXT_TEMPLATES.get(template_id)
    if template is None:
        raise UnknownTemplate(f"template id {template_id} not in 1..15")
    return template.format(new=target_caption, old=neighbor_caption)


def synthesize_batch(items, cfg: SynthConfig, rng: np.random.Generator | None = None):
    """Synthesize one triplet per item.

    Pipeline per batch: augment all embeddings (one batched draw), pick each
    item's neighbor, interpolate reference embeddings, then walk items in
    order drawing a text-synthesis coin and, when it lands, a template. The
    draw order is fixed, so output is fully deterministic given cfg.seed.
    """
    cfg = cfg.validate()
    n = len(items)
    if n < 2:
        raise BatchTooSmall(f"need at least 2 items, got {n}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    emb = np.stack([item.embedding for item in items])
    aug = augment_batch(emb, cfg.noise_sigma, rng)

    if cfg.neighbor_strategy == "nearest":
        neighbors = kernels.nearest_neighbor_indices(
            np.ascontiguousarray(aug, dtype=np.float64)
        )
    else:
        draws = rng.integers(0, n - 1, size=n)
        neighbors = np.where(draws < np.arange(n), draws, draws + 1)

    refs = slerp_batch(aug, aug[neighbors], cfg.alpha).astype(np.float32)

    template_ids = tuple(cfg.template_ids)
    triplets = []
    for i, item in enumerate(items):
        j = int(neighbors[i])
        if rng.random() < cfg.text_synthesis_ratio:
            tid = int(template_ids[rng.integers(0, len(template_ids))])
            text = synthesize_mod_text(item.caption, items[j].caption, tid)
            synthesized = True
        else:
            tid = None
            text = item.caption
            synthesized = False
        triplets.append(
            SynthesizedTriplet(
                reference_embedding=refs[i],
                modification_text=text,
                target_id=item.id,
                neighbor_id=items[j].id,
                template_id=tid,
                text_was_synthesized=synthesized,
            )
        )
    return triplets


def triplet_to_row(t: SynthesizedTriplet) -> dict:
    return {
        "reference": [float(x) for x in t.reference_embedding],
        "text": t.modification_text,
        "target_id": t.target_id,
        "neighbor_id": t.neighbor_id,
        "template_id": t.template_id,
        "synthesized": t.text_was_synthesized,
    }


def triplet_from_row(row: dict) -> SynthesizedTriplet:
    try:
        return SynthesizedTriplet(
            reference_embedding=as_embedding(row["reference"]),
            modification_text=row["text"],
            target_id=row["target_id"],
            neighbor_id=row["neighbor_id"],
            template_id=row["template_id"],
            text_was_synthesized=row["synthesized"],
        )
    except KeyError as exc:
        raise DataError(f"triplet row missing key {exc}") from exc
