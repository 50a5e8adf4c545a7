"""The query-composition model.

A small fully-differentiable stack: an image adapter (dense layer), a fusion
network (2-layer tanh MLP over adapter output, hashed text features, and two
modality-presence flags), and a projection to the retrieval space. Queries
can carry an image embedding, a text, or both; missing modalities enter as
zero vectors with their presence flag cleared.

Parameters are float64 in memory so gradients can be checked against finite
differences; checkpoints store weights as little-endian float32 like every
other embedding file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyQuery

TAU_MIN = 0.01
TAU_MAX = 1.0
DEFAULT_TAU = 0.07
DEFAULT_VOCAB_BUCKETS = 4096

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

INSTRUCTION_HEADER = "Instruct: Find the image that matches the query."


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64_MASK
    return h


class TextFeaturizer:
    """Hashed bag-of-tokens text features.

    Tokens are maximal alphanumeric runs of the lowercased text; each token
    is FNV-1a-64 hashed into one of vocab_buckets counts, and the count
    vector is L2-normalized. Empty text maps to the zero vector.
    """

    def __init__(self, vocab_buckets: int = DEFAULT_VOCAB_BUCKETS):
        if vocab_buckets < 1:
            raise DataError(f"vocab_buckets must be >= 1, got {vocab_buckets}")
        self.vocab_buckets = vocab_buckets
        self._cache: dict[str, np.ndarray] = {}

    def featurize(self, text: str) -> np.ndarray:
        """Feature vector for text; cached, so treat the result as read-only."""
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        counts = np.zeros(self.vocab_buckets, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            counts[_fnv1a64(token.encode("utf-8")) % self.vocab_buckets] += 1.0
        total = np.linalg.norm(counts)
        if total > 0:
            counts /= total
        if len(self._cache) < 65536:
            self._cache[text] = counts
        return counts


def assemble_instruction(has_image: bool, text: str | None) -> str:
    """Build the retrieval instruction; a missing modality's line is dropped."""
    if not has_image and text is None:
        raise EmptyQuery("query needs an image, a text, or both")
    lines = [INSTRUCTION_HEADER, "Query:"]
    if has_image:
        lines.append("Image: [IMAGE]")
    if text is not None:
        lines.append(f"Text: {text}")
    return "\n".join(lines)


@dataclass
class ComposerParams:
    """All trainable weights plus the contrastive temperature."""

    w_g: np.ndarray  # (d_img, d_h) image adapter
    b_g: np.ndarray  # (d_h,)
    w_f1: np.ndarray  # (d_h + vocab_buckets + 2, d_h) fusion layer 1
    b_f1: np.ndarray
    w_f2: np.ndarray  # (d_h, d_h) fusion layer 2
    b_f2: np.ndarray
    w_p: np.ndarray  # (d_h, d_out) projection
    b_p: np.ndarray
    tau: float = DEFAULT_TAU

    @property
    def d_img(self) -> int:
        return self.w_g.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_g.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_p.shape[1]

    @property
    def vocab_buckets(self) -> int:
        return self.w_f1.shape[0] - self.d_h - 2

    def copy(self) -> "ComposerParams":
        kwargs = {}
        for f in fields(self):
            value = getattr(self, f.name)
            kwargs[f.name] = value.copy() if isinstance(value, np.ndarray) else value
        return ComposerParams(**kwargs)

    def array_items(self):
        """(name, array) pairs for every weight tensor, in field order."""
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                yield f.name, value

    def clamp_tau(self) -> None:
        self.tau = float(min(max(self.tau, TAU_MIN), TAU_MAX))


def init_params(
    d_img: int,
    d_h: int,
    d_out: int,
    vocab_buckets: int = DEFAULT_VOCAB_BUCKETS,
    tau: float = DEFAULT_TAU,
    seed: int = 0,
) -> ComposerParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)

    def dense(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    fusion_in = d_h + vocab_buckets + 2
    return ComposerParams(
        w_g=dense(d_img, d_h),
        b_g=np.zeros(d_h),
        w_f1=dense(fusion_in, d_h),
        b_f1=np.zeros(d_h),
        w_f2=dense(d_h, d_h),
        b_f2=np.zeros(d_h),
        w_p=dense(d_h, d_out),
        b_p=np.zeros(d_out),
        tau=tau,
    )


def zero_like_params(params: ComposerParams) -> ComposerParams:
    kwargs = {name: np.zeros_like(arr) for name, arr in params.array_items()}
    kwargs["tau"] = 0.0
    return ComposerParams(**kwargs)


def forward_batch(params: ComposerParams, featurizer: TextFeaturizer, refs, texts):
    """Run the composition stack over a batch; returns (queries, cache).

    refs: (B, d_img) float array or None rows allowed via `None` entries in a
    list; texts: list of str or None. Cache holds every intermediate needed
    by the analytic backward pass.
    """
    b = len(texts)
    img_present = np.zeros(b)
    refs0 = np.zeros((b, params.d_img))
    if refs is not None:
        for i, r in enumerate(refs):
            if r is not None:
                refs0[i] = np.asarray(r, dtype=np.float64)
                img_present[i] = 1.0

    txt_present = np.zeros(b)
    feats = np.zeros((b, params.vocab_buckets))
    for i, text in enumerate(texts):
        if text is None:
            if img_present[i] == 0.0:
                raise EmptyQuery(f"sample {i}: query needs an image, a text, or both")
            continue
        txt_present[i] = 1.0
        prompt = assemble_instruction(bool(img_present[i]), text)
        feats[i] = featurizer.featurize(prompt)

    adapter = (refs0 @ params.w_g + params.b_g) * img_present[:, None]
    x = np.concatenate(
        [adapter, feats, img_present[:, None], txt_present[:, None]], axis=1
    )
    u1 = x @ params.w_f1 + params.b_f1
    h1 = np.tanh(u1)
    u2 = h1 @ params.w_f2 + params.b_f2
    h2 = np.tanh(u2)
    y = h2 @ params.w_p + params.b_p
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    if np.any(norms <= 1e-30):
        raise DataError("composed embedding collapsed to zero")
    q = y / norms

    cache = {
        "refs0": refs0,
        "img_present": img_present,
        "x": x,
        "h1": h1,
        "h2": h2,
        "norms": norms,
        "q": q,
    }
    return q, cache


def backward_batch(params: ComposerParams, cache, dq) -> ComposerParams:
    """Gradients of every weight given dL/d(queries); tau is left at 0."""
    q, norms = cache["q"], cache["norms"]
    dy = (dq - q * np.sum(dq * q, axis=1, keepdims=True)) / norms

    grads = zero_like_params(params)
    grads.w_p = cache["h2"].T @ dy
    grads.b_p = dy.sum(axis=0)
    dh2 = dy @ params.w_p.T

    du2 = dh2 * (1.0 - cache["h2"] ** 2)
    grads.w_f2 = cache["h1"].T @ du2
    grads.b_f2 = du2.sum(axis=0)
    dh1 = du2 @ params.w_f2.T

    du1 = dh1 * (1.0 - cache["h1"] ** 2)
    grads.w_f1 = cache["x"].T @ du1
    grads.b_f1 = du1.sum(axis=0)
    dx = du1 @ params.w_f1.T

    d_adapter = dx[:, : params.d_h] * cache["img_present"][:, None]
    grads.w_g = cache["refs0"].T @ d_adapter
    grads.b_g = d_adapter.sum(axis=0)
    return grads


def compose(
    params: ComposerParams,
    ref,
    mod_text: str | None,
    featurizer: TextFeaturizer | None = None,
) -> np.ndarray:
    """Compose a single query embedding (unit norm, float32)."""
    if ref is None and mod_text is None:
        raise EmptyQuery("query needs an image, a text, or both")
    if featurizer is None:
        featurizer = TextFeaturizer(params.vocab_buckets)
    refs = [None if ref is None else np.asarray(ref, dtype=np.float64)]
    q, _ = forward_batch(params, featurizer, refs, [mod_text])
    return q[0].astype(np.float32)


def save_checkpoint(path, params: ComposerParams, seed: int = 0, step: int = 0) -> None:
    """JSON manifest next to a little-endian float32 weight blob."""
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    tensors = []
    offset = 0
    chunks = []
    for name, arr in params.array_items():
        data = arr.astype("<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += len(data)
        chunks.append(data)
    manifest = {
        "dims": {
            "d_img": params.d_img,
            "d_h": params.d_h,
            "d_out": params.d_out,
            "vocab_buckets": params.vocab_buckets,
        },
        "tau": params.tau,
        "seed": seed,
        "step": step,
        "blob": blob_path.name,
        "tensors": tensors,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    with open(blob_path, "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(path):
    """Returns (params, manifest). Weights come back as float64."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read checkpoint manifest ({exc})") from exc
    try:
        blob_path = path.parent / manifest["blob"]
        blob = blob_path.read_bytes()
        kwargs = {}
        for spec in manifest["tensors"]:
            shape = tuple(spec["shape"])
            size = int(np.prod(shape)) * 4
            start = spec["offset"]
            arr = np.frombuffer(blob[start : start + size], dtype="<f4")
            kwargs[spec["name"]] = arr.reshape(shape).astype(np.float64)
        kwargs["tau"] = float(manifest["tau"])
        params = ComposerParams(**kwargs)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed checkpoint ({exc})") from exc
    return params, manifest
