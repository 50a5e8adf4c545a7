"""Unit-vector primitives: normalization, cosine similarity, spherical interpolation.

Embeddings are stored as float32 arrays; every similarity comparison runs in
float64 internally. All functions are pure.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import AntipodalVectors, DataError, DimMismatch, ZeroVector

ZERO_NORM_EPS = 1e-12
UNIT_NORM_TOL = 1e-6
# A freshly normalized float32 vector has norm within a few ulps of 1; snapping
# below this threshold makes normalize bitwise idempotent.
SNAP_EPS = 1e-7
LERP_EPS = 1e-6
ANTIPODAL_EPS = 1e-6


def as_embedding(v) -> np.ndarray:
    """Coerce to a float32 vector, checking finiteness and dim >= 2."""
    arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise DataError(f"expected a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DataError(f"embedding dim must be >= 2, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("embedding has non-finite components")
    return arr


def _as_vector64(v) -> np.ndarray:
    """Validate like as_embedding but keep float64 precision."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"expected a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DataError(f"embedding dim must be >= 2, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("embedding has non-finite components")
    return arr


def norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def is_unit(v, tol: float = UNIT_NORM_TOL) -> bool:
    return abs(norm(v) - 1.0) <= tol


def normalize(v) -> np.ndarray:
    """Scale v to unit L2 norm.

    Raises ZeroVector when the norm is at or below 1e-12. Vectors already
    within a few float32 ulps of unit norm are returned unchanged, which
    makes repeated normalization bitwise stable.
    """
    arr = as_embedding(v)
    n = float(np.linalg.norm(arr.astype(np.float64)))
    if n <= ZERO_NORM_EPS:
        raise ZeroVector(f"cannot normalize vector with norm {n:.3e}")
    if abs(n - 1.0) <= SNAP_EPS:
        return arr
    return (arr.astype(np.float64) / n).astype(np.float32)


def cosine_sim(u, v) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dims differ: {a.shape} vs {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


def slerp(a, b, alpha: float) -> np.ndarray:
    """Interpolate between unit vectors a and b along the great circle.

    alpha=1 returns a, alpha=0 returns b; intermediate values trace the arc,
    with larger alpha landing closer to a. Nearly parallel inputs fall back
    to linear interpolation plus renormalization; nearly antipodal inputs
    raise AntipodalVectors since the arc is ambiguous.

    Returns float64: the angle law arccos(out . a) = (1-alpha)*theta is
    ill-conditioned near the endpoints, so rounding to the float32 storage
    format is left to the caller.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must be in [0, 1], got {alpha}")
    ua = _as_vector64(a)
    ub = _as_vector64(b)
    if ua.shape != ub.shape:
        raise DimMismatch(f"dims differ: {ua.shape} vs {ub.shape}")
    theta = np.arccos(np.clip(ua @ ub, -1.0, 1.0))
    if theta >= np.pi - ANTIPODAL_EPS:
        raise AntipodalVectors(f"angle {theta:.6f} is too close to pi")
    if theta < LERP_EPS:
        mix = alpha * ua + (1.0 - alpha) * ub
        return mix / np.linalg.norm(mix)
    sin_theta = np.sin(theta)
    return (np.sin(alpha * theta) / sin_theta) * ua + (
        np.sin((1.0 - alpha) * theta) / sin_theta
    ) * ub


def slerp_batch(a_rows: np.ndarray, b_rows: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise slerp over two matrices of unit rows (kernel-backed, float64)."""
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must be in [0, 1], got {alpha}")
    a64 = np.ascontiguousarray(a_rows, dtype=np.float64)
    b64 = np.ascontiguousarray(b_rows, dtype=np.float64)
    if a64.shape != b64.shape:
        raise DimMismatch(f"shapes differ: {a64.shape} vs {b64.shape}")
    out, theta = kernels.slerp_rows(a64, b64, float(alpha), LERP_EPS)
    bad = np.nonzero(theta >= np.pi - ANTIPODAL_EPS)[0]
    if bad.size:
        raise AntipodalVectors(f"rows {bad[:8].tolist()} are (nearly) antipodal")
    return out
