"""Pure-numpy backend for the hot kernels.

Same signatures and semantics as the numba backend. greedy_spaced_select is
an interpreter-level loop here on purpose: the selection is sequential and
cannot be vectorized, which is exactly why the compiled backend exists.
"""

import numpy as np


def slerp_rows(a, b, alpha, lerp_eps=1e-6):
    """Row-wise great-circle interpolation between unit-row matrices a and b.

    alpha=1 returns a's rows, alpha=0 returns b's rows. Rows whose angle is
    below lerp_eps use linear interpolation plus renormalization. Returns
    (out, theta); antipodal handling is the caller's job (via theta).
    """
    dots = np.einsum("ij,ij->i", a, b)
    np.clip(dots, -1.0, 1.0, out=dots)
    theta = np.arccos(dots)
    out = np.empty_like(a)
    safe = theta >= lerp_eps
    if np.any(safe):
        th = theta[safe]
        sin_th = np.sin(th)
        wa = np.sin(alpha * th) / sin_th
        wb = np.sin((1.0 - alpha) * th) / sin_th
        out[safe] = wa[:, None] * a[safe] + wb[:, None] * b[safe]
    if not np.all(safe):
        near = ~safe
        mix = alpha * a[near] + (1.0 - alpha) * b[near]
        norms = np.sqrt(np.einsum("ij,ij->i", mix, mix))
        out[near] = mix / norms[:, None]
    return out, theta


def nearest_neighbor_indices(emb):
    """For each row, the index of the most cosine-similar other row.

    Ties resolve to the smallest index. emb rows are assumed unit-norm, so
    the dot product is the cosine similarity.
    """
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    return np.argmax(sims, axis=1).astype(np.int64)


def greedy_spaced_select(sims, low, high, interval, max_pick):
    """Greedily pick positions from a descending similarity array.

    A position is accepted iff its value lies in [low, high] and differs by
    at least `interval` from every previously accepted value. Stops after
    max_pick acceptances. Returns accepted positions in scan order.
    """
    chosen = np.empty(max_pick, dtype=np.int64)
    count = 0
    for pos in range(sims.shape[0]):
        s = sims[pos]
        if s < low or s > high:
            continue
        ok = True
        for m in range(count):
            if abs(s - sims[chosen[m]]) < interval:
                ok = False
                break
        if ok:
            chosen[count] = pos
            count += 1
            if count == max_pick:
                break
    return chosen[:count].copy()
