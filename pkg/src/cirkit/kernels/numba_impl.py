"""Compiled (numba) backend for the hot kernels. Mirrors numpy_impl."""

import numpy as np
from numba import njit


@njit(cache=True)
def slerp_rows(a, b, alpha, lerp_eps=1e-6):
    n, d = a.shape
    out = np.empty((n, d))
    theta = np.empty(n)
    for i in range(n):
        dot = 0.0
        for k in range(d):
            dot += a[i, k] * b[i, k]
        if dot > 1.0:
            dot = 1.0
        elif dot < -1.0:
            dot = -1.0
        th = np.arccos(dot)
        theta[i] = th
        if th < lerp_eps:
            nrm = 0.0
            for k in range(d):
                v = alpha * a[i, k] + (1.0 - alpha) * b[i, k]
                out[i, k] = v
                nrm += v * v
            nrm = np.sqrt(nrm)
            for k in range(d):
                out[i, k] /= nrm
        else:
            sin_th = np.sin(th)
            wa = np.sin(alpha * th) / sin_th
            wb = np.sin((1.0 - alpha) * th) / sin_th
            for k in range(d):
                out[i, k] = wa * a[i, k] + wb * b[i, k]
    return out, theta


@njit(cache=True)
def nearest_neighbor_indices(emb):
    n, d = emb.shape
    result = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = -np.inf
        best_j = -1
        for j in range(n):
            if j == i:
                continue
            dot = 0.0
            for k in range(d):
                dot += emb[i, k] * emb[j, k]
            if dot > best:
                best = dot
                best_j = j
        result[i] = best_j
    return result


@njit(cache=True)
def greedy_spaced_select(sims, low, high, interval, max_pick):
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
