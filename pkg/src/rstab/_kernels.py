"""Compiled O(n^2) dynamic programs for p-variation type seminorms.

All kernels work on index ranges [s, e] of a common grid and return the
profile V[k] = sup over partitions of [s, s+k] of sum d(t_j, t_{j+1})^exp.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _path_dist2(x, j, k):
    d = 0.0
    for c in range(x.shape[1]):
        diff = x[k, c] - x[j, c]
        d += diff * diff
    return d


@njit(cache=True)
def _area_dist2(x, A, j, k):
    # || A_k - A_j - x_{0,j} (x) x_{j,k} ||_F^2
    d = 0.0
    m = x.shape[1]
    for a in range(m):
        xa = x[j, a] - x[0, a]
        for b in range(m):
            v = A[k, a, b] - A[j, a, b] - xa * (x[k, b] - x[j, b])
            d += v * v
    return d


@njit(cache=True)
def _rem_dist2(y, G, x, j, k):
    # || y_k - y_j - G_j (x_k - x_j) ||^2
    d = 0.0
    for i in range(y.shape[1]):
        v = y[k, i] - y[j, i]
        for a in range(x.shape[1]):
            v -= G[j, i, a] * (x[k, a] - x[j, a])
        d += v * v
    return d


@njit(cache=True)
def pvar_profile_path(x, s, e, p):
    L = e - s + 1
    V = np.zeros(L)
    half = p / 2.0
    for k in range(1, L):
        best = 0.0
        for j in range(k):
            v = V[j] + _path_dist2(x, s + j, s + k) ** half
            if v > best:
                best = v
        V[k] = best
    return V


@njit(cache=True)
def pvar_profile_area(x, A, s, e, q):
    L = e - s + 1
    V = np.zeros(L)
    half = q / 2.0
    for k in range(1, L):
        best = 0.0
        for j in range(k):
            v = V[j] + _area_dist2(x, A, s + j, s + k) ** half
            if v > best:
                best = v
        V[k] = best
    return V


@njit(cache=True)
def pvar_profile_remainder(y, G, x, s, e, q):
    L = e - s + 1
    V = np.zeros(L)
    half = q / 2.0
    for k in range(1, L):
        best = 0.0
        for j in range(k):
            v = V[j] + _rem_dist2(y, G, x, s + j, s + k) ** half
            if v > best:
                best = v
        V[k] = best
    return V


@njit(cache=True)
def pvar_profile_matrix(D, exponent):
    # generic version on a precomputed distance matrix D[j, k], j < k
    L = D.shape[0]
    V = np.zeros(L)
    for k in range(1, L):
        best = 0.0
        for j in range(k):
            v = V[j] + D[j, k] ** exponent
            if v > best:
                best = v
        V[k] = best
    return V


@njit(cache=True)
def greedy_rough(x, A, p, gamma, s, e, include_area, pre_crossing=False):
    """Indices of greedy stopping times for the rough-path seminorm.

    With pre_crossing the instant before each crossing is kept instead, so
    every window except single-step ones has norm < gamma.
    """
    thr = gamma ** p
    hp = p / 2.0
    hq = p / 4.0
    out = np.empty(e - s + 2, dtype=np.int64)
    out[0] = s
    n_out = 1
    cur = s
    Vp = np.zeros(e - s + 1)
    Va = np.zeros(e - s + 1)
    while cur < e:
        Vp[0] = 0.0
        Va[0] = 0.0
        hit = e
        k = 1
        while cur + k <= e:
            bp = 0.0
            ba = 0.0
            for j in range(k):
                v = Vp[j] + _path_dist2(x, cur + j, cur + k) ** hp
                if v > bp:
                    bp = v
                if include_area:
                    w = Va[j] + _area_dist2(x, A, cur + j, cur + k) ** hq
                    if w > ba:
                        ba = w
            Vp[k] = bp
            Va[k] = ba
            if bp + ba >= thr:
                hit = cur + k
                if pre_crossing and k > 1:
                    hit -= 1
                break
            k += 1
        out[n_out] = hit
        n_out += 1
        cur = hit
    return out[:n_out]
