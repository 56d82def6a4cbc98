"""Pure-Python / numpy DTW, used when the compiled kernel is unavailable."""

from collections import defaultdict

import numpy as np


def dtw_distance(a, b):
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    inf = float("inf")
    m = len(b)
    prev = [0.0] + [inf] * m
    for ai in a:
        cur = [inf] * (m + 1)
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev = cur
    return prev[m]


def _batch_dtw(A, B):
    """DTW for every (row of A, row of B) pair; A is (p, n), B is (q, m)."""
    p, n = A.shape
    q, m = B.shape
    prev = np.full((m + 1, p, q), np.inf)
    prev[0] = 0.0
    for i in range(n):
        cur = np.empty_like(prev)
        cur[0] = np.inf
        cost = np.abs(A[:, i][None, :, None] - B.T[:, None, :])  # (m, p, q)
        for j in range(1, m + 1):
            cur[j] = cost[j - 1] + np.minimum(np.minimum(prev[j - 1], prev[j]), cur[j - 1])
        prev = cur
    return prev[m]


def dtw_matrix_flat(va, oa, vb, ob, symmetric=False):
    va = np.asarray(va, dtype=np.float64)
    vb = np.asarray(vb, dtype=np.float64)
    na, nb = len(oa) - 1, len(ob) - 1
    out = np.zeros((na, nb))
    # vectorize across all pairs that share a (len_a, len_b) shape
    groups_a, groups_b = defaultdict(list), defaultdict(list)
    for i in range(na):
        groups_a[oa[i + 1] - oa[i]].append(i)
    for j in range(nb):
        groups_b[ob[j + 1] - ob[j]].append(j)
    for la, ia in groups_a.items():
        A = np.stack([va[oa[i]:oa[i + 1]] for i in ia])
        for lb, jb in groups_b.items():
            B = np.stack([vb[ob[j]:ob[j + 1]] for j in jb])
            out[np.ix_(ia, jb)] = _batch_dtw(A, B)
    if symmetric:
        np.fill_diagonal(out, 0.0)
        out = np.triu(out, 1)
        out = out + out.T
    return out
