"""Low-level numba kernels shared by the graph builders, the oracle and search.

Every distance in the package goes through :func:`sqdist` so that the oracle,
the builders and the searcher agree bit for bit on every comparison.
"""
import numba
import numpy as np

# Absorbs rounding noise in the cosine test; angles strictly below alpha conflict.
COS_TOL = 1e-9


@numba.njit(cache=True, nogil=True, inline="always")
def sqdist(a, b):
    # four partial sums: breaks the add dependency chain, order is fixed
    n = a.shape[0]
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    i = 0
    while i + 4 <= n:
        t0 = np.float64(a[i]) - np.float64(b[i])
        t1 = np.float64(a[i + 1]) - np.float64(b[i + 1])
        t2 = np.float64(a[i + 2]) - np.float64(b[i + 2])
        t3 = np.float64(a[i + 3]) - np.float64(b[i + 3])
        s0 += t0 * t0
        s1 += t1 * t1
        s2 += t2 * t2
        s3 += t3 * t3
        i += 4
    while i < n:
        t0 = np.float64(a[i]) - np.float64(b[i])
        s0 += t0 * t0
        i += 1
    return (s0 + s1) + (s2 + s3)


@numba.njit(cache=True, nogil=True, inline="always")
def conflicts_pre(d_base_kept, root_kept, d_base_cand, root_cand, d_kept_cand, cos_alpha):
    """:func:`conflicts` with the square roots of the two base distances supplied."""
    if d_base_cand == 0.0:
        return True
    if d_base_kept == 0.0:
        return False
    # cos(angle) > cos_alpha, multiplied through by the positive 2|pk||pc|
    return d_base_kept + d_base_cand - d_kept_cand > (cos_alpha + COS_TOL) * 2.0 * root_kept * root_cand


@numba.njit(cache=True, nogil=True, inline="always")
def conflicts(d_base_kept, d_base_cand, d_kept_cand, cos_alpha):
    """Angle test at ``base`` from three squared distances (law of cosines).

    True when the angle between base->kept and base->cand is strictly below
    alpha. A candidate coincident with base always conflicts; a zero-length
    kept edge conflicts only with such a candidate.
    """
    return conflicts_pre(
        d_base_kept, np.sqrt(d_base_kept), d_base_cand, np.sqrt(d_base_cand), d_kept_cand, cos_alpha
    )


@numba.njit(cache=True, nogil=True, inline="always")
def less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@numba.njit(cache=True, nogil=True)
def distances_to(data, query):
    n = data.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = sqdist(data[i], query)
    return out


@numba.njit(cache=True, nogil=True)
def pairwise_sqdist(data):
    n = data.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            d = sqdist(data[i], data[j])
            out[i, j] = d
            out[j, i] = d
    return out


@numba.njit(cache=True, nogil=True)
def cross_sqdist(a, b):
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = sqdist(a[i], b[j])
    return out


@numba.njit(cache=True, nogil=True)
def fnv1a64(buf):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(buf.shape[0]):
        h ^= np.uint64(buf[i])
        h *= prime
    return h


@numba.njit(cache=True, nogil=True)
def reach_mark(ids, degree, root, reached):
    """Iterative DFS over out-edges from ``root``; marks ``reached`` in place.

    Returns the number of newly marked nodes.
    """
    n = ids.shape[0]
    stack = np.empty(n, dtype=np.int64)
    top = 0
    added = 0
    if not reached[root]:
        reached[root] = True
        added += 1
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        v = stack[top]
        for t in range(degree[v]):
            u = ids[v, t]
            if not reached[u]:
                reached[u] = True
                added += 1
                stack[top] = u
                top += 1
    return added
