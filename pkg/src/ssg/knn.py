"""Approximate K-NN graphs: nn-descent construction and accuracy against exact neighbors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ContractViolation
from .graph import AdjacencyGraph
from .kernels import distances_to, less, sqdist
from .oracle import _topk


@dataclass
class KnnGraph:
    """``k`` neighbors per node, rows sorted by (squared distance, id).

    ``flags`` marks entries not yet used in a local join (nn-descent "new").
    ``history`` records the mean row distance after initialization and after
    every nn-descent iteration.
    """

    ids: np.ndarray
    dists: np.ndarray
    flags: np.ndarray | None = None
    history: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def as_adjacency(self) -> AdjacencyGraph:
        return AdjacencyGraph(self.ids.copy(), np.full(self.n, self.k, dtype=np.int32), self.dists.copy())

    @classmethod
    def from_ids(cls, ids, data: np.ndarray) -> "KnnGraph":
        """Rebuild distances (and the sort order) for an id table read from ivecs."""
        ids = np.asarray(ids, dtype=np.int32)
        dists = np.empty(ids.shape, dtype=np.float64)
        for i in range(ids.shape[0]):
            for t, j in enumerate(ids[i]):
                dists[i, t] = sqdist(data[i], data[j])
            order = np.lexsort((ids[i], dists[i]))
            ids[i] = ids[i][order]
            dists[i] = dists[i][order]
        return cls(ids, dists)


def exact_knn_graph(data: np.ndarray, k: int, dist: np.ndarray | None = None) -> KnnGraph:
    n = data.shape[0]
    if not 1 <= k < n:
        raise ContractViolation(f"k must lie in [1, {n - 1}], got {k}")
    ids = np.empty((n, k), dtype=np.int32)
    dists = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        d = distances_to(data, data[i]) if dist is None else dist[i].copy()
        d[i] = np.inf
        ids[i] = _topk(d, k)
        dists[i] = d[ids[i]]
    return KnnGraph(ids, dists)


@numba.njit(cache=True, nogil=True)
def _row_insert(ids, dists, flags, i, j, d):
    k = ids.shape[1]
    if not less(d, j, dists[i, k - 1], ids[i, k - 1]):
        return 0
    for t in range(k):
        if ids[i, t] == j:
            return 0
    pos = k - 1
    while pos > 0 and less(d, j, dists[i, pos - 1], ids[i, pos - 1]):
        ids[i, pos] = ids[i, pos - 1]
        dists[i, pos] = dists[i, pos - 1]
        flags[i, pos] = flags[i, pos - 1]
        pos -= 1
    ids[i, pos] = j
    dists[i, pos] = d
    flags[i, pos] = True
    return 1


@numba.njit(cache=True, nogil=True)
def _init_random(data, k, ids, dists, flags):
    n = data.shape[0]
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        mark[i] = i
        t = 0
        while t < k:
            j = np.random.randint(0, n)
            if mark[j] == i:
                continue
            mark[j] = i
            ids[i, t] = j
            dists[i, t] = sqdist(data[i], data[j])
            t += 1
        # insertion sort by (distance, id)
        for a in range(1, k):
            b = a
            while b > 0 and less(dists[i, b], ids[i, b], dists[i, b - 1], ids[i, b - 1]):
                tmp_i = ids[i, b]
                ids[i, b] = ids[i, b - 1]
                ids[i, b - 1] = tmp_i
                tmp_d = dists[i, b]
                dists[i, b] = dists[i, b - 1]
                dists[i, b - 1] = tmp_d
                b -= 1
        for t in range(k):
            flags[i, t] = True


@numba.njit(cache=True, nogil=True)
def _reservoir_add(lists, counts, j, v, cap):
    c = counts[j]
    if c < cap:
        lists[j, c] = v
    else:
        r = np.random.randint(0, c + 1)
        if r < cap:
            lists[j, r] = v
    counts[j] = c + 1


@numba.njit(cache=True, nogil=True)
def _iterate(data, ids, dists, flags, s):
    n, k = ids.shape
    new_f = np.full((n, s), -1, dtype=np.int64)
    old_f = np.full((n, k), -1, dtype=np.int64)
    new_r = np.full((n, s), -1, dtype=np.int64)
    old_r = np.full((n, s), -1, dtype=np.int64)
    new_rc = np.zeros(n, dtype=np.int64)
    old_rc = np.zeros(n, dtype=np.int64)
    slots = np.empty(k, dtype=np.int64)
    for i in range(n):
        m = 0
        o = 0
        for t in range(k):
            if flags[i, t]:
                slots[m] = t
                m += 1
            else:
                old_f[i, o] = ids[i, t]
                o += 1
        # partial Fisher-Yates: sample min(s, m) new entries
        take = min(s, m)
        for a in range(take):
            b = np.random.randint(a, m)
            tmp = slots[a]
            slots[a] = slots[b]
            slots[b] = tmp
            t = slots[a]
            new_f[i, a] = ids[i, t]
            flags[i, t] = False
    for i in range(n):
        for a in range(s):
            j = new_f[i, a]
            if j >= 0:
                _reservoir_add(new_r, new_rc, j, i, s)
        for a in range(k):
            j = old_f[i, a]
            if j >= 0:
                _reservoir_add(old_r, old_rc, j, i, s)
    updates = 0
    new_all = np.empty(2 * s, dtype=np.int64)
    old_all = np.empty(k + s, dtype=np.int64)
    for i in range(n):
        nn = 0
        for a in range(s):
            if new_f[i, a] >= 0:
                new_all[nn] = new_f[i, a]
                nn += 1
        for a in range(min(s, new_rc[i])):
            new_all[nn] = new_r[i, a]
            nn += 1
        no = 0
        for a in range(k):
            if old_f[i, a] >= 0:
                old_all[no] = old_f[i, a]
                no += 1
        for a in range(min(s, old_rc[i])):
            old_all[no] = old_r[i, a]
            no += 1
        for a in range(nn):
            u = new_all[a]
            for b in range(a + 1, nn):
                v = new_all[b]
                if u == v:
                    continue
                d = sqdist(data[u], data[v])
                updates += _row_insert(ids, dists, flags, u, v, d)
                updates += _row_insert(ids, dists, flags, v, u, d)
            for b in range(no):
                v = old_all[b]
                if u == v:
                    continue
                d = sqdist(data[u], data[v])
                updates += _row_insert(ids, dists, flags, u, v, d)
                updates += _row_insert(ids, dists, flags, v, u, d)
    return updates


@numba.njit(cache=True, nogil=True)
def _seed(seed):
    np.random.seed(seed)


def nn_descent(
    data: np.ndarray,
    k: int = 50,
    rho: float = 0.5,
    iters: int = 12,
    delta: float = 0.001,
    seed: int = 0,
) -> KnnGraph:
    """Approximate K-NN graph by local joins over sampled new/old and reverse neighbors.

    Deterministic for a fixed seed. Stops after ``iters`` iterations or once an
    iteration updates fewer than ``delta * n * k`` row entries.
    """
    n = data.shape[0]
    if not 1 <= k < n:
        raise ContractViolation(f"k must lie in [1, {n - 1}], got {k}")
    if not 0.0 < rho <= 1.0:
        raise ContractViolation(f"rho must lie in (0, 1], got {rho}")
    if iters < 1:
        raise ContractViolation("iters must be >= 1")
    ids = np.empty((n, k), dtype=np.int32)
    dists = np.empty((n, k), dtype=np.float64)
    flags = np.empty((n, k), dtype=np.bool_)
    _seed(seed % (2**32))
    _init_random(data, k, ids, dists, flags)
    history = [float(dists.mean())]
    s = max(1, int(rho * k))
    for _ in range(iters):
        updates = _iterate(data, ids, dists, flags, s)
        history.append(float(dists.mean()))
        if updates < delta * n * k:
            break
    return KnnGraph(ids, dists, flags, history)


def knn_accuracy(approx: KnnGraph, data: np.ndarray, exact: KnnGraph | None = None) -> tuple[float, float]:
    """(1-NN accuracy, mean per-row overlap with the exact k-NN list)."""
    if exact is None:
        exact = exact_knn_graph(data, approx.k)
    k = approx.k
    hit1 = (approx.ids == exact.ids[:, :1]).any(axis=1).mean()
    overlap = np.mean([np.intersect1d(approx.ids[i], exact.ids[i, :k]).size / k for i in range(approx.n)])
    return float(hit1), float(overlap)


def degrade(knn: KnnGraph, data: np.ndarray, fraction: float, seed: int = 0) -> KnnGraph:
    """Replace each entry with probability ``fraction`` by a random non-neighbor, re-sorting rows.

    Lowers accuracy in a controlled way for approximation experiments.
    """
    rng = np.random.default_rng(seed)
    n, k = knn.ids.shape
    ids = knn.ids.copy()
    for i in range(n):
        hit = np.flatnonzero(rng.random(k) < fraction)
        present = set(ids[i].tolist())
        for t in hit:
            while True:
                j = int(rng.integers(n))
                if j != i and j not in present:
                    break
            present.discard(int(ids[i, t]))
            present.add(j)
            ids[i, t] = j
    return KnnGraph.from_ids(ids, data)
