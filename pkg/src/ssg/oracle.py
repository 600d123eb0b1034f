"""Brute-force ground truth and empirical monotonicity checks.

The greedy walk used here moves to the out-neighbor strictly closest to the
target and stops when no out-neighbor is strictly closer than the current node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ContractViolation
from .graph import AdjacencyGraph
from .kernels import distances_to, less, sqdist


def _topk(d: np.ndarray, k: int) -> np.ndarray:
    # exact (distance, id) order, including ties straddling the k-th position
    if k < d.size:
        kth = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= kth)
    else:
        cand = np.arange(d.size)
    order = np.lexsort((cand, d[cand]))
    return cand[order[:k]]


def exact_knn(data: np.ndarray, query: np.ndarray, k: int, exclude: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` ids closest to ``query`` ranked by (distance, id), with their squared distances.

    ``exclude`` drops one id from consideration (a node's own row when building KNN graphs).
    """
    n = data.shape[0] - (1 if exclude >= 0 else 0)
    if not 1 <= k <= n:
        raise ContractViolation(f"k must lie in [1, {n}], got {k}")
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (data.shape[1],):
        raise ContractViolation(f"query shape {query.shape} does not match dimension {data.shape[1]}")
    d = distances_to(data, query)
    if exclude >= 0:
        d[exclude] = np.inf
    ids = _topk(d, k).astype(np.int32)
    return ids, d[ids]


@dataclass
class GroundTruth:
    """Ranked exact neighbors: ``ids[q]`` and ``dists[q]`` for every query."""

    ids: np.ndarray
    dists: np.ndarray

    @property
    def k(self) -> int:
        return self.ids.shape[1]


def ground_truth(data: np.ndarray, queries: np.ndarray, k: int) -> GroundTruth:
    if queries.ndim != 2 or queries.shape[1] != data.shape[1]:
        raise ContractViolation(f"query dimension {queries.shape[-1]} != dataset dimension {data.shape[1]}")
    k = min(k, data.shape[0])
    ids = np.empty((queries.shape[0], k), dtype=np.int32)
    dists = np.empty((queries.shape[0], k), dtype=np.float64)
    for qi in range(queries.shape[0]):
        ids[qi], dists[qi] = exact_knn(data, queries[qi], k)
    return GroundTruth(ids, dists)


@numba.njit(cache=True, nogil=True)
def greedy_walk(ids, degree, data, start, target):
    """Pool-size-1 walk; returns the visited node sequence starting at ``start``."""
    path = [start]
    cur = start
    dcur = sqdist(data[cur], target)
    while True:
        best = -1
        bd = dcur
        for t in range(degree[cur]):
            nb = ids[cur, t]
            dn = sqdist(data[nb], target)
            if dn < dcur and (best < 0 or less(dn, nb, bd, best)):
                best = nb
                bd = dn
        if best < 0:
            break
        cur = best
        dcur = bd
        path.append(cur)
    return np.array(path, dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _walk_pairs(ids, degree, data, starts, targets):
    m = starts.shape[0]
    stuck = np.empty(m, dtype=np.int64)
    hops = np.empty(m, dtype=np.int64)
    for p in range(m):
        path = greedy_walk(ids, degree, data, starts[p], data[targets[p]])
        stuck[p] = path[-1]
        hops[p] = path.shape[0] - 1
    return stuck, hops


@dataclass
class MonotonicityReport:
    pairs: int
    failures: int
    failing: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _check_graph(graph: AdjacencyGraph, data: np.ndarray) -> None:
    if graph.n != data.shape[0]:
        raise ContractViolation(f"graph has {graph.n} nodes but dataset has {data.shape[0]} points")


def verify_monotonic(graph: AdjacencyGraph, data: np.ndarray, pair_budget: int, seed: int = 0) -> MonotonicityReport:
    """Greedy-walk every sampled (start, target) pair; a pair fails if the walk stalls short of the target.

    All ``n(n-1)`` ordered pairs are walked when ``pair_budget`` covers them.
    ``failing`` lists ``(start, target, stuck_node)``.
    """
    _check_graph(graph, data)
    if pair_budget < 1:
        raise ContractViolation("pair_budget must be >= 1")
    n = graph.n
    if pair_budget >= n * (n - 1):
        s, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = s != q
        starts, targets = s[keep].astype(np.int64), q[keep].astype(np.int64)
    else:
        rng = np.random.default_rng(seed)
        starts = rng.integers(n, size=pair_budget)
        targets = (starts + rng.integers(1, n, size=pair_budget)) % n
    stuck, _ = _walk_pairs(graph.ids, graph.degree, data, starts, targets)
    bad = np.flatnonzero(stuck != targets)
    failing = [(int(starts[i]), int(targets[i]), int(stuck[i])) for i in bad]
    return MonotonicityReport(pairs=len(starts), failures=len(failing), failing=failing)


def assert_unindexed(data: np.ndarray, queries: np.ndarray) -> None:
    """Raise if any query row is bitwise identical to a dataset row."""
    rows = {r.tobytes() for r in np.ascontiguousarray(data, dtype=np.float32)}
    for qi, q in enumerate(np.ascontiguousarray(queries, dtype=np.float32)):
        if q.tobytes() in rows:
            raise ContractViolation(f"query {qi} is an indexed point")


@numba.njit(cache=True, nogil=True)
def _co_monotone_counts(ids, degree, data, starts, queries, nearest):
    good = 0
    counted = 0
    for qi in range(queries.shape[0]):
        q = queries[qi]
        r = data[nearest[qi]]
        path = greedy_walk(ids, degree, data, starts[qi], q)
        for step in range(path.shape[0] - 1):
            p = path[step]
            t = path[step + 1]
            dpq = sqdist(data[p], q)
            skip = False
            for u in range(degree[p]):
                if sqdist(data[p], data[ids[p, u]]) >= dpq:
                    skip = True
                    break
            if skip:
                continue
            counted += 1
            if sqdist(data[t], q) < dpq and sqdist(data[t], r) < sqdist(data[p], r):
                good += 1
    return good, counted


def unindexed_monotonic_rate(
    graph: AdjacencyGraph, data: np.ndarray, queries: np.ndarray, seed: int = 0
) -> float:
    """Fraction of greedy steps toward unindexed queries that also approach the query's nearest neighbor.

    Steps taken from a node with an out-neighbor at least as far as the query are
    not counted. Returns 1.0 when no step qualifies.
    """
    _check_graph(graph, data)
    assert_unindexed(data, queries)
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    nearest = np.array([exact_knn(data, q, 1)[0][0] for q in queries], dtype=np.int64)
    starts = np.random.default_rng(seed).integers(graph.n, size=len(queries))
    good, counted = _co_monotone_counts(graph.ids, graph.degree, data, starts, queries, nearest)
    return 1.0 if counted == 0 else good / counted
