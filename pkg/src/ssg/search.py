"""Best-first graph search with a bounded candidate pool, plus sharded multi-graph search."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ContractViolation
from .kernels import less, sqdist


@dataclass
class SearchStats:
    """Per-query counters: pool-head expansions, distance computations, distinct nodes touched."""

    hops: int
    dist_comps: int
    visited: int


@numba.njit(cache=True, nogil=True)
def _pool_insert(pool_id, pool_d, pool_chk, size, cap, node, d):
    # returns (insert position or -1, new size)
    if size == cap and not less(d, node, pool_d[cap - 1], pool_id[cap - 1]):
        return -1, size
    pos = size if size < cap else cap - 1
    while pos > 0 and less(d, node, pool_d[pos - 1], pool_id[pos - 1]):
        if pos < cap:
            pool_id[pos] = pool_id[pos - 1]
            pool_d[pos] = pool_d[pos - 1]
            pool_chk[pos] = pool_chk[pos - 1]
        pos -= 1
    pool_id[pos] = node
    pool_d[pos] = d
    pool_chk[pos] = False
    if size < cap:
        size += 1
    return pos, size


@numba.njit(cache=True, nogil=True)
def search_kernel(ids, degree, data, query, entries, l, k, marks, epoch):
    """Pool search from the entry closest to ``query``.

    ``marks``/``epoch`` implement the visited set without per-query clearing.
    Returns (ids, squared distances, hops, dist_comps, visited).
    """
    pool_id = np.empty(l, dtype=np.int64)
    pool_d = np.empty(l, dtype=np.float64)
    pool_chk = np.zeros(l, dtype=np.bool_)
    dist_comps = 0
    start = entries[0]
    ds = sqdist(data[start], query)
    dist_comps += 1
    for t in range(1, entries.shape[0]):
        e = entries[t]
        de = sqdist(data[e], query)
        dist_comps += 1
        if less(de, e, ds, start):
            start = e
            ds = de
    marks[start] = epoch
    visited = 1
    pool_id[0] = start
    pool_d[0] = ds
    size = 1
    hops = 0
    i = 0
    while i < size:
        if pool_chk[i]:
            i += 1
            continue
        pool_chk[i] = True
        hops += 1
        node = pool_id[i]
        lowest = size
        for t in range(degree[node]):
            nb = ids[node, t]
            if marks[nb] == epoch:
                continue
            marks[nb] = epoch
            d = sqdist(data[nb], query)
            dist_comps += 1
            visited += 1
            pos, size = _pool_insert(pool_id, pool_d, pool_chk, size, l, nb, d)
            if pos >= 0 and pos < lowest:
                lowest = pos
        if lowest <= i:
            i = lowest
        else:
            i += 1
    m = min(k, size)
    return pool_id[:m].copy(), pool_d[:m].copy(), hops, dist_comps, visited


@numba.njit(cache=True, nogil=True)
def search_batch_kernel(ids, degree, data, queries, entries, l, k):
    n = data.shape[0]
    m = queries.shape[0]
    out = np.full((m, k), -1, dtype=np.int64)
    out_d = np.full((m, k), np.inf)
    stats = np.zeros((m, 3), dtype=np.int64)
    marks = np.zeros(n, dtype=np.int64)
    for qi in range(m):
        r, rd, h, dc, v = search_kernel(ids, degree, data, queries[qi], entries, l, k, marks, qi + 1)
        out[qi, : r.shape[0]] = r
        out_d[qi, : r.shape[0]] = rd
        stats[qi, 0] = h
        stats[qi, 1] = dc
        stats[qi, 2] = v
    return out, out_d, stats


def _entries(index) -> np.ndarray:
    nav = np.asarray(index.navigating, dtype=np.int64)
    # graphs without navigating nodes (exact SSG files) enter at node 0
    return nav if nav.size else np.zeros(1, dtype=np.int64)


def _check(l: int, k: int) -> None:
    if l < 1:
        raise ContractViolation(f"pool size must be >= 1, got {l}")
    if k > l:
        raise ContractViolation(f"k={k} exceeds pool size l={l}")


def search_on_graph(index, data: np.ndarray, query: np.ndarray, l: int, k: int) -> tuple[np.ndarray, SearchStats]:
    """Top-``k`` ids for one query and the search counters."""
    _check(l, k)
    query = np.ascontiguousarray(query, dtype=np.float32)
    if query.shape != (data.shape[1],):
        raise ContractViolation(f"query shape {query.shape} does not match dimension {data.shape[1]}")
    g = index.graph
    marks = np.zeros(g.n, dtype=np.int64)
    r, _, hops, dc, v = search_kernel(g.ids, g.degree, data, query, _entries(index), l, k, marks, 1)
    return r.astype(np.int32), SearchStats(int(hops), int(dc), int(v))


def search_batch(index, data: np.ndarray, queries: np.ndarray, l: int, k: int):
    """Search every query sequentially; returns (ids, squared distances, stats[m, 3])."""
    _check(l, k)
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    g = index.graph
    return search_batch_kernel(g.ids, g.degree, data, queries, _entries(index), l, k)


@dataclass
class ShardedIndex:
    """Independent indices over a partition of the dataset.

    ``global_ids[s][j]`` is the global id of local node ``j`` of shard ``s``;
    ``shards[s]`` holds that shard's rows of the dataset.
    """

    indices: list
    global_ids: list[np.ndarray]
    shards: list[np.ndarray]

    @property
    def n(self) -> int:
        return sum(len(g) for g in self.global_ids)


def partition(n: int, shard_count: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition into ``shard_count`` parts whose sizes differ by at most one."""
    if shard_count < 1:
        raise ContractViolation("shard_count must be >= 1")
    if shard_count > n:
        raise ContractViolation(f"cannot split {n} points into {shard_count} non-empty shards")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part).astype(np.int64) for part in np.array_split(perm, shard_count)]


def sharded_build(data: np.ndarray, shard_count: int, build, seed: int = 0) -> ShardedIndex:
    """Build one index per shard with ``build(shard_data, shard_number)``."""
    parts = partition(data.shape[0], shard_count, seed)
    shards = [np.ascontiguousarray(data[p]) for p in parts]
    indices = [build(x, s) for s, x in enumerate(shards)]
    return ShardedIndex(indices, parts, shards)


def _merge(results, k):
    ids = np.concatenate([r[0] for r in results])
    dists = np.concatenate([r[1] for r in results])
    order = np.lexsort((ids, dists))[:k]
    return ids[order], dists[order]


def sharded_search(sharded: ShardedIndex, query: np.ndarray, l: int, k: int, workers: int = 1):
    """Search every shard, map to global ids and merge by (distance, id).

    Returns (ids, SearchStats summed over shards).
    """
    _check(l, k)
    query = np.ascontiguousarray(query, dtype=np.float32)

    def one(s):
        idx = sharded.indices[s]
        g = idx.graph
        marks = np.zeros(g.n, dtype=np.int64)
        r, rd, h, dc, v = search_kernel(g.ids, g.degree, sharded.shards[s], query, _entries(idx), l, k, marks, 1)
        return sharded.global_ids[s][r], rd, (h, dc, v)

    shard_ids = range(len(sharded.indices))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, shard_ids))
    else:
        results = [one(s) for s in shard_ids]
    ids, _ = _merge(results, k)
    h, dc, v = (sum(r[2][j] for r in results) for j in range(3))
    return ids.astype(np.int32), SearchStats(int(h), int(dc), int(v))


def sharded_search_batch(sharded: ShardedIndex, queries: np.ndarray, l: int, k: int):
    """Batch form of :func:`sharded_search`; returns (ids[m, k], stats[m, 3])."""
    _check(l, k)
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    per_shard = [
        search_batch(idx, x, queries, l, k) for idx, x in zip(sharded.indices, sharded.shards)
    ]
    m = queries.shape[0]
    out = np.full((m, k), -1, dtype=np.int32)
    stats = sum(s for _, _, s in per_shard)
    for qi in range(m):
        results = [
            (gid[r[qi][r[qi] >= 0]], d[qi][r[qi] >= 0]) for (r, d, _), gid in zip(per_shard, sharded.global_ids)
        ]
        ids, _ = _merge(results, k)
        out[qi, : ids.size] = ids
    return out, stats
