"""Navigating SSG: candidate gathering, angle pruning, reverse-edge insertion,
navigating nodes, connectivity spanning and the on-disk index format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numba
import numpy as np

from .dataset import checksum
from .errors import ContractViolation, FormatError, ValidationError
from .graph import PAD, AdjacencyGraph
from .kernels import conflicts_pre, distances_to, reach_mark, sqdist
from .knn import KnnGraph
from .oracle import _topk
from .search import search_kernel
from .ssg import AngleParam, as_angle

MAGIC = b"NSSG"
VERSION = 1
_HEADER = struct.Struct("<4sIQIIfIQ")


@dataclass
class NssgIndex:
    """Graph (cap = r) plus navigating entry nodes and build metadata.

    Only ``alpha``, ``r``, ``s`` and ``checksum`` are persisted; ``l`` and
    ``seed`` are None on a deserialized index.
    """

    graph: AdjacencyGraph
    navigating: np.ndarray
    alpha: float
    r: int
    d: int
    checksum: int
    l: int | None = None
    seed: int | None = None

    @property
    def s(self) -> int:
        return int(self.navigating.size)

    @property
    def n(self) -> int:
        return self.graph.n

    def same_structure(self, other: "NssgIndex") -> bool:
        return (
            self.graph.same_structure(other.graph)
            and np.array_equal(self.navigating, other.navigating)
            and np.float32(self.alpha) == np.float32(other.alpha)
            and (self.r, self.d, self.checksum) == (other.r, other.d, other.checksum)
        )


class CandidateSource(Protocol):
    """Maps a node to its candidate neighbors ranked by (squared distance, id), node excluded."""

    def candidates(self, node: int, l: int) -> tuple[np.ndarray, np.ndarray]: ...


@numba.njit(cache=True, nogil=True)
def _gather(knn_ids, data, node, l, marks, epoch):
    n_nb = knn_ids.shape[1]
    out = np.empty(n_nb + n_nb * n_nb, dtype=np.int64)
    cnt = 0
    marks[node] = epoch
    for t in range(n_nb):
        nb = knn_ids[node, t]
        if marks[nb] != epoch:
            marks[nb] = epoch
            out[cnt] = nb
            cnt += 1
        for u in range(n_nb):
            v = knn_ids[nb, u]
            if marks[v] != epoch:
                marks[v] = epoch
                out[cnt] = v
                cnt += 1
        if cnt >= l:
            break
    pool = np.sort(out[:cnt])
    d = np.empty(cnt, dtype=np.float64)
    for t in range(cnt):
        d[t] = sqdist(data[node], data[pool[t]])
    order = np.argsort(d, kind="mergesort")
    return pool[order], d[order]


class KnnCandidates:
    """Two-hop propagation over a K-NN graph, stopping once the pool holds ``l`` nodes.

    Holds scratch state; use one instance per thread.
    """

    def __init__(self, knn: KnnGraph, data: np.ndarray):
        self.knn_ids = np.ascontiguousarray(knn.ids)
        self.data = data
        self._marks = np.zeros(data.shape[0], dtype=np.int64)
        self._epoch = 0

    def candidates(self, node: int, l: int):
        self._epoch += 1
        return _gather(self.knn_ids, self.data, node, l, self._marks, self._epoch)


def gather_candidates(knn: KnnGraph, node: int, l: int, data: np.ndarray) -> np.ndarray:
    if l < 1:
        raise ContractViolation("l must be >= 1")
    return KnnCandidates(knn, data).candidates(node, l)[0].astype(np.int32)


class ExactCandidates:
    """The ``l`` true nearest neighbors by brute force (desk-scale oracle source)."""

    def __init__(self, data: np.ndarray, dist: np.ndarray | None = None):
        self.data = data
        self.dist = dist

    def candidates(self, node: int, l: int):
        d = distances_to(self.data, self.data[node]) if self.dist is None else self.dist[node].copy()
        d[node] = np.inf
        ids = _topk(d, min(l, self.data.shape[0] - 1)).astype(np.int64)
        return ids, d[ids]


class SearchCandidates:
    """Candidates from searching a previously built index, without a K-NN graph in memory."""

    def __init__(self, index: NssgIndex, data: np.ndarray, pool: int = 0):
        self.index = index
        self.data = data
        self.pool = pool
        self._marks = np.zeros(data.shape[0], dtype=np.int64)
        self._epoch = 0

    def candidates(self, node: int, l: int):
        g = self.index.graph
        self._epoch += 1
        k = min(l + 1, self.data.shape[0])
        entries = self.index.navigating.astype(np.int64) if self.index.s else np.zeros(1, dtype=np.int64)
        ids, d, *_ = search_kernel(
            g.ids, g.degree, self.data, self.data[node], entries, max(k, self.pool), k, self._marks, self._epoch
        )
        keep = ids != node
        return ids[keep][:l], d[keep][:l]


@numba.njit(cache=True, nogil=True)
def _prune(node, pool, pool_d, data, cos_alpha, r):
    kept = np.empty(r, dtype=np.int64)
    kd = np.empty(r, dtype=np.float64)
    ks = np.empty(r, dtype=np.float64)
    m = 0
    for t in range(pool.shape[0]):
        c = pool[t]
        b = pool_d[t]
        sb = np.sqrt(b)
        ok = True
        for u in range(m):
            if conflicts_pre(kd[u], ks[u], b, sb, sqdist(data[kept[u]], data[c]), cos_alpha):
                ok = False
                break
        if ok:
            kept[m] = c
            kd[m] = b
            ks[m] = sb
            m += 1
            if m == r:
                break
    return kept[:m].copy(), kd[:m].copy()


def prune_candidates(node: int, pool, alpha, r: int, data: np.ndarray, pool_d=None) -> np.ndarray:
    """Nearest-first angle pruning of a ranked pool, keeping at most ``r`` edges."""
    pool = np.asarray(pool, dtype=np.int64)
    if pool_d is None:
        pool_d = np.array([sqdist(data[node], data[c]) for c in pool], dtype=np.float64)
    kept, _ = _prune(node, pool, np.asarray(pool_d, dtype=np.float64), data, as_angle(alpha).cos_alpha, r)
    return kept.astype(np.int32)


@numba.njit(cache=True, nogil=True)
def _reverse_insert(in_ids, in_deg, in_d, ids, deg, dd, data, cos_alpha, r):
    n = in_ids.shape[0]
    for i in range(n):
        for t in range(in_deg[i]):
            j = in_ids[i, t]
            dji = in_d[i, t]
            m = deg[j]
            dup = False
            for u in range(m):
                if ids[j, u] == i:
                    dup = True
                    break
            if dup:
                continue
            if m == r and not (dji < dd[j, r - 1] or (dji == dd[j, r - 1] and i < ids[j, r - 1])):
                continue  # would be evicted at once as the longest edge
            sb = np.sqrt(dji)
            ok = True
            for u in range(m):
                if conflicts_pre(dd[j, u], np.sqrt(dd[j, u]), dji, sb, sqdist(data[ids[j, u]], data[i]), cos_alpha):
                    ok = False
                    break
            if not ok:
                continue
            pos = min(m, r - 1)
            while pos > 0 and (dji < dd[j, pos - 1] or (dji == dd[j, pos - 1] and i < ids[j, pos - 1])):
                ids[j, pos] = ids[j, pos - 1]
                dd[j, pos] = dd[j, pos - 1]
                pos -= 1
            ids[j, pos] = i
            dd[j, pos] = dji
            if m < r:
                deg[j] = m + 1


def reverse_insert(graph: AdjacencyGraph, alpha, r: int, data: np.ndarray) -> AdjacencyGraph:
    """Try adding j->i for every edge i->j (ascending i, then row order).

    An insertion is skipped when j already links to i or when it conflicts with
    any edge in j's current row; rows over ``r`` drop their longest edge.
    """
    cos_alpha = as_angle(alpha).cos_alpha
    if graph.dists is None:
        raise ContractViolation("reverse_insert needs edge lengths on the graph")
    if graph.max_degree > r:
        raise ContractViolation(f"input row degree {graph.max_degree} exceeds r={r}")
    out = AdjacencyGraph.empty(graph.n, r)
    w = min(graph.cap, r)
    out.ids[:, :w] = graph.ids[:, :w]
    out.dists[:, :w] = graph.dists[:, :w]
    out.degree[:] = graph.degree
    _reverse_insert(graph.ids, graph.degree, graph.dists, out.ids, out.degree, out.dists, data, cos_alpha, r)
    return out


def select_navigating(n: int, s: int, seed: int) -> np.ndarray:
    if not 1 <= s <= n:
        raise ContractViolation(f"s must lie in [1, {n}], got {s}")
    return np.random.default_rng(seed).choice(n, size=s, replace=False).astype(np.int32)


def _link(g: AdjacencyGraph, protected: np.ndarray, v: int, u: int, d: float) -> bool:
    deg = int(g.degree[v])
    if deg == g.cap:
        free = [t for t in range(deg - 1, -1, -1) if not protected[v, t]]
        if not free:
            return False
        t = free[0]
        g.ids[v, t:deg - 1] = g.ids[v, t + 1:deg].copy()
        g.dists[v, t:deg - 1] = g.dists[v, t + 1:deg].copy()
        protected[v, t:deg - 1] = protected[v, t + 1:deg].copy()
        deg -= 1
    row_d, row_i = g.dists[v, :deg], g.ids[v, :deg]
    pos = int(np.searchsorted(row_d, d, side="left"))
    while pos < deg and row_d[pos] == d and row_i[pos] < u:
        pos += 1
    for arr, val in ((g.ids, u), (g.dists, d), (protected, True)):
        arr[v, pos + 1:deg + 1] = arr[v, pos:deg].copy()
        arr[v, pos] = val
    g.degree[v] = deg + 1
    return True


def _reached_candidates(g, data, u, root, reached, l):
    marks = np.zeros(g.n, dtype=np.int64)
    ids, *_ = search_kernel(g.ids, g.degree, data, data[u], np.array([root], dtype=np.int64), l, l, marks, 1)
    found = [int(v) for v in ids if reached[v]]
    yield from found
    # exact scan over the reached set when the search comes up short
    pool = np.flatnonzero(reached)
    d = np.array([sqdist(data[u], data[v]) for v in pool])
    for v in pool[np.lexsort((pool, d))]:
        if int(v) not in found:
            yield int(v)


def _span(g: AdjacencyGraph, root: int, data: np.ndarray, l: int, protected: np.ndarray) -> int:
    added = 0
    while True:
        reached = np.zeros(g.n, dtype=np.bool_)
        reach_mark(g.ids, g.degree, root, reached)
        if reached.all():
            return added
        nxt = 0
        while True:
            unreached = np.flatnonzero(~reached[nxt:])
            if unreached.size == 0:
                break
            u = nxt + int(unreached[0])
            for v in _reached_candidates(g, data, u, root, reached, l):
                if _link(g, protected, v, u, sqdist(data[v], data[u])):
                    break
            else:
                raise ValidationError(f"no reached node can take a spanning edge to {u}")
            added += 1
            reach_mark(g.ids, g.degree, u, reached)
            nxt = u + 1
        # evictions may have cut earlier paths: re-check from scratch


def dfs_span(
    graph: AdjacencyGraph,
    root: int,
    data: np.ndarray,
    l: int = 100,
    protected: np.ndarray | None = None,
) -> AdjacencyGraph:
    """Make every node reachable from ``root`` by linking each orphan from its nearest reached node.

    A full row evicts its longest non-spanning edge; spanning edges (tracked in
    ``protected``) are never evicted.
    """
    if not 0 <= root < graph.n:
        raise ContractViolation(f"root {root} outside [0, {graph.n})")
    g = graph.copy()
    if g.dists is None:
        raise ContractViolation("dfs_span needs edge lengths on the graph")
    if protected is None:
        protected = np.zeros(g.ids.shape, dtype=np.bool_)
    _span(g, root, data, l, protected)
    return g


def build_nssg(
    data: np.ndarray,
    source: CandidateSource,
    l: int = 100,
    r: int = 50,
    s: int = 10,
    alpha: float | AngleParam = 60.0,
    seed: int = 0,
) -> NssgIndex:
    n = data.shape[0]
    alpha = as_angle(alpha)
    if l < 1 or r < 1:
        raise ContractViolation("l and r must be >= 1")
    s = min(s, n)
    g = AdjacencyGraph.empty(n, r)
    for i in range(n):
        pool, pool_d = source.candidates(i, min(l, n - 1)) if n > 1 else (np.zeros(0, np.int64), np.zeros(0))
        kept, kd = _prune(i, pool.astype(np.int64), pool_d, data, alpha.cos_alpha, r)
        g.ids[i, : kept.size] = kept
        g.dists[i, : kept.size] = kd
        g.degree[i] = kept.size
    g = reverse_insert(g, alpha, r, data)
    nav = select_navigating(n, s, seed)
    protected = np.zeros(g.ids.shape, dtype=np.bool_)
    while True:
        for root in nav:
            _span(g, int(root), data, l, protected)
        # a later root's evictions can cut an earlier root's paths
        if all(g.reachable(int(root)).all() for root in nav):
            break
    return NssgIndex(g, nav, alpha.alpha_degrees, r, data.shape[1], checksum(data), l, seed)


def serialize(index: NssgIndex, path) -> None:
    """Write: header, navigating ids, then per node its degree and neighbor ids (little-endian)."""
    g = index.graph
    parts = [
        _HEADER.pack(MAGIC, VERSION, g.n, index.d, index.r, index.alpha, index.s, index.checksum),
        np.asarray(index.navigating, dtype="<u4").tobytes(),
    ]
    for i in range(g.n):
        row = g.neighbors(i)
        parts.append(np.array([row.size], dtype="<u4").tobytes())
        parts.append(row.astype("<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def deserialize(path) -> NssgIndex:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d, r, alpha, s, chk = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    words = np.frombuffer(raw, dtype="<u4", offset=_HEADER.size, count=(len(raw) - _HEADER.size) // 4)
    if (len(raw) - _HEADER.size) % 4 or words.size < s:
        raise FormatError(f"{path}: truncated body")
    nav = words[:s].astype(np.int32)
    g = AdjacencyGraph(np.full((n, r), PAD, dtype=np.int32), np.zeros(n, dtype=np.int32))
    pos = s
    for i in range(n):
        if pos >= words.size:
            raise FormatError(f"{path}: truncated at node {i}")
        deg = int(words[pos])
        if deg > r:
            raise ValidationError(f"{path}: node {i} has degree {deg} > r={r}")
        if pos + 1 + deg > words.size:
            raise FormatError(f"{path}: truncated at node {i}")
        g.ids[i, :deg] = words[pos + 1 : pos + 1 + deg]
        g.degree[i] = deg
        pos += 1 + deg
    if pos != words.size:
        raise FormatError(f"{path}: {4 * (words.size - pos)} trailing bytes")
    g.validate()
    if nav.size and (nav.min() < 0 or nav.max() >= n or np.unique(nav).size != nav.size):
        raise ValidationError(f"{path}: navigating ids invalid or repeated")
    return NssgIndex(g, nav, float(alpha), r, d, chk)
