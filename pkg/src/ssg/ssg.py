"""Exact satellite-system graphs: angle-based pruning over the complete graph."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ContractViolation
from .graph import AdjacencyGraph
from .kernels import COS_TOL, conflicts, pairwise_sqdist, sqdist


@dataclass(frozen=True)
class AngleParam:
    """Minimum angle between two out-edges of a node, in degrees (0 < alpha <= 60)."""

    alpha_degrees: float
    cos_alpha: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha_degrees <= 60.0:
            raise ContractViolation(f"alpha must lie in (0, 60] degrees, got {self.alpha_degrees}")
        object.__setattr__(self, "cos_alpha", math.cos(math.radians(self.alpha_degrees)))


def as_angle(alpha) -> AngleParam:
    return alpha if isinstance(alpha, AngleParam) else AngleParam(float(alpha))


def conflict(base, kept, candidate, alpha) -> bool:
    """True if base->candidate lies strictly within alpha of base->kept."""
    base, kept, candidate = (np.asarray(v, dtype=np.float32) for v in (base, kept, candidate))
    return bool(
        conflicts(sqdist(base, kept), sqdist(base, candidate), sqdist(kept, candidate), as_angle(alpha).cos_alpha)
    )


@numba.njit(cache=True, nogil=True)
def _select_row(i, dist, order, cos_alpha):
    # order: candidates sorted by (distance to i, id), i itself already removed.
    # Each accepted k clears the later candidates it conflicts with; the clearing
    # pass streams over dist[k] in id order and is the same test as conflicts_pre.
    n = dist.shape[0]
    di = dist[i]
    si = np.sqrt(di)
    alive = np.ones(n, dtype=np.uint8)
    alive[i] = 0
    cf = (cos_alpha + COS_TOL) * 2.0
    out = np.empty(order.shape[0], dtype=np.int64)
    m = 0
    for t in range(order.shape[0]):
        k = order[t]
        if alive[k] == 0:
            continue
        alive[k] = 0
        out[m] = k
        m += 1
        a = di[k]
        dk = dist[k]
        if a == 0.0:
            for c in range(n):
                alive[c] &= np.uint8(di[c] != 0.0)
        else:
            f = cf * si[k]
            for c in range(n):
                kill = (di[c] == 0.0) | ((di[c] + a) - dk[c] > f * si[c])
                alive[c] &= np.uint8(not kill)
    row = out[:m].copy()
    rd = np.empty(m, dtype=np.float64)
    for t in range(m):
        rd[t] = di[row[t]]
    return row, rd


@numba.njit(cache=True, nogil=True)
def _build_exact(dist, cos_alpha):
    n = dist.shape[0]
    flat = np.empty(max(n * 16, 16), dtype=np.int32)
    flat_d = np.empty(max(n * 16, 16), dtype=np.float64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    used = 0
    for i in range(n):
        order = np.argsort(dist[i], kind="mergesort")
        others = np.empty(n - 1, dtype=np.int64)
        w = 0
        for t in range(n):
            if order[t] != i:
                others[w] = order[t]
                w += 1
        row, rd = _select_row(i, dist, others, cos_alpha)
        need = used + row.shape[0]
        if need > flat.shape[0]:
            size = max(need, 2 * flat.shape[0])
            nf = np.empty(size, dtype=np.int32)
            nd = np.empty(size, dtype=np.float64)
            nf[:used] = flat[:used]
            nd[:used] = flat_d[:used]
            flat = nf
            flat_d = nd
        for t in range(row.shape[0]):
            flat[used + t] = row[t]
            flat_d[used + t] = rd[t]
        used = need
        offsets[i + 1] = used
    return flat[:used], flat_d[:used], offsets


def _pack(flat, flat_d, offsets) -> AdjacencyGraph:
    n = offsets.shape[0] - 1
    degree = np.diff(offsets).astype(np.int32)
    cap = max(int(degree.max()), 1)
    g = AdjacencyGraph.empty(n, cap)
    slot = np.arange(flat.shape[0]) - np.repeat(offsets[:-1], degree)
    row = np.repeat(np.arange(n), degree)
    g.ids[row, slot] = flat
    g.dists[row, slot] = flat_d
    g.degree[:] = degree
    return g


def build_ssg_exact(data: np.ndarray, alpha, dist: np.ndarray | None = None) -> AdjacencyGraph:
    """Exact SSG over the complete graph; rows sorted by (length, id), cap = max degree.

    Holds the full ``n x n`` float64 distance matrix (``8 n^2`` bytes); pass
    ``dist`` to reuse one across several angles.
    """
    alpha = as_angle(alpha)
    n = data.shape[0]
    if n < 2:
        raise ContractViolation(f"exact SSG needs n >= 2, got {n}")
    if dist is None:
        dist = pairwise_sqdist(data)
    return _pack(*_build_exact(dist, alpha.cos_alpha))


def truncate(graph: AdjacencyGraph, data: np.ndarray | None = None, max_degree: int = 40) -> AdjacencyGraph:
    """Keep each row's ``max_degree`` shortest edges (ties by id)."""
    if max_degree < 1:
        raise ContractViolation("max_degree must be >= 1")
    g = graph.copy()
    if g.dists is None:
        if data is None:
            raise ContractViolation("truncating a graph without edge lengths needs the dataset")
        g.dists = np.full(g.ids.shape, np.inf)
        for i in range(g.n):
            row = g.neighbors(i)
            g.dists[i, : row.size] = [sqdist(data[i], data[j]) for j in row]
    for i in range(g.n):
        deg = g.degree[i]
        order = np.lexsort((g.ids[i, :deg], g.dists[i, :deg]))
        g.ids[i, :deg] = g.ids[i, :deg][order]
        g.dists[i, :deg] = g.dists[i, :deg][order]
    g.degree = np.minimum(g.degree, max_degree).astype(np.int32)
    cap = min(g.cap, max(max_degree, 1))
    g.ids = np.ascontiguousarray(g.ids[:, :cap])
    g.dists = np.ascontiguousarray(g.dists[:, :cap])
    mask = np.arange(cap)[None, :] >= g.degree[:, None]
    g.ids[mask] = -1
    g.dists[mask] = np.inf
    return g


def edge_overlap(a: AdjacencyGraph, b: AdjacencyGraph) -> float:
    """Fraction of ``a``'s directed edges that are also edges of ``b``."""
    if a.n != b.n:
        raise ContractViolation(f"node counts differ: {a.n} vs {b.n}")
    ka = a.edge_keys()
    if ka.size == 0:
        return 0.0
    return np.intersect1d(ka, b.edge_keys(), assume_unique=True).size / ka.size


def out_edge_angles(graph: AdjacencyGraph, data: np.ndarray, node: int) -> np.ndarray:
    """Pairwise angles in degrees between the out-edges of ``node`` (float64 vector math)."""
    row = graph.neighbors(node)
    u = data[row].astype(np.float64) - data[node].astype(np.float64)
    norms = np.linalg.norm(u, axis=1)
    iu = np.triu_indices(row.size, k=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (u @ u.T)[iu] / (norms[iu[0]] * norms[iu[1]])
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def min_edge_angles(graph: AdjacencyGraph, data: np.ndarray, nodes=None) -> np.ndarray:
    """Smallest angle in degrees between two out-edges of each node in ``nodes`` (180 below two edges)."""
    nodes = range(graph.n) if nodes is None else nodes
    out = []
    for i in nodes:
        row = graph.neighbors(int(i))
        if row.size < 2:
            out.append(180.0)
            continue
        u = data[row].astype(np.float64) - data[int(i)].astype(np.float64)
        norms = np.linalg.norm(u, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (u @ u.T) / np.outer(norms, norms)
        # coincident points have no direction; they count as angle 0
        cos[np.isnan(cos)] = 1.0
        np.fill_diagonal(cos, -1.0)
        out.append(math.degrees(math.acos(min(1.0, float(cos.max())))))
    return np.array(out)
