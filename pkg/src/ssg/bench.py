"""Measurement harness: precision, QPS curves, path lengths, alpha sweeps,
scaling and approximation experiments. Every table can be written as CSV."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation
from .graph import AdjacencyGraph
from .knn import KnnGraph, degrade, exact_knn_graph, knn_accuracy
from .nssg import KnnCandidates, NssgIndex, build_nssg
from .oracle import GroundTruth, assert_unindexed, exact_knn, greedy_walk, ground_truth
from .search import _check, _entries, search_batch_kernel
from .ssg import edge_overlap

log = logging.getLogger(__name__)


def precision(result, truth) -> float:
    """|R ∩ G| / |G| with set semantics."""
    g = set(np.asarray(truth).ravel().tolist())
    if not g:
        raise ContractViolation("ground truth must be non-empty")
    r = set(np.asarray(result).ravel().tolist())
    return len(r & g) / len(g)


def mean_precision(results: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean([precision(r[r >= 0], t) for r, t in zip(results, truth)]))


@dataclass
class EvalRecord:
    l: int
    precision: float
    qps: float
    mean_hops: float
    mean_dist_comps: float
    threads: int = 1


def _run(index, data, queries, l, k, threads):
    g = index.graph
    entries = _entries(index)
    if threads <= 1:
        return search_batch_kernel(g.ids, g.degree, data, queries, entries, l, k)
    chunks = np.array_split(np.arange(len(queries)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda c: search_batch_kernel(g.ids, g.degree, data, queries[c], entries, l, k), chunks)
        )
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


def qps_curve(
    index,
    data: np.ndarray,
    queries: np.ndarray,
    truth: GroundTruth | np.ndarray,
    pool_sizes: Sequence[int],
    k: int | None = None,
    threads: int = 1,
) -> list[EvalRecord]:
    """One record per pool size; precision is measured at ``k`` (default: the truth width).

    Searches are single-threaded unless ``threads > 1``. A warm-up query runs
    first so that compilation never lands inside a timed section.
    """
    truth_ids = truth.ids if isinstance(truth, GroundTruth) else np.asarray(truth)
    k = truth_ids.shape[1] if k is None else k
    if k > truth_ids.shape[1]:
        raise ContractViolation(f"evaluation k={k} exceeds ground-truth width {truth_ids.shape[1]}")
    truth_ids = truth_ids[:, :k]
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    records = []
    for l in pool_sizes:
        _check(l, k)
        _run(index, data, queries[:1], l, k, 1)
        t0 = time.perf_counter()
        ids, _, stats = _run(index, data, queries, l, k, threads)
        elapsed = max(time.perf_counter() - t0, 1e-9)
        records.append(
            EvalRecord(
                l=int(l),
                precision=mean_precision(ids, truth_ids),
                qps=len(queries) / elapsed,
                mean_hops=float(stats[:, 0].mean()),
                mean_dist_comps=float(stats[:, 1].mean()),
                threads=threads,
            )
        )
    if not precision_monotone(records):
        log.warning("precision is not non-decreasing in the pool size: %s", [r.precision for r in records])
    return records


def precision_monotone(records: Sequence[EvalRecord]) -> bool:
    ordered = sorted(records, key=lambda r: r.l)
    return all(a.precision <= b.precision for a, b in zip(ordered, ordered[1:]))


def qps_at(records: Sequence[EvalRecord], target: float) -> float:
    """Best QPS among records reaching ``target`` precision; 0.0 if none does."""
    ok = [r.qps for r in records if r.precision >= target]
    return max(ok) if ok else 0.0


def _indexed_ids(data: np.ndarray, queries: np.ndarray) -> np.ndarray:
    rows = {}
    for i, row in enumerate(np.ascontiguousarray(data, dtype=np.float32)):
        rows.setdefault(row.tobytes(), i)
    out = []
    for qi, q in enumerate(np.ascontiguousarray(queries, dtype=np.float32)):
        i = rows.get(q.tobytes())
        if i is None:
            raise ContractViolation(f"indexed query {qi} is not a dataset point")
        out.append(i)
    return np.array(out, dtype=np.int64)


def path_length_experiment(
    graph: AdjacencyGraph,
    data: np.ndarray,
    indexed_queries: np.ndarray,
    unindexed_queries: np.ndarray,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean greedy path lengths (L_indexed, L_unindexed) from seeded random starts.

    An indexed walk ends on the query itself. An unindexed walk heads for the
    query and, once it stalls, continues greedily toward the query's exact
    nearest neighbor; its length counts every move of both legs.
    """
    targets = _indexed_ids(data, indexed_queries)
    assert_unindexed(data, unindexed_queries)
    n = graph.n
    if n < 2:
        raise ContractViolation("path lengths need at least two nodes")
    rng = np.random.default_rng(seed)
    hops = []
    for t in targets:
        start = (t + rng.integers(1, n)) % n
        hops.append(greedy_walk(graph.ids, graph.degree, data, start, data[t]).size - 1)
    l_indexed = float(np.mean(hops)) if hops else math.nan
    hops = []
    for q in np.ascontiguousarray(unindexed_queries, dtype=np.float32):
        nearest = exact_knn(data, q, 1)[0][0]
        path = greedy_walk(graph.ids, graph.degree, data, rng.integers(n), q)
        rest = greedy_walk(graph.ids, graph.degree, data, path[-1], data[nearest])
        hops.append(path.size - 1 + rest.size - 1)
    l_unindexed = float(np.mean(hops)) if hops else math.nan
    return l_indexed, l_unindexed


@dataclass
class SweepRow:
    alpha: float
    mean_degree: float
    l: int
    precision: float
    qps: float
    mean_hops: float
    mean_dist_comps: float


def alpha_sweep(
    data: np.ndarray,
    alphas: Sequence[float],
    queries: np.ndarray,
    truth: GroundTruth,
    pool_sizes: Sequence[int],
    knn: KnnGraph,
    l: int = 100,
    r: int = 50,
    s: int = 10,
    seed: int = 0,
) -> tuple[dict[float, NssgIndex], list[SweepRow]]:
    """Build one NSSG per angle from the same K-NN graph and evaluate each."""
    indices, rows = {}, []
    for a in alphas:
        idx = build_nssg(data, KnnCandidates(knn, data), l=l, r=r, s=s, alpha=a, seed=seed)
        indices[a] = idx
        for rec in qps_curve(idx, data, queries, truth, pool_sizes):
            rows.append(
                SweepRow(float(a), idx.graph.mean_degree, rec.l, rec.precision, rec.qps, rec.mean_hops, rec.mean_dist_comps)
            )
    return indices, rows


@dataclass
class ScalingRow:
    n: int
    edge_selection_seconds: float
    l: int
    precision: float
    mean_hops: float


def _warm_build(data, params):
    # compile every kernel on a toy prefix before anything is timed
    x = np.ascontiguousarray(data[: min(64, data.shape[0])])
    k = min(params["knn_k"], x.shape[0] - 1)
    build_nssg(x, KnnCandidates(exact_knn_graph(x, k), x), l=params["l"], r=params["r"], s=1, alpha=params["alpha"])


def scaling_experiment(
    data: np.ndarray,
    queries: np.ndarray,
    sizes: Sequence[int],
    k: int = 10,
    target: float = 0.99,
    pool_sizes: Sequence[int] = (10, 20, 30, 40, 50, 60, 80, 100, 150, 200, 300, 400, 500),
    knn_k: int = 50,
    l: int = 100,
    r: int = 50,
    s: int = 10,
    alpha: float = 60.0,
    seed: int = 0,
    repeats: int = 1,
    keep: list | None = None,
) -> list[ScalingRow]:
    """For each prefix size: time the edge-selection stage (K-NN construction excluded),
    then the smallest listed pool size reaching ``target`` precision and its mean hops.

    The reported time is the fastest of ``repeats`` identical builds. Rows with
    no pool size reaching the target report the largest one. Built indices are
    appended to ``keep`` with their data prefix when it is given.
    """
    if list(sizes) != sorted(sizes) or sizes[-1] > data.shape[0]:
        raise ContractViolation("sizes must ascend and not exceed the dataset size")
    params = dict(knn_k=knn_k, l=l, r=r, alpha=alpha)
    _warm_build(data, params)
    rows = []
    for n in sizes:
        x = np.ascontiguousarray(data[:n])
        knn = exact_knn_graph(x, min(knn_k, n - 1))
        seconds = math.inf
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            idx = build_nssg(x, KnnCandidates(knn, x), l=l, r=r, s=s, alpha=alpha, seed=seed)
            seconds = min(seconds, time.perf_counter() - t0)
        if keep is not None:
            keep.append((idx, x))
        truth = ground_truth(x, queries, k)
        chosen = None
        for p in pool_sizes:
            if p < k:
                continue
            (rec,) = qps_curve(idx, x, queries, truth, [p])
            chosen = rec
            if rec.precision >= target:
                break
        rows.append(ScalingRow(n, seconds, chosen.l, chosen.precision, chosen.mean_hops))
    return rows


def loglog_slope(xs: Iterable[float], ys: Iterable[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(list(xs)), np.log(list(ys)), 1)[0])


@dataclass
class OverlapRow:
    fraction: float
    acc1: float
    acck: float
    overlap: float
    mean_degree: float


def overlap_experiment(
    data: np.ndarray,
    reference: AdjacencyGraph,
    knn: KnnGraph,
    fractions: Sequence[float] = (0.0, 0.05, 0.10, 0.15),
    l: int = 100,
    r: int = 50,
    s: int = 10,
    alpha: float = 60.0,
    seed: int = 0,
    keep: list | None = None,
) -> list[OverlapRow]:
    """Edge overlap of NSSGs built from increasingly corrupted K-NN graphs with ``reference``.

    ``knn`` should be exact; fraction 0 uses it unchanged. Built indices are
    appended to ``keep`` when it is given.
    """
    rows = []
    for f in fractions:
        approx = knn if f == 0 else degrade(knn, data, f, seed=seed)
        acc1, acck = knn_accuracy(approx, data, exact=knn)
        idx = build_nssg(data, KnnCandidates(approx, data), l=l, r=r, s=s, alpha=alpha, seed=seed)
        if keep is not None:
            keep.append(idx)
        rows.append(OverlapRow(float(f), acc1, acck, edge_overlap(idx.graph, reference), idx.graph.mean_degree))
    return rows


def write_csv(path, rows: Sequence) -> None:
    """Write dataclass rows with a fixed header in the given order."""
    if not rows:
        raise ContractViolation("nothing to write")
    names = [f.name for f in fields(rows[0])]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for row in rows:
            w.writerow(asdict(row))
