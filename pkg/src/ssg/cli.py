"""``ssg`` command line: data generation, index building, search and benchmarks."""
from __future__ import annotations

import sys
from dataclasses import make_dataclass
from pathlib import Path

import click
import numpy as np

from . import bench
from .dataset import (
    as_dataset,
    checksum,
    gaussian_mixture,
    ivecs_matrix,
    load_fvecs,
    load_ivecs,
    save_fvecs,
    save_ivecs,
)
from .errors import ContractViolation, SSGError
from .knn import KnnGraph, exact_knn_graph, nn_descent
from .nssg import KnnCandidates, NssgIndex, build_nssg, deserialize, serialize
from .oracle import GroundTruth, ground_truth, verify_monotonic
from .search import ShardedIndex, partition, search_batch, sharded_search_batch
from .ssg import build_ssg_exact, truncate


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


data_opt = click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="base vectors (.fvecs)")
query_opt = click.option("--query", "query_path", required=True, type=click.Path(exists=True, dir_okay=False), help="query vectors (.fvecs)")
out_opt = click.option("--out", required=True, type=click.Path(dir_okay=False), help="output path")
seed_opt = click.option("--seed", default=0, show_default=True, type=int)


def _shard_paths(out: str, shards: int) -> list[Path]:
    return [Path(f"{out}.shard{s}") for s in range(shards)]


def _load_knn(path, data) -> KnnGraph:
    return KnnGraph.from_ids(ivecs_matrix(load_ivecs(path)), data)


class _Cli(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (SSGError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)


@click.group(cls=_Cli)
def main():
    """Build, search and benchmark SSG and NSSG graph indices."""


@main.command("gen-data")
@click.option("--n", default=10000, show_default=True)
@click.option("--d", default=128, show_default=True)
@click.option("--intrinsic", default=16, show_default=True, help="latent dimension")
@click.option("--clusters", default=16, show_default=True)
@click.option("--spread", default=1.0, show_default=True, help="standard deviation of cluster centers")
@click.option("--queries", default=1000, show_default=True, help="held-out query count")
@seed_opt
@out_opt
@click.option("--query", "query_out", required=True, type=click.Path(dir_okay=False), help="query output (.fvecs)")
def gen_data(n, d, intrinsic, clusters, spread, queries, seed, out, query_out):
    """Seeded Gaussian-mixture base and query sets drawn from one distribution."""
    x = gaussian_mixture(n + queries, d, intrinsic_dim=intrinsic, clusters=clusters, spread=spread, seed=seed)
    save_fvecs(out, x[:n])
    save_fvecs(query_out, x[n:])
    click.echo(f"wrote {n} base and {queries} query vectors of dimension {d}")


@main.command()
@data_opt
@query_opt
@click.option("--k", default=100, show_default=True)
@out_opt
def gt(data_path, query_path, k, out):
    """Exact k nearest neighbors of every query (.ivecs)."""
    truth = ground_truth(load_fvecs(data_path), load_fvecs(query_path), k)
    save_ivecs(out, truth.ids)


@main.command("build-knn")
@data_opt
@click.option("--k", default=50, show_default=True)
@click.option("--exact", is_flag=True, help="brute force instead of nn-descent")
@click.option("--iters", default=12, show_default=True)
@seed_opt
@out_opt
def build_knn(data_path, k, exact, iters, seed, out):
    """K-NN graph (.ivecs), by nn-descent unless --exact."""
    x = load_fvecs(data_path)
    knn = exact_knn_graph(x, k) if exact else nn_descent(x, k=k, iters=iters, seed=seed)
    save_ivecs(out, knn.ids)


@main.command("build-ssg")
@data_opt
@click.option("--alpha", default=60.0, show_default=True, help="minimum angle in degrees")
@click.option("--r", default=0, show_default=True, help="truncate rows to r edges (0 keeps all)")
@out_opt
def build_ssg(data_path, alpha, r, out):
    """Exact SSG over all pairs, stored as an index without navigating nodes (search enters at node 0)."""
    x = load_fvecs(data_path)
    g = build_ssg_exact(x, alpha)
    if r:
        g = truncate(g, x, r)
    idx = NssgIndex(g, np.zeros(0, dtype=np.int32), alpha, g.cap, x.shape[1], checksum(x))
    serialize(idx, out)
    click.echo(f"mean degree {g.mean_degree:.3f}, max degree {g.max_degree}")


@main.command("build-nssg")
@data_opt
@click.option("--knn", "knn_path", type=click.Path(exists=True, dir_okay=False), help="K-NN graph (.ivecs); nn-descent if absent")
@click.option("--k", default=50, show_default=True, help="K for nn-descent")
@click.option("--l", default=100, show_default=True, help="candidate pool size")
@click.option("--r", default=50, show_default=True, help="maximum out-degree")
@click.option("--s", default=10, show_default=True, help="navigating nodes")
@click.option("--alpha", default=60.0, show_default=True)
@click.option("--shards", default=1, show_default=True, help="independent indices over a random partition")
@seed_opt
@out_opt
def build_nssg_cmd(data_path, knn_path, k, l, r, s, alpha, shards, seed, out):
    """NSSG index file (or OUT.shardN files plus OUT.parts when --shards > 1)."""
    x = load_fvecs(data_path)

    def build(data, knn=None):
        knn = knn if knn is not None else nn_descent(data, k=min(k, data.shape[0] - 1), seed=seed)
        return build_nssg(data, KnnCandidates(knn, data), l=l, r=r, s=s, alpha=alpha, seed=seed)

    if shards == 1:
        idx = build(x, _load_knn(knn_path, x) if knn_path else None)
        serialize(idx, out)
        click.echo(f"mean degree {idx.graph.mean_degree:.3f}, max degree {idx.graph.max_degree}")
        return
    if knn_path:
        raise ContractViolation("--knn cannot be combined with --shards")
    parts = partition(x.shape[0], shards, seed)
    for p, path in zip(parts, _shard_paths(out, shards)):
        serialize(build(as_dataset(x[p])), path)
    save_ivecs(f"{out}.parts", parts)


def _load_sharded(index_path, x, shards) -> ShardedIndex:
    parts = [p.astype(np.int64) for p in load_ivecs(f"{index_path}.parts")]
    if len(parts) != shards:
        raise ContractViolation(f"{index_path}.parts lists {len(parts)} shards, expected {shards}")
    data = [as_dataset(x[p]) for p in parts]
    return ShardedIndex([deserialize(p) for p in _shard_paths(index_path, shards)], parts, data)


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path(dir_okay=False))
@data_opt
@query_opt
@click.option("--l", default=100, show_default=True)
@click.option("--k", default=10, show_default=True)
@click.option("--shards", default=1, show_default=True)
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False), help="per-query counters (CSV)")
@out_opt
def search(index_path, data_path, query_path, l, k, shards, stats_path, out):
    """Top-k ids for every query (.ivecs)."""
    x, q = load_fvecs(data_path), load_fvecs(query_path)
    if shards > 1:
        ids, stats = sharded_search_batch(_load_sharded(index_path, x, shards), q, l, k)
    else:
        idx = deserialize(index_path)
        if idx.checksum != checksum(x):
            raise ContractViolation("index was built over a different dataset")
        ids, _, stats = search_batch(idx, x, q, l, k)
    save_ivecs(out, ids)
    if stats_path:
        Row = make_dataclass("Row", ["query_id", "hops", "dist_comps", "visited"])
        bench.write_csv(stats_path, [Row(q, *map(int, st)) for q, st in enumerate(stats)])
    click.echo(f"mean hops {stats[:, 0].mean():.2f}, mean distance computations {stats[:, 1].mean():.1f}")


@main.command("eval")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@data_opt
@query_opt
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", default="10,20,40,60,80,100,150,200,300,500", show_default=True, help="pool sizes l")
@click.option("--k", default=10, show_default=True)
@click.option("--threads", default=1, show_default=True, help=">1 reports parallel throughput")
@out_opt
def eval_cmd(index_path, data_path, query_path, gt_path, pool, k, threads, out):
    """Precision and QPS per pool size (CSV)."""
    x, q = load_fvecs(data_path), load_fvecs(query_path)
    truth = ivecs_matrix(load_ivecs(gt_path))
    records = bench.qps_curve(deserialize(index_path), x, q, truth, _ints(pool), k=k, threads=threads)
    bench.write_csv(out, records)
    for rec in records:
        click.echo(f"l={rec.l} precision={rec.precision:.4f} qps={rec.qps:.0f}")


@main.command("path-lengths")
@data_opt
@query_opt
@click.option("--alpha", default="30,60", show_default=True, help="comma-separated angles")
@click.option("--r", default=0, show_default=True, help="truncate rows to r edges (0 keeps all)")
@click.option("--indexed", default=1000, show_default=True, help="indexed queries sampled from the data")
@seed_opt
@out_opt
def path_lengths(data_path, query_path, alpha, r, indexed, seed, out):
    """Indexed and unindexed greedy path lengths on exact SSGs (CSV)."""
    Row = make_dataclass("Row", ["alpha", "max_degree_cap", "aod", "mod", "l_indexed", "l_unindexed"])
    x, q = load_fvecs(data_path), load_fvecs(query_path)
    picks = np.random.default_rng(seed).choice(x.shape[0], size=min(indexed, x.shape[0]), replace=False)
    rows = []
    for a in _floats(alpha):
        g = build_ssg_exact(x, a)
        if r:
            g = truncate(g, x, r)
        li, lu = bench.path_length_experiment(g, x, x[picks], q, seed=seed)
        rows.append(Row(a, r, g.mean_degree, g.max_degree, li, lu))
        click.echo(f"alpha={a} AOD={g.mean_degree:.2f} L_indexed={li:.3f} L_unindexed={lu:.3f}")
    bench.write_csv(out, rows)


@main.command("alpha-sweep")
@data_opt
@query_opt
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", default="30,45,60", show_default=True)
@click.option("--pool", default="10,20,40,60,80,100,150,200,300,500", show_default=True)
@click.option("--k", default=10, show_default=True)
@click.option("--knn-k", default=50, show_default=True)
@click.option("--l", default=100, show_default=True)
@click.option("--r", default=50, show_default=True)
@click.option("--s", default=10, show_default=True)
@seed_opt
@out_opt
def alpha_sweep(data_path, query_path, gt_path, alpha, pool, k, knn_k, l, r, s, seed, out):
    """One NSSG per angle over a shared exact K-NN graph, evaluated per pool size (CSV)."""
    x, q = load_fvecs(data_path), load_fvecs(query_path)
    truth = ivecs_matrix(load_ivecs(gt_path))[:, :k]
    knn = exact_knn_graph(x, knn_k)
    _, rows = bench.alpha_sweep(
        x, _floats(alpha), q, GroundTruth(truth, np.zeros(truth.shape)), _ints(pool), knn, l=l, r=r, s=s, seed=seed
    )
    bench.write_csv(out, rows)


@main.command()
@data_opt
@query_opt
@click.option("--sizes", default="1000,2000,4000,8000", show_default=True)
@click.option("--k", default=10, show_default=True)
@seed_opt
@out_opt
def scaling(data_path, query_path, sizes, k, seed, out):
    """Edge-selection time and hops at 0.99 precision over dataset prefixes (CSV)."""
    rows = bench.scaling_experiment(load_fvecs(data_path), load_fvecs(query_path), _ints(sizes), k=k, seed=seed)
    bench.write_csv(out, rows)
    slope = bench.loglog_slope([row.n for row in rows], [row.edge_selection_seconds for row in rows])
    click.echo(f"edge-selection log-log slope {slope:.3f}")


@main.command()
@data_opt
@click.option("--alpha", default=60.0, show_default=True)
@click.option("--fractions", default="0,0.05,0.1,0.15", show_default=True, help="per-entry corruption rates")
@click.option("--knn-k", default=50, show_default=True)
@click.option("--l", default=100, show_default=True)
@click.option("--r", default=50, show_default=True)
@click.option("--s", default=10, show_default=True)
@seed_opt
@out_opt
def overlap(data_path, alpha, fractions, knn_k, l, r, s, seed, out):
    """Edge overlap of NSSGs over degraded K-NN graphs with the truncated exact SSG (CSV)."""
    x = load_fvecs(data_path)
    reference = truncate(build_ssg_exact(x, alpha), x, r)
    rows = bench.overlap_experiment(
        x, reference, exact_knn_graph(x, knn_k), _floats(fractions), l=l, r=r, s=s, alpha=alpha, seed=seed
    )
    bench.write_csv(out, rows)
    for row in rows:
        click.echo(f"acc1={row.acc1:.3f} acc{knn_k}={row.acck:.3f} overlap={row.overlap:.4f}")


@main.command("verify-monotonic")
@data_opt
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False), help="check this graph instead of an exact SSG")
@click.option("--alpha", default=60.0, show_default=True)
@click.option("--pairs", default=100000, show_default=True, help="pair budget; all pairs when it covers n(n-1)")
@seed_opt
def verify_monotonic_cmd(data_path, index_path, alpha, pairs, seed):
    """Greedy-walk (start, target) pairs and count walks that stall short of the target."""
    x = load_fvecs(data_path)
    g = deserialize(index_path).graph if index_path else build_ssg_exact(x, alpha)
    report = verify_monotonic(g, x, pairs, seed)
    click.echo(f"{report.failures} failures over {report.pairs} pairs")
    if not report.ok:
        sys.exit(1)
