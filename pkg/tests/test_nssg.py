import struct

import numpy as np
import pytest

from ssg import (
    ExactCandidates,
    KnnCandidates,
    as_dataset,
    build_nssg,
    build_ssg_exact,
    deserialize,
    exact_knn_graph,
    gaussian_mixture,
    serialize,
)
from ssg.dataset import jitter
from ssg.errors import ContractViolation, FormatError, ValidationError
from ssg.graph import AdjacencyGraph
from ssg.kernels import sqdist
from ssg.nssg import MAGIC, dfs_span, gather_candidates, prune_candidates, reverse_insert, select_navigating
from ssg.ssg import min_edge_angles


def with_lengths(rows, x, cap=None):
    d = [[sqdist(x[i], x[j]) for j in row] for i, row in enumerate(rows)]
    return AdjacencyGraph.from_rows(rows, d, cap=cap)


@pytest.fixture(scope="module")
def mix():
    x = gaussian_mixture(1000, 16, seed=21)
    return x, exact_knn_graph(x, 20)


@pytest.fixture(scope="module")
def built(mix):
    x, knn = mix
    return build_nssg(x, KnnCandidates(knn, x), l=100, r=30, s=5, alpha=60.0, seed=3)


def two_hop(knn, i):
    out = set(knn.ids[i].tolist())
    for j in knn.ids[i]:
        out |= set(knn.ids[j].tolist())
    out.discard(i)
    return out


def test_gather_l1_is_first_expansion(mix):
    x, knn = mix
    first = int(knn.ids[7, 0])
    expect = ({first} | set(knn.ids[first].tolist())) - {7}
    assert set(gather_candidates(knn, 7, 1, x).tolist()) == expect


def test_gather_large_l_is_full_two_hop(mix):
    x, knn = mix
    for i in (0, 500, 999):
        assert set(gather_candidates(knn, i, 20 + 400, x).tolist()) == two_hop(knn, i)


def test_gather_pool_properties(mix):
    x, knn = mix
    src = KnnCandidates(knn, x)
    for i in range(0, 1000, 37):
        pool, d = src.candidates(i, 100)
        hop = two_hop(knn, i)
        assert set(pool.tolist()) <= hop
        assert pool.size >= min(100, len(hop))
        assert np.unique(pool).size == pool.size and i not in pool
        assert list(zip(d, pool)) == sorted(zip(d, pool))
    with pytest.raises(ContractViolation):
        gather_candidates(knn, 0, 0, x)


def test_prune_single_candidate():
    x = as_dataset(np.random.default_rng(0).normal(size=(10, 3)))
    assert prune_candidates(0, [4], 60.0, 5, x).tolist() == [4]


def test_prune_full_pool_equals_exact_row():
    x = jitter(as_dataset(np.random.default_rng(1).uniform(size=(150, 4))))
    ssg = build_ssg_exact(x, 45.0)
    src = ExactCandidates(x)
    for i in range(0, 150, 7):
        pool, d = src.candidates(i, 149)
        for r in (3, 200):
            kept = prune_candidates(i, pool, 45.0, r, x, d)
            assert kept.tolist() == ssg.neighbors(i)[:r].tolist()


def test_reverse_insert_symmetric_unchanged():
    x = as_dataset([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    g = with_lengths([[1, 2], [0], [0], []], x, cap=3)
    assert reverse_insert(g, 60.0, 3, x).same_structure(g)


def test_reverse_insert_adds_back_edge():
    x = as_dataset([[0.0], [1.0]])
    out = reverse_insert(with_lengths([[1], []], x), 60.0, 2, x)
    assert out.neighbors(1).tolist() == [0]


def test_reverse_insert_respects_cap_and_grows(mix):
    x, knn = mix
    rows = [prune_candidates(i, knn.ids[i], 60.0, 10, x) for i in range(x.shape[0])]
    g = with_lengths([r.tolist() for r in rows], x, cap=10)
    out = reverse_insert(g, 60.0, 10, x)
    out.validate()
    assert out.max_degree <= 10
    assert out.mean_degree >= g.mean_degree
    assert min_edge_angles(out, x).min() >= 60.0 - 1e-6
    with pytest.raises(ContractViolation):
        reverse_insert(g, 60.0, 5, x)


def test_select_navigating():
    assert sorted(select_navigating(7, 7, seed=1).tolist()) == list(range(7))
    a, b = select_navigating(1000, 10, seed=4), select_navigating(1000, 10, seed=4)
    assert np.array_equal(a, b) and np.unique(a).size == 10
    with pytest.raises(ContractViolation):
        select_navigating(5, 6, seed=0)
    with pytest.raises(ContractViolation):
        select_navigating(5, 0, seed=0)


def test_dfs_span_connected_graph_unchanged():
    x = as_dataset(np.random.default_rng(2).normal(size=(6, 2)))
    g = with_lengths([[(i + 1) % 6] for i in range(6)], x, cap=3)
    assert dfs_span(g, 0, x).same_structure(g)


def test_dfs_span_joins_two_cliques():
    rng = np.random.default_rng(3)
    x = as_dataset(np.vstack([rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + 100.0]))
    rows = [[j for j in range(5) if j != i] for i in range(5)] + [[j for j in range(5, 10) if j != i] for i in range(5, 10)]
    g = with_lengths(rows, x, cap=5)
    out = dfs_span(g, 0, x)
    assert out.reachable(0).all()
    assert out.num_edges == g.num_edges + 1
    # the bridge starts at the reached node nearest to the first orphan
    d = [sqdist(x[v], x[5]) for v in range(5)]
    assert 5 in out.neighbors(int(np.argmin(d))).tolist()


def test_dfs_span_evicts_only_plain_edges():
    rng = np.random.default_rng(4)
    x = as_dataset(np.vstack([rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 50.0]))
    rows = [[j for j in range(4) if j != i] for i in range(4)] + [[j for j in range(4, 8) if j != i] for i in range(4, 8)]
    out = dfs_span(with_lengths(rows, x, cap=3), 0, x)
    assert out.reachable(0).all() and out.max_degree <= 3
    with pytest.raises(ContractViolation):
        dfs_span(with_lengths(rows, x, cap=3), 8, x)


def test_build_two_points():
    x = as_dataset([[0.0, 0.0], [1.0, 1.0]])
    idx = build_nssg(x, ExactCandidates(x), l=5, r=2, s=1)
    assert idx.graph.neighbors(0).tolist() == [1] and idx.graph.neighbors(1).tolist() == [0]


def test_full_oracle_pool_contains_exact_rows():
    x = jitter(as_dataset(np.random.default_rng(5).uniform(size=(200, 3))))
    ssg = build_ssg_exact(x, 60.0)
    idx = build_nssg(x, ExactCandidates(x), l=199, r=ssg.max_degree + 10, s=3, alpha=60.0)
    for i in range(200):
        assert set(ssg.neighbors(i).tolist()) <= set(idx.graph.neighbors(i).tolist())


def test_built_index_invariants(built):
    g = built.graph
    g.validate()
    assert g.max_degree <= 30 and built.s == 5
    for root in built.navigating:
        assert g.reachable(int(root)).all()


def test_build_deterministic(mix, built):
    x, knn = mix
    again = build_nssg(x, KnnCandidates(knn, x), l=100, r=30, s=5, alpha=60.0, seed=3)
    assert again.same_structure(built)


def test_serialize_round_trip(tmp_path, built):
    path = tmp_path / "a.nssg"
    serialize(built, path)
    back = deserialize(path)
    assert back.same_structure(built)
    assert back.l is None and back.seed is None
    size = 40 + 4 * built.s + sum(4 + 4 * int(d) for d in built.graph.degree)
    assert path.stat().st_size == size
    serialize(back, tmp_path / "b.nssg")
    assert (tmp_path / "b.nssg").read_bytes() == path.read_bytes()


def test_deserialize_rejects_damage(tmp_path, built):
    path = tmp_path / "a.nssg"
    serialize(built, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.nssg"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        deserialize(bad)
    bad.write_bytes(raw[:4] + struct.pack("<I", 99) + raw[8:])
    with pytest.raises(FormatError, match="version"):
        deserialize(bad)
    for cut in (10, len(raw) - 4, len(raw) - 2):
        bad.write_bytes(raw[:cut])
        with pytest.raises(FormatError):
            deserialize(bad)
    assert raw[:4] == MAGIC


def test_deserialize_rejects_degree_over_r(tmp_path):
    x = as_dataset([[0.0], [1.0]])
    idx = build_nssg(x, ExactCandidates(x), l=1, r=1, s=1)
    path = tmp_path / "x.nssg"
    serialize(idx, path)
    raw = bytearray(path.read_bytes())
    raw[44:48] = struct.pack("<I", 2)
    path.write_bytes(bytes(raw) + b"\0" * 4)
    with pytest.raises(ValidationError):
        deserialize(path)
