import numpy as np
import pytest
from conftest import XG, XL, gaussian, x
from hypothesis import given, settings
from hypothesis import strategies as st

from conjgraph.dataset import VectorDataset, distance
from conjgraph.graph import (
    BuildParams,
    ProximityGraph,
    PruneRule,
    build,
    complete_graph,
    greedy_search,
    prune,
)
from conjgraph.oracle import exact_knn, global_optimum, ground_truth, recall_at_k


def naive_greedy(ds, adj, init, q, L):
    """Reference beam search: rescans the whole pool every step."""
    q = np.asarray(q, dtype=np.float64)
    dist = {}

    def d(i):
        if i not in dist:
            dist[i] = distance(ds.metric, ds.data[i], q)
        return dist[i]

    pool = sorted({(d(i), i) for i in init})[:L]
    expanded = set()
    while True:
        todo = [p for p in pool if p[1] not in expanded]
        if not todo:
            break
        c = min(todo)[1]
        expanded.add(c)
        for v in adj[c]:
            if v in dist:
                continue
            item = (d(v), v)
            if len(pool) < L or item < max(pool):
                pool = sorted(pool + [item])[:L]
    return pool, set(dist)


def random_graph(n, deg, seed):
    rng = np.random.default_rng(seed)
    adj = []
    for u in range(n):
        others = np.delete(np.arange(n), u)
        adj.append(rng.choice(others, size=min(deg, n - 1), replace=False).tolist())
    return ProximityGraph(adj, deg, 0)


def test_chain_trace():
    ds = VectorDataset(np.array([[0.0], [1.0], [2.0], [4.0]]))
    G = ProximityGraph([[1], [0, 2], [1, 3], [2]], r=2, entry=0)
    out = greedy_search(G, ds, [4.1], L=2, k=1)
    assert out.local_optimum == 3
    assert out.local_optimum == global_optimum(ds, [4.1])
    assert out.visited == {0, 1, 2, 3}


def test_trap_converges_to_local_optimum(trap):
    ds, G, q = trap
    out = greedy_search(G, ds, q, L=4, k=4, init=[x(1)])
    assert out.ids == [XL, x(6), x(4), x(5)]
    assert XG not in out.visited
    assert global_optimum(ds, q) == XG
    # only the nodes reached along the stalled route were ever scored
    assert out.visited == {x(1), x(2), x(7), x(8), x(3), x(9), x(4), x(5), x(6), XL}
    # a wide enough beam escapes the trap
    assert greedy_search(G, ds, q, L=8, k=1, init=[x(1)]).local_optimum == XG


def test_trap_pool_after_two_expansions(trap):
    ds, G, q = trap
    # cut the graph after x2's expansion to observe the intermediate pool
    adj = [list(a) for a in G.adjacency]
    adj[x(3)] = []
    adj[x(9)] = []
    adj[x(7)] = []
    pool = greedy_search(ProximityGraph(adj, 6, x(1)), ds, q, L=4, k=4, init=[x(1)])
    assert pool.ids == [x(3), x(9), x(2), x(7)]


@pytest.mark.parametrize("seed", range(5))
def test_complete_graph_equals_exact(seed):
    ds = gaussian(40, 5, seed)
    G = complete_graph(ds.n)
    q = np.random.default_rng(seed + 100).standard_normal(5)
    got = greedy_search(G, ds, q, L=ds.n, k=10)
    assert got.results == exact_knn(ds, q, 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 6), st.integers(1, 20))
def test_matches_reference_search(seed, n, deg, L):
    ds = gaussian(n, 3, seed)
    G = random_graph(n, deg, seed)
    q = np.random.default_rng(seed + 1).standard_normal(3)
    init = [0, n // 2]
    out = greedy_search(G, ds, q, L=L, k=1, init=init)
    ref_pool, ref_visited = naive_greedy(ds, G.adjacency, init, q, L)
    assert out.visited == ref_visited
    assert out.local_optimum == ref_pool[0][1]
    full = greedy_search(G, ds, q, L=L, k=min(L, len(ref_pool)), init=init)
    assert full.ids == [i for _, i in ref_pool]


def test_search_rejects_bad_arguments(trap):
    ds, G, q = trap
    with pytest.raises(ValueError):
        greedy_search(G, ds, q, L=2, k=3)
    with pytest.raises(ValueError):
        greedy_search(G, ds, q, L=2, k=1, init=[])
    with pytest.raises(ValueError):
        greedy_search(G, ds, q, L=2, k=1, init=[99])


def test_prune_collinear():
    ds = VectorDataset(np.array([[0.0], [1.0], [2.0], [3.0]]))
    cands = [(1, 1.0), (2, 2.0), (3, 3.0)]
    assert prune(ds, 0, cands, r=3, alpha=1.0) == [1]
    assert prune(ds, 0, cands, r=3, rule=PruneRule.MRNG) == [1]


def test_prune_degree_cap():
    ds = VectorDataset(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
    assert prune(ds, 0, [(1, 1.0), (2, 1.0), (3, 1.0)], r=1) == [1]
    assert prune(ds, 0, [(1, 1.0), (2, 1.0), (3, 1.0)], r=3, alpha=1.0) == [1, 2, 3]


def test_prune_skips_self_and_duplicates():
    ds = VectorDataset(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]))
    assert prune(ds, 0, [(0, 0.0), (1, 1.0), (1, 1.0), (2, 2.0)], r=5, alpha=1.0) == [1, 2]


@pytest.mark.parametrize("seed", range(5))
def test_prune_no_kept_pair_occludes(seed):
    rng = np.random.default_rng(seed)
    ds = VectorDataset(rng.standard_normal((51, 6)))
    q = ds.vector(0)
    cands = sorted((float(d), i) for i, d in zip(range(1, 51), ds.distances(q, list(range(1, 51)))))
    kept = prune(ds, 0, [(i, d) for d, i in cands], r=50, alpha=1.0)
    dq = {i: d for d, i in cands}
    for a, s in enumerate(kept):
        for c in kept[a + 1:]:
            assert not distance("euclidean", ds.data[s], ds.data[c]) < dq[c]
    # everything dropped is occluded by something kept before it
    for d, c in cands:
        if c not in kept:
            assert any(distance("euclidean", ds.data[s], ds.data[c]) < d for s in kept if dq[s] <= d)


def test_alpha_keeps_more_edges():
    ds = gaussian(80, 8, 9)
    q = ds.vector(0)
    ids = list(range(1, 80))
    cands = sorted(zip(ds.distances(q, ids).tolist(), ids))
    tight = prune(ds, 0, [(i, d) for d, i in cands], r=79, alpha=1.0)
    loose = prune(ds, 0, [(i, d) for d, i in cands], r=79, alpha=1.5)
    # the nearest candidate always survives; a looser alpha keeps more edges overall
    assert tight[0] == loose[0] == cands[0][1]
    assert len(loose) > len(tight)


def test_build_params_validation():
    with pytest.raises(ValueError):
        BuildParams(L1=5, r=12)
    with pytest.raises(ValueError):
        BuildParams(alpha=0.9)
    assert BuildParams(prune_rule="mrng").prune_rule is PruneRule.MRNG


def test_build_single_point():
    G, log = build(VectorDataset(np.array([[1.0, 2.0]])), BuildParams(L1=12, r=12))
    assert G.adjacency == [[]]
    assert len(log) == 1 and log[0] == []
    assert G.entry == 0


@pytest.mark.parametrize("rule", list(PruneRule))
def test_build_degree_bound(rule):
    ds = gaussian(400, 8, 4)
    G, log = build(ds, BuildParams(L1=30, r=6, alpha=1.2, prune_rule=rule))
    G.check()
    assert max(len(a) for a in G.adjacency) <= 6
    assert G.entry == ds.medoid
    assert all(len(log[i]) == min(30, 50) for i in range(2, ds.n) if i > 30)


def test_build_is_deterministic():
    ds = gaussian(300, 6, 8)
    a, la = build(ds, BuildParams(L1=24, r=6), seed=1)
    b, lb = build(ds, BuildParams(L1=24, r=6), seed=1)
    assert a.adjacency == b.adjacency and la.entries == lb.entries


def test_build_recall_on_base_points(built_2000):
    ds, G, _ = built_2000
    ids = np.arange(0, 2000, 10)
    hits = [greedy_search(G, ds, ds.data[i], L=100, k=1).local_optimum == global_optimum(ds, ds.data[i]) for i in ids]
    assert np.mean(hits) >= 0.95


def test_search_determinism_and_visited(built_small):
    ds, G, _ = built_small
    rng = np.random.default_rng(0)
    for q in rng.standard_normal((20, 8)):
        a = greedy_search(G, ds, q, L=20, k=10)
        b = greedy_search(G, ds, q, L=20, k=10)
        assert a.results == b.results and a.visited == b.visited
        assert set(a.ids) <= a.visited
        assert len(a.visited) >= len(a.results)
        dists = [d for _, d in a.results]
        assert dists == sorted(dists)


def test_beam_monotone_on_average(built_small):
    ds, G, _ = built_small
    rng = np.random.default_rng(1)
    qs = (ds.data[rng.choice(ds.n, 300)] + 0.3 * rng.standard_normal((300, 8))).astype(np.float32)
    gt, _ = ground_truth(ds, qs, 1)
    means = []
    for L in (10, 20, 50, 100):
        means.append(np.mean([greedy_search(G, ds, q, L, 1).local_optimum == g[0] for q, g in zip(qs, gt)]))
    for lo, hi in zip(means, means[1:]):
        assert hi >= lo - 0.01


def test_local_optimum_in_knn_when_recall_positive(built_small):
    ds, G, _ = built_small
    rng = np.random.default_rng(2)
    trials = 0
    for q in rng.standard_normal((150, 8)):
        k = int(rng.integers(1, 20))
        L = int(rng.integers(k, 60))
        out = greedy_search(G, ds, q, L, k)
        nn = [i for i, _ in exact_knn(ds, q, k)]
        if recall_at_k(out.ids, nn, k) > 0:
            trials += 1
            assert out.local_optimum in nn
    assert trials > 100
