"""Bounded-degree proximity graph: beam search, occlusion pruning, incremental build."""

from __future__ import annotations

import enum
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import VectorDataset

K_LOG = 50
_PAIRWISE_MAX = 48


class PruneRule(enum.IntEnum):
    RNG_ALPHA = 0
    MRNG = 1

    @classmethod
    def parse(cls, value: "str | int | PruneRule") -> "PruneRule":
        if isinstance(value, PruneRule):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[value.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown prune rule {value!r}") from None


@dataclass(frozen=True)
class BuildParams:
    L1: int = 100
    r: int = 12
    alpha: float = 1.2
    prune_rule: PruneRule = PruneRule.RNG_ALPHA

    def __post_init__(self) -> None:
        object.__setattr__(self, "prune_rule", PruneRule.parse(self.prune_rule))
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.L1 < self.r:
            raise ValueError("L1 must be >= r")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")


@dataclass
class ProximityGraph:
    adjacency: list[list[int]]
    r: int
    entry: int = 0

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def __getitem__(self, node: int) -> list[int]:
        return self.adjacency[node]

    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency)

    def check(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is broken."""
        n = self.n
        assert 0 <= self.entry < n, "entry out of range"
        for u, nbrs in enumerate(self.adjacency):
            assert len(nbrs) <= self.r, f"node {u} has degree {len(nbrs)} > {self.r}"
            assert len(set(nbrs)) == len(nbrs), f"node {u} has duplicate neighbors"
            assert u not in nbrs, f"node {u} has a self-loop"
            assert all(0 <= v < n for v in nbrs), f"node {u} has an out-of-range neighbor"


@dataclass
class SearchOutcome:
    """``results`` are ``(id, distance)`` pairs, nearest first; ``visited`` are
    all ids whose distance to the query was computed."""

    results: list[tuple[int, float]]
    visited: set[int] = field(repr=False)

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.results]

    @property
    def local_optimum(self) -> int:
        return self.results[0][0]


def beam_search(
    ds: VectorDataset, adjacency: Sequence[Sequence[int]], init: Sequence[int], q: np.ndarray, L: int
) -> tuple[list[tuple[float, int]], dict[int, float]]:
    """Core best-first search with a pool bounded at ``L``.

    Returns the final pool as sorted ``(distance, id)`` tuples and a map of every
    id whose distance was computed. ``q`` must already be prepared by the dataset.
    """
    init = list(dict.fromkeys(int(i) for i in init))
    d0 = ds.distances(q, init).tolist()
    known = dict(zip(init, d0))
    pool = sorted(zip(d0, init))[:L]
    expanded: set[int] = set()
    cursor = 0
    while cursor < len(pool):
        c = pool[cursor][1]
        expanded.add(c)
        # every pool slot before `low` is known to be expanded
        low = cursor + 1
        fresh = [v for v in adjacency[c] if v not in known]
        if fresh:
            for v, dv in zip(fresh, ds.distances(q, fresh).tolist()):
                known[v] = dv
                item = (dv, v)
                if len(pool) >= L:
                    if not item < pool[-1]:
                        continue
                    pool.pop()
                pos = bisect_left(pool, item)
                pool.insert(pos, item)
                if pos < low:
                    low = pos
        cursor = low
        while cursor < len(pool) and pool[cursor][1] in expanded:
            cursor += 1
    return pool, known


def greedy_search(
    G: ProximityGraph, ds: VectorDataset, q, L: int, k: int, init: Sequence[int] | None = None
) -> SearchOutcome:
    """Beam search from ``init`` (default: the graph's fixed entry) returning the
    ``k`` nearest pool members."""
    if not 1 <= k <= L:
        raise ValueError(f"need 1 <= k <= L, got k={k}, L={L}")
    if init is None:
        init = [G.entry]
    if len(init) == 0:
        raise ValueError("initial node set is empty")
    if any(not 0 <= int(i) < G.n for i in init):
        raise ValueError("initial node id out of range")
    pool, known = beam_search(ds, G.adjacency, init, ds.prepare_query(q), L)
    return SearchOutcome([(i, d) for d, i in pool[:k]], set(known))


def prune(
    ds: VectorDataset,
    q_id: int,
    candidates: Sequence[tuple[int, float]],
    r: int,
    alpha: float = 1.2,
    rule: PruneRule = PruneRule.RNG_ALPHA,
) -> list[int]:
    """Occlusion pruning of ``candidates`` (``(id, dist_to_q)``, nearest first).

    ``rng_alpha`` drops ``c`` when a kept ``s`` has ``alpha*dis(s, c) < dis(q, c)``;
    ``mrng`` drops ``c`` when a kept ``s`` makes ``(q, c)`` the strictly longest
    side of triangle ``(q, s, c)``.
    """
    rule = PruneRule.parse(rule)
    seen = set()
    ids, dq = [], []
    for c, d in candidates:
        if c == q_id or c in seen:
            continue
        seen.add(c)
        ids.append(c)
        dq.append(d)
    if not ids:
        return []
    dq_arr = np.asarray(dq)
    # small sets (reverse-edge re-prunes) get one pairwise matrix instead of a call per kept node
    mat = ds.pairwise(ids) if len(ids) <= _PAIRWISE_MAX else None
    occluded = np.zeros(len(ids), dtype=bool)
    kept: list[int] = []
    for j, c in enumerate(ids):
        if occluded[j]:
            continue
        kept.append(c)
        if len(kept) >= r:
            break
        rest = slice(j + 1, None)
        dsc = mat[j, j + 1:] if mat is not None else ds.distances(ds.vector(c), ids[j + 1:])
        if rule is PruneRule.RNG_ALPHA:
            occluded[rest] |= alpha * dsc < dq_arr[rest]
        else:
            occluded[rest] |= (dsc < dq_arr[rest]) & (dq_arr[j] < dq_arr[rest])
    return kept


@dataclass
class ConstructionLog:
    """Per-node pre-prune search results, ``(id, distance)`` nearest first."""

    entries: list[list[tuple[int, float]]]

    def __getitem__(self, node: int) -> list[tuple[int, float]]:
        return self.entries[node]

    def __len__(self) -> int:
        return len(self.entries)


def build(
    ds: VectorDataset, params: BuildParams = BuildParams(), seed: int = 0, k_log: int = K_LOG
) -> tuple[ProximityGraph, ConstructionLog]:
    """Insert points in id order, pruning each visited set to ``r`` neighbors.

    Insertion is deterministic; ``seed`` is accepted for interface symmetry and
    recorded by the index file.
    """
    del seed
    n, r = ds.n, params.r
    adj: list[list[int]] = [[] for _ in range(n)]
    log: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    medoid = ds.medoid
    keep = min(params.L1, k_log)
    for i in range(1, n):
        entry = medoid if medoid < i else 0
        pool, known = beam_search(ds, adj, [entry], ds.vector(i), params.L1)
        log[i] = [(v, d) for d, v in pool[:keep]]
        cands = sorted((d, v) for v, d in known.items())
        nbrs = prune(ds, i, [(v, d) for d, v in cands], r, params.alpha, params.prune_rule)
        adj[i] = nbrs
        for v in nbrs:
            adj[v].append(i)
            if len(adj[v]) > r:
                dv = ds.distances(ds.vector(v), adj[v]).tolist()
                order = sorted(zip(dv, adj[v]))
                adj[v] = prune(ds, v, [(u, d) for d, u in order], r, params.alpha, params.prune_rule)
    return ProximityGraph(adj, r, medoid), ConstructionLog(log)


def complete_graph(n: int) -> ProximityGraph:
    adj = [[v for v in range(n) if v != u] for u in range(n)]
    return ProximityGraph(adj, max(n - 1, 1), 0)
