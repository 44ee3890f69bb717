"""Auxiliary per-node edges learned from construction and search logs.

Two edge kinds live here. Construction edges are near neighbors that pruning
dropped from the proximity graph; they fill in k-NN results once a search has
arrived near the query. Routing edges point from a node where searches stall
to the node they should have reached; they are learned from logged searches,
either real traffic or probes synthesized between each base point and one of
its approximate neighbors.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import VectorDataset
from .graph import ConstructionLog, ProximityGraph, SearchOutcome, beam_search

PROBE_K = 10


class Provenance(enum.IntEnum):
    CONSTRUCTION = 0
    GENERATED_LOG = 1
    HISTORICAL_LOG = 2


@dataclass(frozen=True)
class GenParams:
    omega: float = 0.51
    k_g: int = 5
    L2: int = 100

    def __post_init__(self) -> None:
        if not 0.5 < self.omega < 1.0:
            raise ValueError("omega must lie in (0.5, 1)")
        # k_g = 0 disables probe generation and leaves only historical entries
        if self.k_g < 0:
            raise ValueError("k_g must be >= 0")
        if self.L2 < 1:
            raise ValueError("L2 must be >= 1")


@dataclass(frozen=True)
class SearchLogEntry:
    query: np.ndarray
    L2: int
    local_opt: int
    global_opt: int


class ConjugateGraph:
    """Per-node construction edges (nearest first) and directed routing edges.

    ``routing[u]`` maps target id to its provenance. At most ``cap`` generated
    routing edges are kept per source, nearest targets first. Historical edges
    are never evicted: each one records a query that is known to fail.
    """

    def __init__(self, n: int, cap: int) -> None:
        self.cap = cap
        self.construction: list[list[int]] = [[] for _ in range(n)]
        self.routing: list[dict[int, Provenance]] = [{} for _ in range(n)]

    @property
    def n(self) -> int:
        return len(self.construction)

    def neighbors(self, u: int) -> list[int]:
        """Construction and routing targets of ``u``, deduplicated."""
        out = list(self.construction[u])
        out.extend(v for v in self.routing[u] if v not in out)
        return out

    def copy(self) -> "ConjugateGraph":
        return copy.deepcopy(self)

    def edge_counts(self) -> dict[Provenance, int]:
        counts = {p: 0 for p in Provenance}
        counts[Provenance.CONSTRUCTION] = sum(len(c) for c in self.construction)
        for edges in self.routing:
            for tag in edges.values():
                counts[tag] += 1
        return counts

    def edges(self) -> list[tuple[int, int, Provenance]]:
        """Every edge as ``(source, target, provenance)``, sorted."""
        out = [(u, v, Provenance.CONSTRUCTION) for u, c in enumerate(self.construction) for v in c]
        out += [(u, v, t) for u, r in enumerate(self.routing) for v, t in r.items()]
        return sorted(out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConjugateGraph):
            return NotImplemented
        return (
            self.cap == other.cap
            and self.construction == other.construction
            and [sorted(r.items()) for r in self.routing] == [sorted(r.items()) for r in other.routing]
        )

    def merge_routing(self, ds: VectorDataset, edges: Iterable[tuple[int, int, Provenance]]) -> None:
        """Add directed routing edges, deduplicating and enforcing the per-source cap.

        The surviving set depends only on the union of old and new edges, never
        on the order they arrive in.
        """
        touched: dict[int, dict[int, Provenance]] = {}
        for u, v, tag in edges:
            if u == v:
                continue
            bucket = touched.setdefault(u, dict(self.routing[u]))
            if tag > bucket.get(v, -1):
                bucket[v] = Provenance(tag)
        for u, bucket in touched.items():
            generated = [v for v, t in bucket.items() if t is Provenance.GENERATED_LOG]
            if len(generated) > self.cap:
                dist = ds.distances(ds.vector(u), generated).tolist()
                drop = sorted(zip(dist, generated))[self.cap:]
                for _, v in drop:
                    del bucket[v]
            self.routing[u] = dict(sorted(bucket.items()))


def finalize_construction_log(G: ProximityGraph, log: ConstructionLog, cap: int | None = None) -> ConjugateGraph:
    """Keep each node's logged neighbors that are not already proximity edges."""
    if len(log) != G.n:
        raise ValueError(f"log has {len(log)} entries for {G.n} nodes")
    cap = G.r if cap is None else cap
    conj = ConjugateGraph(G.n, G.r)
    for u in range(G.n):
        present = set(G.adjacency[u])
        present.add(u)
        kept = []
        for v, _ in log[u]:
            if v not in present:
                kept.append(v)
                present.add(v)
                if len(kept) >= cap:
                    break
        conj.construction[u] = kept
    return conj


def generate_query(x_b, x_k, omega: float) -> np.ndarray:
    """Point on the segment from ``x_k`` to ``x_b`` at weight ``omega`` toward ``x_b``."""
    if not 0.5 < omega < 1.0:
        raise ValueError("omega must lie in (0.5, 1)")
    x_b = np.asarray(x_b, dtype=np.float64)
    x_k = np.asarray(x_k, dtype=np.float64)
    if x_b.shape != x_k.shape:
        raise ValueError("dimension mismatch")
    return omega * x_b + (1.0 - omega) * x_k


def approximate_knn(G: ProximityGraph, conj: ConjugateGraph, ds: VectorDataset, b: int, k: int) -> list[int]:
    """``k`` nearest of proximity plus construction neighbors of ``b``."""
    cand = list(dict.fromkeys(G.adjacency[b] + conj.construction[b]))
    if not cand:
        return []
    dist = ds.distances(ds.vector(b), cand).tolist()
    return [v for _, v in sorted(zip(dist, cand))[:k]]


def probe_edges(
    G: ProximityGraph, conj: ConjugateGraph, ds: VectorDataset, gp: GenParams, b: int
) -> list[tuple[int, int]]:
    """Routing edges ``(local, target)`` exposed by probes around base point ``b``."""
    ann = approximate_knn(G, conj, ds, b, gp.k_g)
    if not ann:
        return []
    group = ann + [b]
    x_b = ds.vector(b)
    k = min(PROBE_K, gp.L2)
    out = []
    for x_k in ann:
        x_e = generate_query(x_b, ds.vector(x_k), gp.omega)
        pool, _ = beam_search(ds, G.adjacency, [G.entry], x_e, gp.L2)
        local = pool[:k][0][1]
        dist = ds.distances(x_e, group).tolist()
        target = min(zip(dist, group))[1]
        if local != target:
            out.append((local, target))
    return out


def update_from_logs(
    G: ProximityGraph,
    conj: ConjugateGraph,
    ds: VectorDataset,
    gp: GenParams,
    historical: Sequence[SearchLogEntry] = (),
) -> ConjugateGraph:
    """Return a copy of ``conj`` with routing edges from historical and probe logs."""
    edges: list[tuple[int, int, Provenance]] = []
    for e in historical:
        if not (0 <= e.local_opt < G.n and 0 <= e.global_opt < G.n):
            raise ValueError(f"log entry refers to unknown node ({e.local_opt}, {e.global_opt})")
        if e.local_opt != e.global_opt:
            edges.append((e.local_opt, e.global_opt, Provenance.HISTORICAL_LOG))
    if gp.k_g > 0:
        for b in range(G.n):
            edges.extend((u, v, Provenance.GENERATED_LOG) for u, v in probe_edges(G, conj, ds, gp, b))
    out = conj.copy()
    out.merge_routing(ds, edges)
    return out


def enhanced_search(
    G: ProximityGraph,
    conj: ConjugateGraph,
    ds: VectorDataset,
    q,
    L: int,
    k: int,
    init: Sequence[int] | None = None,
) -> SearchOutcome:
    """Beam search on ``G``, then one hop through ``conj`` from the local optimum
    and a neighborhood fill-in around the node that hop lands on."""
    if not 1 <= k <= L:
        raise ValueError(f"need 1 <= k <= L, got k={k}, L={L}")
    init = [G.entry] if init is None else list(init)
    if not init:
        raise ValueError("initial node set is empty")
    qv = ds.prepare_query(q)
    pool, known = beam_search(ds, G.adjacency, init, qv, L)
    base = pool[:k]

    def score(ids: list[int]) -> list[tuple[float, int]]:
        fresh = [v for v in ids if v not in known]
        if fresh:
            known.update(zip(fresh, ds.distances(qv, fresh).tolist()))
        return [(known[v], v) for v in ids]

    local = base[0][1]
    hop = min(score(conj.neighbors(local) + [local]))[1]
    fill = score(conj.neighbors(hop) + [hop])
    merged = sorted(set(base) | set(fill))[:k]
    return SearchOutcome([(i, d) for d, i in merged], set(known))
