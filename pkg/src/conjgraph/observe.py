"""Batch diagnostics over a frozen index: where searches stall and what enhancement buys."""

from __future__ import annotations

import csv
import io
import time
from collections import Counter
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .conjugate import ConjugateGraph, enhanced_search, generate_query
from .dataset import VectorDataset
from .graph import ProximityGraph, greedy_search
from .oracle import K_MAX, exact_knn, ground_truth

OVERFLOW = "overflow"


@dataclass(frozen=True)
class SweepPoint:
    L: int
    qps: float
    recall1: float
    recall10: float
    enhanced: bool = False


@dataclass(frozen=True)
class ConvergenceStats:
    """Where failing probes end up. Shares are over all failing probes and sum to 1."""

    max_share: float
    other_shared_share: float
    singleton_share: float
    failing: int
    max_hits: int = 0
    other_shared_hits: int = 0
    singleton_hits: int = 0

    @classmethod
    def from_counts(cls, max_hits: int, shared: int, single: int) -> "ConvergenceStats":
        total = max_hits + shared + single
        if total == 0:
            return cls(0.0, 0.0, 0.0, 0)
        return cls(max_hits / total, shared / total, single / total, total, max_hits, shared, single)

    def per_converged_probe(self) -> tuple[Fraction, Fraction, Fraction]:
        """Hit counts over the probes that share an optimum with another probe.

        This is the normalization of the bar chart convention where (1,1,1,1,1,1,1,2,2,3)
        reads as 7/9, 2/9, 1/9. The three values do not sum to 1 when singletons exist.
        """
        shared = self.max_hits + self.other_shared_hits
        if shared == 0:
            raise ZeroDivisionError("no probe shares its optimum with another")
        return (
            Fraction(self.max_hits, shared),
            Fraction(self.other_shared_hits, shared),
            Fraction(self.singleton_hits, shared),
        )


@dataclass(frozen=True)
class ShotRate:
    omega: float
    global_hit: float
    nn_hit: float
    other: float


def to_csv(rows: Iterable, path=None) -> str:
    """Render dataclass rows as CSV with a header line; also write to ``path`` if given."""
    rows = list(rows)
    buf = io.StringIO()
    if rows:
        names = [f.name for f in fields(rows[0])]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([getattr(row, n) for n in names])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _neighbor_ranks(ds: VectorDataset, b: int, k_max: int) -> dict[int, int]:
    # rank 1 = nearest other base point
    row = exact_knn(ds, ds.vector(b), min(k_max + 1, ds.n))
    others = [i for i, _ in row if i != b][:k_max]
    return {i: r for r, i in enumerate(others, start=1)}


def local_optimum_rank(
    ds: VectorDataset,
    G: ProximityGraph,
    queries,
    L: int,
    k: int = 1,
    k_max: int = K_MAX,
    gt_ids: np.ndarray | None = None,
) -> Counter:
    """Histogram of the stalled optimum's rank among the true optimum's neighbors.

    Only queries whose search misses the true nearest point are counted.
    """
    hist: Counter = Counter()
    if gt_ids is None:
        gt_ids, _ = ground_truth(ds, queries, 1)
    for q, g in zip(queries, np.asarray(gt_ids)[:, 0]):
        x_l = greedy_search(G, ds, q, L, k).local_optimum
        if x_l == g:
            continue
        hist[_neighbor_ranks(ds, int(g), k_max).get(x_l, OVERFLOW)] += 1
    return hist


def knn_overlap_rate(ds: VectorDataset, queries, k: int = 20, gt_ids: np.ndarray | None = None) -> np.ndarray:
    """Per query, ``|NN_k(q) & NN_k(x_g)| / k`` where ``x_g`` is the query's nearest base point."""
    out = np.empty(len(queries))
    for row, q in enumerate(queries):
        if gt_ids is not None and gt_ids.shape[1] >= k:
            nn_q = [int(i) for i in gt_ids[row, :k]]
        else:
            nn_q = [i for i, _ in exact_knn(ds, q, k)]
        nn_g = [i for i, _ in exact_knn(ds, ds.vector(nn_q[0]), k)]
        out[row] = len(set(nn_q) & set(nn_g)) / k
    return out


def convergence_shares(optima: Iterable[int]) -> ConvergenceStats:
    """Split failing probes into modal, other-repeated and singleton optima.

    The modal optimum must be hit at least twice; ties go to the smaller id.
    """
    counts = Counter(int(o) for o in optima)
    if not counts:
        return ConvergenceStats.from_counts(0, 0, 0)
    modal, top = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    max_hits = top if top >= 2 else 0
    shared = sum(c for o, c in counts.items() if c >= 2 and o != modal)
    single = sum(c for c in counts.values() if c == 1)
    return ConvergenceStats.from_counts(max_hits, shared, single)


def pooled_shares(groups: Mapping[int, Sequence[int]]) -> ConvergenceStats:
    """Aggregate per-group convergence by pooling hit counts across groups."""
    parts = [convergence_shares(g) for g in groups.values()]
    return ConvergenceStats.from_counts(
        sum(p.max_hits for p in parts),
        sum(p.other_shared_hits for p in parts),
        sum(p.singleton_hits for p in parts),
    )


def same_local_optimum_rate(
    ds: VectorDataset, G: ProximityGraph, probes: Mapping[int, Sequence], L: int
) -> tuple[ConvergenceStats, dict[int, list[int]]]:
    """Run each base point's probes and collect the optima of those that miss it."""
    failing: dict[int, list[int]] = {}
    for b, qs in probes.items():
        if len(qs) < 2:
            raise ValueError(f"base point {b} needs at least 2 probes")
        opt = [greedy_search(G, ds, q, L, 1).local_optimum for q in qs]
        miss = [o for o in opt if o != b]
        if miss:
            failing[b] = miss
    return pooled_shares(failing), failing


def shot_rate(
    ds: VectorDataset,
    G: ProximityGraph,
    omegas: Sequence[float],
    L: int,
    bases: Sequence[int] | None = None,
) -> list[ShotRate]:
    """Classify where probes between each base point and its nearest neighbor end up."""
    bases = range(ds.n) if bases is None else bases
    nearest = {}
    for b in bases:
        ranks = _neighbor_ranks(ds, b, 1)
        nearest[b] = next(iter(ranks))
    out = []
    for omega in omegas:
        hit = nn = other = 0
        for b, x_k in nearest.items():
            q = generate_query(ds.vector(b), ds.vector(x_k), omega)
            x_l = greedy_search(G, ds, q, L, 1).local_optimum
            if x_l == b:
                hit += 1
            elif x_l == x_k:
                nn += 1
            else:
                other += 1
        total = hit + nn + other
        out.append(ShotRate(omega, hit / total, nn / total, other / total))
    return out


def qps_recall_sweep(
    ds: VectorDataset,
    G: ProximityGraph,
    conj: ConjugateGraph | None,
    queries,
    gt_ids: np.ndarray,
    Ls: Sequence[int],
    k: int = 10,
) -> list[SweepPoint]:
    """Single-stream QPS and mean Recall@1 / Recall@k for each beam width."""
    gt_ids = np.asarray(gt_ids)
    if gt_ids.shape[1] < k:
        raise ValueError(f"ground truth holds {gt_ids.shape[1]} neighbors, need {k}")
    points = []
    for L in Ls:
        kk = min(k, L)
        t0 = time.perf_counter()
        if conj is None:
            outs = [greedy_search(G, ds, q, L, kk) for q in queries]
        else:
            outs = [enhanced_search(G, conj, ds, q, L, kk) for q in queries]
        elapsed = time.perf_counter() - t0
        r1 = np.mean([o.local_optimum == g[0] for o, g in zip(outs, gt_ids)])
        rk = np.mean([len(set(o.ids) & set(g[:k].tolist())) / k for o, g in zip(outs, gt_ids)])
        points.append(SweepPoint(L, len(queries) / max(elapsed, 1e-12), float(r1), float(rk), conj is not None))
    return points


def enhancement_gap(base: Sequence[SweepPoint], enhanced: Sequence[SweepPoint]) -> dict[int, float]:
    """Enhanced minus base Recall@1 per beam width."""
    b = {p.L: p.recall1 for p in base}
    return {p.L: p.recall1 - b[p.L] for p in enhanced if p.L in b}
