"""Exhaustive k-NN ground truth and recall."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .dataset import VectorDataset

K_MAX = 100


def _topk(dists: np.ndarray, k: int) -> np.ndarray:
    # ties broken by smaller id: keep everything tied with the k-th value, then lexsort
    n = dists.shape[0]
    if k < n:
        kth = np.partition(dists, k - 1)[k - 1]
        cand = np.flatnonzero(dists <= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, dists[cand]))
    return cand[order[:k]]


def exact_knn(ds: VectorDataset, q, k: int) -> list[tuple[int, float]]:
    """The ``k`` nearest base points to ``q`` as ``(id, distance)``, nearest first."""
    if not 1 <= k <= ds.n:
        raise ValueError(f"k must be in [1, {ds.n}], got {k}")
    qv = ds.prepare_query(q)
    dists = ds.all_distances(qv)
    ids = _topk(dists, k)
    return [(int(i), float(dists[i])) for i in ids]


def global_optimum(ds: VectorDataset, q) -> int:
    return exact_knn(ds, q, 1)[0][0]


def ground_truth(ds: VectorDataset, queries, k: int = K_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Batch ``exact_knn``: returns ``(ids int32 (m, k), dists float32 (m, k))``."""
    k = min(k, ds.n)
    queries = np.atleast_2d(np.asarray(queries))
    ids = np.empty((len(queries), k), dtype=np.int32)
    dists = np.empty((len(queries), k), dtype=np.float32)
    for row, q in enumerate(queries):
        qv = ds.prepare_query(q)
        all_d = ds.all_distances(qv)
        top = _topk(all_d, k)
        ids[row] = top
        dists[row] = all_d[top]
    return ids, dists


def recall_at_k(approx: Iterable[int], exact: Iterable[int], k: int) -> float:
    """``|approx & exact| / k``; ``exact`` must hold exactly ``k`` ids."""
    exact = set(int(i) for i in exact)
    if len(exact) != k:
        raise ValueError(f"exact set has {len(exact)} ids, expected {k}")
    approx = set(int(i) for i in approx)
    return len(approx & exact) / k
