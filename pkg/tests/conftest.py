import math

import numpy as np
import pytest

from conjgraph.dataset import VectorDataset
from conjgraph.graph import BuildParams, ProximityGraph, build

# Trap instance: 17 points around a query at the origin. Ids: 0 = x_l (where the
# search stalls), 1 = x_g (true nearest), 2..16 = x1..x15.
XL, XG = 0, 1


def x(i: int) -> int:
    return i + 1


TRAP_RADIUS = {
    XL: 3.0, XG: 1.0,
    x(1): 8.0, x(2): 5.0, x(3): 4.0, x(4): 3.5, x(5): 3.8, x(6): 3.2, x(7): 5.5, x(8): 6.5,
    x(9): 4.5, x(10): 1.5, x(11): 1.6, x(12): 1.7, x(13): 1.8, x(14): 6.0, x(15): 2.5,
}
TRAP_ANGLE = {
    XL: 180, XG: 0,
    x(1): 90, x(2): 120, x(3): 150, x(4): 170, x(5): 195, x(6): 175, x(7): 60, x(8): 100,
    x(9): 135, x(10): 20, x(11): -20, x(12): 40, x(13): -40, x(14): 10, x(15): 30,
}
_TRAP_EDGES = [
    (x(1), x(2)), (x(1), x(7)), (x(1), x(8)), (x(2), x(3)), (x(2), x(9)), (x(3), x(4)),
    (x(4), x(5)), (x(4), x(6)), (x(5), XL), (x(6), XL), (XL, x(4)),
    (x(7), x(15)), (x(15), XG), (x(15), x(14)),
    (XG, x(10)), (XG, x(11)), (XG, x(12)), (XG, x(13)),
]


def trap_instance() -> tuple[VectorDataset, ProximityGraph, np.ndarray]:
    pts = np.zeros((17, 2))
    for i in range(17):
        a = math.radians(TRAP_ANGLE[i])
        pts[i] = TRAP_RADIUS[i] * math.cos(a), TRAP_RADIUS[i] * math.sin(a)
    adj: list[list[int]] = [[] for _ in range(17)]
    for u, v in _TRAP_EDGES:
        adj[u].append(v)
        adj[v].append(u)
    return VectorDataset(pts), ProximityGraph(adj, r=6, entry=x(1)), np.zeros(2)


@pytest.fixture
def trap():
    return trap_instance()


def gaussian(n: int, d: int, seed: int) -> VectorDataset:
    return VectorDataset(np.random.default_rng(seed).standard_normal((n, d)).astype(np.float32))


@pytest.fixture(scope="session")
def built_2000():
    ds = gaussian(2000, 16, 0)
    G, log = build(ds, BuildParams(L1=100, r=12, alpha=1.2))
    return ds, G, log


@pytest.fixture(scope="session")
def built_small():
    ds = gaussian(600, 8, 1)
    G, log = build(ds, BuildParams(L1=40, r=8, alpha=1.2))
    return ds, G, log


def clustered(n: int, d: int, spread: float, seed: int = 7) -> tuple[VectorDataset, np.random.Generator]:
    """Gaussian blobs, one center per hundred points. Returns the generator for follow-up sampling."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((max(n // 100, 1), d))
    pts = centers[rng.integers(0, len(centers), n)] + spread * rng.standard_normal((n, d))
    return VectorDataset(pts.astype(np.float32)), rng
