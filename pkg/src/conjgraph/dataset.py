"""Vector storage, distance kernels, ingestion and synthetic query generation."""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class IngestionError(ValueError):
    """Raised when a vector file is malformed.

    ``offset`` is the byte offset (binary formats) or line number (csv) of the
    offending record.
    """

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class Metric(enum.IntEnum):
    EUCLIDEAN = 0
    INNER_PRODUCT = 1
    ANGULAR = 2

    @classmethod
    def parse(cls, value: "str | int | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[value.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown metric {value!r}") from None


def _as_vec(a) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite components")
    return v


def distance(metric: "Metric | str", a, b) -> float:
    """Distance between two vectors; smaller is nearer for every metric."""
    metric = Metric.parse(metric)
    a, b = _as_vec(a), _as_vec(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if metric is Metric.EUCLIDEAN:
        diff = a - b
        return float(np.sqrt(np.dot(diff, diff)))
    dot = float(np.dot(a, b))
    if metric is Metric.INNER_PRODUCT:
        return -dot
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("angular distance undefined for zero-norm vectors")
    return 1.0 - dot / (na * nb)


@dataclass(eq=False)
class VectorDataset:
    """Base points plus their metric.

    ``data`` is stored as float32 and frozen; distance work uses a float64 copy
    so sums over ~1000 dimensions do not lose precision.
    """

    data: np.ndarray
    metric: Metric = Metric.EUCLIDEAN
    _work: np.ndarray = field(init=False, repr=False)
    _norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"dataset must be a non-empty (n, d) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("dataset has non-finite components")
        data.flags.writeable = False
        self.data = data
        self.metric = Metric.parse(self.metric)
        self._work = data.astype(np.float64)
        self._norms = np.sqrt(np.einsum("ij,ij->i", self._work, self._work))
        if self.metric is Metric.ANGULAR and np.any(self._norms == 0.0):
            raise ValueError("angular metric requires nonzero-norm vectors")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def vector(self, i: int) -> np.ndarray:
        """Float64 view of base point ``i`` (the form search routines consume)."""
        return self._work[i]

    def prepare_query(self, q) -> np.ndarray:
        v = _as_vec(q)
        if v.shape[0] != self.d:
            raise ValueError(f"query has dimension {v.shape[0]}, dataset has {self.d}")
        if self.metric is Metric.ANGULAR and not np.any(v):
            raise ValueError("angular metric requires a nonzero query")
        return v

    def distances(self, q: np.ndarray, ids) -> np.ndarray:
        """Distances from prepared query ``q`` to the base points ``ids``."""
        x = self._work[ids]
        if self.metric is Metric.EUCLIDEAN:
            diff = x - q
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        dots = x @ q
        if self.metric is Metric.INNER_PRODUCT:
            return -dots
        return 1.0 - dots / (self._norms[ids] * np.sqrt(np.dot(q, q)))

    def pairwise(self, ids) -> np.ndarray:
        """Full distance matrix among ``ids``; meant for small id sets."""
        x = self._work[ids]
        if self.metric is Metric.EUCLIDEAN:
            diff = x[:, None, :] - x[None, :, :]
            return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dots = x @ x.T
        if self.metric is Metric.INNER_PRODUCT:
            return -dots
        norms = self._norms[ids]
        return 1.0 - dots / np.outer(norms, norms)

    def all_distances(self, q: np.ndarray) -> np.ndarray:
        return self.distances(q, slice(None))

    @cached_property
    def medoid(self) -> int:
        """Base point closest (euclidean) to the coordinate-wise mean; ties go to the smaller id."""
        mean = self._work.mean(axis=0)
        diff = self._work - mean
        return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def dataset_abs_mean(ds: VectorDataset) -> float:
    """Mean absolute component value over every point and dimension."""
    return float(np.mean(np.abs(ds._work)))


def generate_noisy_queries(
    ds: VectorDataset, noise_scale: float = 0.5, count_per_base: int = 1, seed: int = 0
) -> np.ndarray:
    """Perturb every base point with uniform noise in ``[-noise_scale*eta, noise_scale*eta]``.

    Rows are ordered base-major: the queries for base ``i`` occupy rows
    ``i*count_per_base .. (i+1)*count_per_base - 1``. Each (base, replica)
    pair draws from its own seeded stream, so output never depends on
    generation order.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be non-negative")
    if count_per_base < 1:
        raise ValueError("count_per_base must be positive")
    half = noise_scale * dataset_abs_mean(ds)
    out = np.empty((ds.n * count_per_base, ds.d), dtype=np.float32)
    for i in range(ds.n):
        for rep in range(count_per_base):
            row = i * count_per_base + rep
            rng = np.random.default_rng([seed, i, rep])
            noise = rng.uniform(-half, half, size=ds.d) if half > 0 else 0.0
            out[row] = ds._work[i] + noise
    return out


# -- file formats -------------------------------------------------------------

_BINARY_DTYPES = {"fvecs": "<f4", "ivecs": "<i4"}


def read_vecs(path: "str | os.PathLike", fmt: str = "fvecs") -> np.ndarray:
    """Read an fvecs/ivecs file into an (n, d) array."""
    try:
        dtype = np.dtype(_BINARY_DTYPES[fmt])
    except KeyError:
        raise ValueError(f"unsupported binary format {fmt!r}") from None
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.empty((0, 0), dtype=dtype)
    if raw.size < 4:
        raise IngestionError("truncated dimension header", 0)
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise IngestionError(f"non-positive dimension {d}", 0)
    rec = 4 * (d + 1)
    if raw.size % rec == 0:
        block = raw.view("<i4").reshape(-1, d + 1)
        if np.all(block[:, 0] == d):
            return block[:, 1:].copy().view(dtype)
    # slow path: walk records to find the first bad one
    offset = 0
    while offset < raw.size:
        if raw.size - offset < 4:
            raise IngestionError("truncated dimension header", offset)
        rd = int(raw[offset:offset + 4].view("<i4")[0])
        if rd <= 0:
            raise IngestionError(f"non-positive dimension {rd}", offset)
        if rd != d:
            raise IngestionError(f"dimension {rd} differs from first record's {d}", offset)
        if raw.size - offset < rec:
            raise IngestionError("truncated record payload", offset)
        offset += rec
    raise AssertionError("unreachable")  # pragma: no cover


def write_vecs(path: "str | os.PathLike", array, fmt: str = "fvecs") -> None:
    dtype = np.dtype(_BINARY_DTYPES[fmt])
    arr = np.ascontiguousarray(array, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, d = arr.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = arr.view("<i4")
    out.tofile(path)


def read_csv_vectors(path: "str | os.PathLike") -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise IngestionError("non-numeric field", lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise IngestionError(f"row has {len(values)} fields, expected {width}", lineno)
            rows.append(values)
    return np.asarray(rows, dtype=np.float32).reshape(len(rows), width or 0)


def load_vectors(path: "str | os.PathLike", fmt: str = "fvecs", metric="euclidean") -> VectorDataset:
    if fmt == "csv":
        arr = read_csv_vectors(path)
    else:
        arr = read_vecs(path, fmt).astype(np.float32)
    if arr.shape[0] == 0:
        raise IngestionError("file contains no vectors", 0)
    return VectorDataset(arr, Metric.parse(metric))
