"""Index file, ground truth files and search-log text format.

Index file layout, all little-endian::

    header   magic "EGRF", u16 version, u8 metric, u8 prune rule,
             u32 n, u32 d, u32 r, u32 entry, u32 L1, f64 alpha,
             u32 routing cap, i64 seed, f64 timestamp
    block    u32[n] proximity degrees, u32[sum] proximity ids
    block    u32[n] construction counts, u32[sum] construction ids
    block    u32[n] routing counts, u32[sum] routing targets, u8[sum] provenance
    trailer  u32 crc32 of every preceding byte
"""

from __future__ import annotations

import os
import struct
import tempfile
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conjugate import ConjugateGraph, Provenance, SearchLogEntry
from .dataset import Metric, read_vecs, write_vecs
from .graph import BuildParams, ProximityGraph

MAGIC = b"EGRF"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIIIdIqd")
_U32 = np.dtype("<u4")


class IndexFormatError(ValueError):
    pass


class LogFormatError(ValueError):
    def __init__(self, message: str, lineno: int) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class IndexFile:
    graph: ProximityGraph
    conj: ConjugateGraph
    metric: Metric
    d: int
    params: BuildParams
    seed: int = 0
    timestamp: float = field(default_factory=time.time)

    @property
    def n(self) -> int:
        return self.graph.n


def _pack_lists(lists) -> list[bytes]:
    counts = np.fromiter((len(x) for x in lists), dtype=_U32, count=len(lists))
    flat = np.fromiter((v for x in lists for v in x), dtype=_U32, count=int(counts.sum()))
    return [counts.tobytes(), flat.tobytes()]


def encode_index(idx: IndexFile) -> tuple[bytes, dict[str, int]]:
    """Serialize ``idx``; also return byte counts per section."""
    p = idx.params
    header = _HEADER.pack(
        MAGIC, VERSION, int(idx.metric), int(p.prune_rule), idx.n, idx.d, idx.graph.r,
        idx.graph.entry, p.L1, p.alpha, idx.conj.cap, idx.seed, idx.timestamp,
    )
    prox = _pack_lists(idx.graph.adjacency)
    cons = _pack_lists(idx.conj.construction)
    routing = [sorted(r.items()) for r in idx.conj.routing]
    route = _pack_lists([[v for v, _ in r] for r in routing])
    tags = np.fromiter((int(t) for r in routing for _, t in r), dtype=np.uint8)
    route.append(tags.tobytes())
    body = b"".join([header, *prox, *cons, *route])
    blob = body + struct.pack("<I", zlib.crc32(body))
    sizes = {
        "header": len(header),
        "proximity": sum(map(len, prox)),
        "conjugate": sum(map(len, cons)) + sum(map(len, route)),
        "checksum": 4,
    }
    sizes["total"] = len(blob)
    return blob, sizes


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise IndexFormatError("index file truncated")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def lists(self, n: int) -> list[list[int]]:
        counts = np.frombuffer(self.take(4 * n), dtype=_U32).astype(np.int64)
        flat = np.frombuffer(self.take(4 * int(counts.sum())), dtype=_U32)
        if flat.size and int(flat.max()) >= n:
            raise IndexFormatError(f"node id {int(flat.max())} out of range for n={n}")
        bounds = np.concatenate([[0], np.cumsum(counts)]).tolist()
        return [flat[bounds[i]:bounds[i + 1]].tolist() for i in range(n)]


def decode_index(blob: bytes) -> IndexFile:
    if len(blob) < _HEADER.size + 4:
        raise IndexFormatError("index file truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IndexFormatError("checksum mismatch")
    rd = _Reader(body)
    (magic, version, metric, rule, n, d, r, entry, L1, alpha, cap, seed, ts) = _HEADER.unpack(rd.take(_HEADER.size))
    if magic != MAGIC:
        raise IndexFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise IndexFormatError(f"unsupported format version {version}")
    adjacency = rd.lists(n)
    conj = ConjugateGraph(n, cap)
    conj.construction = rd.lists(n)
    targets = rd.lists(n)
    total = sum(len(t) for t in targets)
    tags = np.frombuffer(rd.take(total), dtype=np.uint8).tolist()
    if any(t not in (Provenance.GENERATED_LOG, Provenance.HISTORICAL_LOG) for t in tags):
        raise IndexFormatError("unknown routing edge provenance")
    pos = 0
    for u, ts_ in enumerate(targets):
        conj.routing[u] = {v: Provenance(tags[pos + j]) for j, v in enumerate(ts_)}
        pos += len(ts_)
    if rd.pos != len(body):
        raise IndexFormatError("trailing bytes after routing block")
    params = BuildParams(L1=L1, r=r, alpha=alpha, prune_rule=rule)
    return IndexFile(ProximityGraph(adjacency, r, entry), conj, Metric(metric), d, params, seed, ts)


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_index(path, idx: IndexFile) -> dict[str, int]:
    blob, sizes = encode_index(idx)
    atomic_write(path, blob)
    return sizes


def load_index(path) -> IndexFile:
    return decode_index(Path(path).read_bytes())


# -- ground truth ---------------------------------------------------------------

def groundtruth_paths(path) -> tuple[Path, Path]:
    """Id file and its companion distance file (``x.ivecs`` pairs with ``x.fvecs``)."""
    path = Path(path)
    if path.suffix == ".ivecs":
        return path, path.with_suffix(".fvecs")
    return path, Path(str(path) + ".fvecs")


def save_groundtruth(path, ids: np.ndarray, dists: np.ndarray) -> None:
    id_path, dist_path = groundtruth_paths(path)
    write_vecs(id_path, ids, "ivecs")
    write_vecs(dist_path, dists, "fvecs")


def load_groundtruth(path) -> tuple[np.ndarray, np.ndarray | None]:
    id_path, dist_path = groundtruth_paths(path)
    ids = read_vecs(id_path, "ivecs")
    dists = read_vecs(dist_path, "fvecs") if dist_path.exists() else None
    return ids, dists


# -- search logs ------------------------------------------------------------------

def format_log_entry(e: SearchLogEntry) -> str:
    floats = " ".join(repr(float(x)) for x in np.asarray(e.query, dtype=np.float64))
    return f"Q {floats} | L2 {e.L2} | LOPT {e.local_opt} | GOPT {e.global_opt}"


def parse_log(lines, queries=None, d: int | None = None) -> list[SearchLogEntry]:
    """Parse ``Q <floats> | L2 <int> | LOPT <id> | GOPT <id>`` lines.

    ``Q @<i>`` refers to row ``i`` of ``queries``. Blank lines and ``#`` comments
    are skipped.
    """
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.split() for p in line.split("|")]
        if len(parts) != 4 or [p[0] if p else "" for p in parts] != ["Q", "L2", "LOPT", "GOPT"]:
            raise LogFormatError("expected 'Q ... | L2 .. | LOPT .. | GOPT ..'", lineno)
        try:
            q_tokens = parts[0][1:]
            if len(q_tokens) == 1 and q_tokens[0].startswith("@"):
                if queries is None:
                    raise LogFormatError("query index given but no query file", lineno)
                row = int(q_tokens[0][1:])
                if row < 0:
                    raise ValueError
                query = np.asarray(queries[row], dtype=np.float64)
            else:
                query = np.asarray([float(t) for t in q_tokens], dtype=np.float64)
            fields_ = []
            for p in parts[1:]:
                if len(p) != 2:
                    raise ValueError
                fields_.append(int(p[1]))
        except LogFormatError:
            raise
        except (ValueError, IndexError):
            raise LogFormatError("malformed number", lineno) from None
        L2, lopt, gopt = fields_
        if query.size == 0 or not np.all(np.isfinite(query)):
            raise LogFormatError("empty or non-finite query", lineno)
        if d is not None and query.size != d:
            raise LogFormatError(f"query has {query.size} components, expected {d}", lineno)
        if L2 < 1 or lopt < 0 or gopt < 0:
            raise LogFormatError("L2 must be >= 1 and ids non-negative", lineno)
        out.append(SearchLogEntry(query, L2, lopt, gopt))
    return out


def read_log(path, queries=None, d: int | None = None) -> list[SearchLogEntry]:
    with open(path) as fh:
        return parse_log(fh, queries, d)
