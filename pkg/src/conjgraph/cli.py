"""Command line entry point: build, enhance, search, groundtruth, queries, bench, observe."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .conjugate import (
    GenParams,
    Provenance,
    SearchLogEntry,
    enhanced_search,
    finalize_construction_log,
    update_from_logs,
)
from .dataset import (
    IngestionError,
    VectorDataset,
    generate_noisy_queries,
    load_vectors,
    read_csv_vectors,
    read_vecs,
    write_vecs,
)
from .graph import BuildParams, build, greedy_search
from .observe import (
    enhancement_gap,
    knn_overlap_rate,
    local_optimum_rank,
    qps_recall_sweep,
    same_local_optimum_rate,
    shot_rate,
    to_csv,
)
from .oracle import K_MAX, ground_truth
from .persist import (
    IndexFile,
    IndexFormatError,
    LogFormatError,
    format_log_entry,
    load_groundtruth,
    load_index,
    read_log,
    save_groundtruth,
    save_index,
)

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    dataset: str | None = None
    format: str = "fvecs"
    metric: str = "euclidean"
    r: int = 12
    L1: int = 100
    alpha: float = 1.2
    prune_rule: str = "rng_alpha"
    L2: int = 100
    omega: float = 0.51
    kg: int = 5
    k: int = 10
    L: str = "100"
    queries: str | None = None
    query_format: str = "fvecs"
    groundtruth: str | None = None
    logs: str | None = None
    index: str | None = None
    out: str | None = None
    seed: int = 0
    analysis: str = "rank"
    noise: float | None = None
    omegas: str = "0.51,0.6,0.7,0.8,0.9"
    emit_log: str | None = None
    probes_per_base: int = 10
    limit: int | None = None
    base_only: bool = False
    per_base: int = 1

    def beams(self) -> list[int]:
        try:
            return [int(x) for x in str(self.L).split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"--L expects comma-separated integers, got {self.L!r}") from None

    def build_params(self) -> BuildParams:
        try:
            return BuildParams(L1=self.L1, r=self.r, alpha=self.alpha, prune_rule=self.prune_rule)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def gen_params(self) -> GenParams:
        try:
            return GenParams(omega=self.omega, k_g=self.kg, L2=self.L2)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    spec = {
        "dataset": dict(help="base vectors file"),
        "format": dict(choices=["fvecs", "ivecs", "csv"], help="dataset file format"),
        "metric": dict(choices=["euclidean", "inner_product", "angular"]),
        "r": dict(type=int, help="maximum out-degree"),
        "L1": dict(type=int, help="construction beam width"),
        "alpha": dict(type=float, help="pruning slack"),
        "prune-rule": dict(choices=["rng_alpha", "mrng"]),
        "L2": dict(type=int, help="beam width used when probing for routing flaws"),
        "omega": dict(type=float, help="probe position toward the base point, in (0.5, 1)"),
        "kg": dict(type=int, help="probes per base point (0 disables probing)"),
        "k": dict(type=int, help="results per query"),
        "L": dict(help="beam width, or comma-separated sweep"),
        "queries": dict(help="query vectors file"),
        "query-format": dict(choices=["fvecs", "ivecs", "csv"]),
        "groundtruth": dict(help="ground-truth ids (.ivecs)"),
        "logs": dict(help="historical search log"),
        "index": dict(help="index file"),
        "out": dict(help="output path"),
        "seed": dict(type=int),
    }
    for name in names:
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), default=None, **spec[name])


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conjgraph", description=__doc__)
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="build proximity graph and construction edges")
    _common(p, "dataset", "format", "metric", "r", "L1", "alpha", "prune-rule", "seed", "index")

    p = sub.add_parser("enhance", help="add routing edges from probes and historical logs")
    _common(p, "dataset", "format", "index", "logs", "queries", "query-format", "L2", "omega", "kg", "out", "seed")

    p = sub.add_parser("search", help="search queries, print top-k ids and distances")
    _common(p, "dataset", "format", "index", "queries", "query-format", "k", "L", "out", "groundtruth")
    p.add_argument("--base-only", action="store_true", help="skip the conjugate-graph stage")
    p.add_argument("--emit-log", dest="emit_log", default=None,
                   help="write failing base searches as log lines (needs --groundtruth)")

    p = sub.add_parser("groundtruth", help="exhaustive k-NN for a query file")
    _common(p, "dataset", "format", "metric", "queries", "query-format", "k", "out")
    p.set_defaults(k=K_MAX)

    p = sub.add_parser("queries", help="write noisy copies of the base points as a query file")
    _common(p, "dataset", "format", "metric", "out", "seed")
    p.add_argument("--noise", type=float, default=None, help="noise half-width relative to mean |component|")
    p.add_argument("--per-base", dest="per_base", type=int, default=None, help="queries per base point")
    p.add_argument("--limit", type=int, default=None, help="keep only the first N queries")

    p = sub.add_parser("bench", help="QPS / recall sweep over beam widths, base and enhanced")
    _common(p, "dataset", "format", "index", "queries", "query-format", "groundtruth", "k", "L", "out")

    p = sub.add_parser("observe", help="diagnostic analyses")
    _common(p, "dataset", "format", "index", "queries", "query-format", "groundtruth", "k", "L", "out", "seed")
    p.add_argument("--analysis", choices=["rank", "overlap", "convergence", "shot"], default=None)
    p.add_argument("--noise", type=float, default=None, help="probe noise half-width for --analysis convergence")
    p.add_argument("--omegas", default=None, help="comma-separated omega sweep for shot rate")
    p.add_argument("--probes-per-base", dest="probes_per_base", type=int, default=None)
    p.add_argument("--limit", type=int, default=None, help="analyse only the first N base points / queries")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_queries(cfg: RunConfig, d: int) -> np.ndarray:
    if cfg.query_format == "csv":
        q = read_csv_vectors(cfg.queries)
    else:
        q = read_vecs(cfg.queries, cfg.query_format).astype(np.float32)
    if q.ndim != 2 or q.shape[0] == 0:
        raise IngestionError("query file contains no vectors", 0)
    if q.shape[1] != d:
        raise IngestionError(f"queries have dimension {q.shape[1]}, dataset has {d}", 0)
    return q


def _load_indexed(cfg: RunConfig) -> tuple[IndexFile, VectorDataset]:
    _require(cfg, "dataset", "index")
    idx = load_index(cfg.index)
    ds = load_vectors(cfg.dataset, cfg.format, idx.metric)
    if (ds.n, ds.d) != (idx.n, idx.d):
        raise IngestionError(f"dataset is {ds.n}x{ds.d} but index expects {idx.n}x{idx.d}", 0)
    return idx, ds


def _emit(cfg: RunConfig, text: str, out) -> None:
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def cmd_build(cfg: RunConfig, out) -> None:
    _require(cfg, "dataset", "index")
    params = cfg.build_params()
    ds = load_vectors(cfg.dataset, cfg.format, cfg.metric)
    t0 = time.perf_counter()
    G, log = build(ds, params, cfg.seed)
    conj = finalize_construction_log(G, log)
    elapsed = time.perf_counter() - t0
    sizes = save_index(cfg.index, IndexFile(G, conj, ds.metric, ds.d, params, cfg.seed))
    out.write(f"build_time_s {elapsed:.3f}\n")
    out.write(f"vector_bytes {ds.data.nbytes}\n")
    for key, value in sizes.items():
        out.write(f"{key}_bytes {value}\n")


def cmd_enhance(cfg: RunConfig, out) -> None:
    idx, ds = _load_indexed(cfg)
    gp = cfg.gen_params()
    historical: list[SearchLogEntry] = []
    if cfg.logs:
        queries = _load_queries(cfg, ds.d) if cfg.queries else None
        historical = read_log(cfg.logs, queries, ds.d)
    before = idx.conj.edge_counts()
    t0 = time.perf_counter()
    idx.conj = update_from_logs(idx.graph, idx.conj, ds, gp, historical)
    elapsed = time.perf_counter() - t0
    idx.timestamp = time.time()
    sizes = save_index(cfg.out or cfg.index, idx)
    after = idx.conj.edge_counts()
    out.write(f"update_time_s {elapsed:.3f}\n")
    for tag in (Provenance.GENERATED_LOG, Provenance.HISTORICAL_LOG):
        out.write(f"added_{tag.name.lower()} {after[tag] - before[tag]}\n")
        out.write(f"total_{tag.name.lower()} {after[tag]}\n")
    out.write(f"total_bytes {sizes['total']}\n")


def cmd_search(cfg: RunConfig, out) -> None:
    idx, ds = _load_indexed(cfg)
    _require(cfg, "queries")
    queries = _load_queries(cfg, ds.d)
    L = cfg.beams()
    if len(L) != 1:
        raise UsageError("search takes a single --L")
    L = L[0]
    if not 1 <= cfg.k <= L:
        raise UsageError("need 1 <= k <= L")
    gt = None
    if cfg.emit_log:
        _require(cfg, "groundtruth")
        gt, _ = load_groundtruth(cfg.groundtruth)
        if len(gt) != len(queries):
            raise IngestionError("ground truth and query counts differ", 0)
    lines = ["query,rank,id,distance"]
    failures = []
    for qi, q in enumerate(queries):
        base = greedy_search(idx.graph, ds, q, L, cfg.k)
        res = base if cfg.base_only else enhanced_search(idx.graph, idx.conj, ds, q, L, cfg.k)
        lines.extend(f"{qi},{rank},{i},{d!r}" for rank, (i, d) in enumerate(res.results))
        if gt is not None and base.local_optimum != int(gt[qi, 0]):
            failures.append(SearchLogEntry(q, L, base.local_optimum, int(gt[qi, 0])))
    _emit(cfg, "\n".join(lines) + "\n", out)
    if cfg.emit_log:
        with open(cfg.emit_log, "w") as fh:
            fh.writelines(format_log_entry(e) + "\n" for e in failures)


def cmd_groundtruth(cfg: RunConfig, out) -> None:
    _require(cfg, "dataset", "queries", "out")
    ds = load_vectors(cfg.dataset, cfg.format, cfg.metric)
    queries = _load_queries(cfg, ds.d)
    ids, dists = ground_truth(ds, queries, min(cfg.k, ds.n))
    save_groundtruth(cfg.out, ids, dists)
    out.write(f"queries {len(queries)}\nk {ids.shape[1]}\n")


def cmd_queries(cfg: RunConfig, out) -> None:
    _require(cfg, "dataset", "out")
    if cfg.per_base < 1:
        raise UsageError("--per-base must be >= 1")
    ds = load_vectors(cfg.dataset, cfg.format, cfg.metric)
    noise = 0.06 if cfg.noise is None else cfg.noise
    queries = generate_noisy_queries(ds, noise, cfg.per_base, cfg.seed)
    if cfg.limit:
        queries = queries[: cfg.limit]
    write_vecs(cfg.out, queries, "fvecs")
    out.write(f"queries {len(queries)}\n")


def cmd_bench(cfg: RunConfig, out) -> None:
    if cfg.groundtruth is None:
        raise UsageError("bench needs --groundtruth")
    idx, ds = _load_indexed(cfg)
    _require(cfg, "queries")
    queries = _load_queries(cfg, ds.d)
    gt, _ = load_groundtruth(cfg.groundtruth)
    if len(gt) != len(queries):
        raise IngestionError("ground truth and query counts differ", 0)
    Ls = cfg.beams()
    base = qps_recall_sweep(ds, idx.graph, None, queries, gt, Ls, cfg.k)
    enh = qps_recall_sweep(ds, idx.graph, idx.conj, queries, gt, Ls, cfg.k)
    gap = enhancement_gap(base, enh)
    lines = ["L,base_qps,base_recall1,base_recall10,enh_qps,enh_recall1,enh_recall10,gap_recall1"]
    for b, e in zip(base, enh):
        lines.append(
            f"{b.L},{b.qps:.1f},{b.recall1:.6f},{b.recall10:.6f},"
            f"{e.qps:.1f},{e.recall1:.6f},{e.recall10:.6f},{gap[b.L]:.6f}"
        )
    _emit(cfg, "\n".join(lines) + "\n", out)


def cmd_observe(cfg: RunConfig, out) -> None:
    idx, ds = _load_indexed(cfg)
    L = cfg.beams()[0]
    limit = cfg.limit
    if cfg.analysis in ("rank", "overlap"):
        if cfg.groundtruth is None:
            raise UsageError(f"observe --analysis {cfg.analysis} needs --groundtruth")
        _require(cfg, "queries")
        gt, _ = load_groundtruth(cfg.groundtruth)
        queries = _load_queries(cfg, ds.d)
        if len(gt) != len(queries):
            raise IngestionError("ground truth and query counts differ", 0)
        if limit:
            queries, gt = queries[:limit], gt[:limit]
        if cfg.analysis == "rank":
            hist = local_optimum_rank(ds, idx.graph, queries, L, gt_ids=gt)
            keys = sorted((k for k in hist if k != "overflow")) + (["overflow"] if "overflow" in hist else [])
            text = "rank,count\n" + "".join(f"{k},{hist[k]}\n" for k in keys)
        else:
            k = min(cfg.k, gt.shape[1])
            rates = knn_overlap_rate(ds, queries, k, gt_ids=gt)
            text = "query,overlap\n" + "".join(f"{i},{r:.6f}\n" for i, r in enumerate(rates))
            text += f"mean,{float(np.mean(rates)):.6f}\n"
    elif cfg.analysis == "convergence":
        noise = 0.2 if cfg.noise is None else cfg.noise
        per = cfg.probes_per_base
        if per < 2:
            raise UsageError("--probes-per-base must be >= 2")
        probes = generate_noisy_queries(ds, noise, per, cfg.seed)
        bases = range(min(limit or ds.n, ds.n))
        groups = {b: probes[b * per:(b + 1) * per] for b in bases}
        stats, _ = same_local_optimum_rate(ds, idx.graph, groups, L)
        text = to_csv([stats])
    else:
        try:
            omegas = [float(x) for x in cfg.omegas.split(",")]
        except ValueError:
            raise UsageError("--omegas expects comma-separated floats") from None
        bases = list(range(min(limit or ds.n, ds.n)))
        text = to_csv(shot_rate(ds, idx.graph, omegas, L, bases))
    _emit(cfg, text, out)


COMMANDS = {
    "build": cmd_build,
    "enhance": cmd_enhance,
    "search": cmd_search,
    "groundtruth": cmd_groundtruth,
    "queries": cmd_queries,
    "bench": cmd_bench,
    "observe": cmd_observe,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code is None else int(exc.code)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"conjgraph: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, IndexFormatError, LogFormatError, OSError, ValueError) as exc:
        print(f"conjgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
