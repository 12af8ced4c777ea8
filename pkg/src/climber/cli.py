"""Command-line surface: gen, build, query, bench, inspect."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import (
    DEFAULT_K,
    DEFAULT_QUERY_COUNT,
    BenchSpec,
    build_index,
    gen_randomwalk_shards,
    run_bench,
)
from .build import BuildConfig
from .errors import ClimberError
from .query import MODES, QuerySpec, answer
from .series import DataSeries
from .signature import DecaySpec
from .storage import import_csv, open_index, read_dataset

DEFAULTS = {
    "segments": 16,
    "pivots": 200,
    "prefix": 10,
    "capacity": 2000,
    "alpha": 0.1,
    "epsilon": 2,
    "decay": "exponential",
    "lam": 0.5,
    "seed": 7,
    "k": DEFAULT_K,
    "mode": "adaptive4x",
    "queries": DEFAULT_QUERY_COUNT,
    "length": 256,
}


def _add_build_params(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--segments", type=int, default=DEFAULTS["segments"],
                        help="PAA segment count w")
    parser.add_argument("--pivots", type=int, default=DEFAULTS["pivots"],
                        help="pivot count r")
    parser.add_argument("--prefix", type=int, default=DEFAULTS["prefix"],
                        help="signature prefix length m")
    parser.add_argument("--capacity", type=int, default=DEFAULTS["capacity"],
                        help="partition capacity in records")
    parser.add_argument("--alpha", type=float, default=DEFAULTS["alpha"],
                        help="sample fraction in (0, 1]")
    parser.add_argument("--epsilon", type=int, default=DEFAULTS["epsilon"],
                        help="minimum centroid separation (overlap distance)")
    parser.add_argument("--max-centroids", type=int, default=None)
    parser.add_argument("--decay", choices=["exponential", "linear"],
                        default=DEFAULTS["decay"])
    parser.add_argument("--lam", type=float, default=DEFAULTS["lam"],
                        help="exponential decay rate in (0, 1)")
    parser.add_argument("--seed", type=int, default=DEFAULTS["seed"])


def _config_from_args(args: argparse.Namespace) -> BuildConfig:
    decay = (
        DecaySpec("exponential", args.lam)
        if args.decay == "exponential"
        else DecaySpec("linear", None)
    )
    return BuildConfig(
        w=args.segments,
        r=args.pivots,
        m=args.prefix,
        c=args.capacity,
        alpha=args.alpha,
        epsilon=args.epsilon,
        max_centroids=args.max_centroids,
        decay=decay,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="climber",
        description="Disk-backed approximate kNN search over fixed-length data series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate or import datasets")
    gen_sub = gen.add_subparsers(dest="generator", required=True)
    rw = gen_sub.add_parser("randomwalk", help="random-walk benchmark series")
    rw.add_argument("--count", type=int, required=True)
    rw.add_argument("--length", type=int, default=DEFAULTS["length"])
    rw.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    rw.add_argument("--shards", type=int, default=1)
    rw.add_argument("--out", required=True, help="output directory")
    rw.add_argument("--value-width", type=int, choices=[4, 8], default=4)
    csv = gen_sub.add_parser("csv-import", help="convert CSV (id, v1, v2, ...)")
    csv.add_argument("--in", dest="csv_in", required=True)
    csv.add_argument("--out", required=True, help="output dataset file")
    csv.add_argument("--value-width", type=int, choices=[4, 8], default=4)

    build = sub.add_parser("build", help="build an index from dataset files")
    build.add_argument("--data", nargs="+", required=True, help="dataset files")
    build.add_argument("--out", required=True, help="index output directory")
    _add_build_params(build)

    query = sub.add_parser("query", help="answer one query from a dataset file")
    query.add_argument("--index", required=True)
    query.add_argument("--query-file", required=True, help="dataset file holding the query")
    query.add_argument("--record", type=int, default=0,
                       help="record ordinal inside the query file")
    query.add_argument("--k", type=int, default=DEFAULTS["k"])
    query.add_argument("--mode", choices=list(MODES), default=DEFAULTS["mode"])

    bench = sub.add_parser("bench", help="build + measure recall/time per mode")
    bench.add_argument("--data", nargs="+", required=True, help="dataset files")
    bench.add_argument("--workdir", required=True, help="index/working directory")
    bench.add_argument("--queries", type=int, default=DEFAULTS["queries"])
    bench.add_argument("--k", default=str(DEFAULTS["k"]),
                       help="comma-separated answer sizes")
    bench.add_argument("--modes", default=",".join(MODES),
                       help="comma-separated strategy names")
    bench.add_argument("--noise", type=float, default=0.0,
                       help="Gaussian sigma added to query objects (off-benchmark extension)")
    bench.add_argument("--report", default=None, help="write the JSON report here")
    _add_build_params(bench)

    inspect = sub.add_parser("inspect", help="dump skeleton and partition stats")
    inspect.add_argument("--index", required=True)
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    if args.generator == "randomwalk":
        paths = gen_randomwalk_shards(
            args.out,
            args.count,
            args.length,
            args.seed,
            shards=args.shards,
            value_width=args.value_width,
        )
        for p in paths:
            print(p)
        return 0
    out = import_csv(args.csv_in, args.out, args.value_width)
    print(out)
    return 0


def _cmd_build(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    skeleton, _pivots, _store, timings, stats = build_index(args.data, args.out, cfg)
    print(f"index written to {args.out}")
    print(f"groups: {len(skeleton.centroids)}  partitions: {skeleton.partition_count()}")
    print(
        f"records: {stats.records_in} in / {stats.records_out} out "
        f"({stats.defaulted_records} via default partitions)"
    )
    print(
        "phases: sampling+skeleton {:.2f}s, conversion {:.2f}s, redistribution {:.2f}s".format(
            timings.sampling_skeleton, timings.conversion, timings.redistribution
        )
    )
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    skeleton, pivots, store = open_index(args.index)
    data = read_dataset(args.query_file)
    if not (0 <= args.record < len(data)):
        raise ClimberError(
            f"record {args.record} out of range for {args.query_file} ({len(data)} records)"
        )
    series = DataSeries(int(data.ids[args.record]), data.values[args.record])
    result = answer(QuerySpec(series, args.k, args.mode), skeleton, pivots, store)
    print(
        f"mode={args.mode} k={args.k} partitions={result.partitions_accessed} "
        f"records={result.records_examined} elapsed={result.elapsed:.4f}s"
    )
    for rank, (nid, dist) in enumerate(result.neighbors, start=1):
        print(f"{rank:>4}  id={nid:<12} distance={dist:.6f}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ks = tuple(int(k) for k in str(args.k).split(","))
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    spec = BenchSpec(
        query_count=args.queries, ks=ks, modes=modes, seed=args.seed, noise=args.noise
    )
    skeleton, pivots, store, timings, _stats = build_index(args.data, args.workdir, cfg)
    report = run_bench(spec, skeleton, pivots, store, timings)
    print(report.text_table())
    print(
        "build: sampling+skeleton {:.2f}s, conversion {:.2f}s, redistribution {:.2f}s".format(
            timings.sampling_skeleton, timings.conversion, timings.redistribution
        )
    )
    if args.report:
        Path(args.report).write_text(report.to_json())
        print(f"report written to {args.report}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    skeleton, _pivots, store = open_index(args.index)
    cfg = skeleton.config
    print(
        f"config: w={cfg.w} r={cfg.r} m={cfg.m} c={cfg.c} alpha={cfg.alpha:.4f} "
        f"epsilon={cfg.epsilon} decay={cfg.decay.kind} seed={cfg.seed} "
        f"n={cfg.series_length}"
    )
    print(f"groups: {len(skeleton.centroids)}  partitions: {skeleton.partition_count()}")
    depth_hist: dict[int, int] = {}
    for gid in sorted(skeleton.tries):
        root = skeleton.tries[gid]
        depth = root.max_depth()
        depth_hist[depth] = depth_hist.get(depth, 0) + 1
        sig = skeleton.centroids[0].signature
        for cent in skeleton.centroids:
            if cent.group_id == gid:
                sig = cent.signature
        print(
            f"  group {gid}: centroid={list(sig) if sig else '<wildcard>'} "
            f"est_size={root.size} trie_nodes={root.node_count()} depth={depth} "
            f"default_partition={skeleton.default_partition[gid]}"
        )
    print("trie depth histogram: " + ", ".join(
        f"depth {d}: {c} group(s)" for d, c in sorted(depth_hist.items())
    ))
    print(f"{'partition':>9} {'est':>8} {'actual':>8} {'fill%':>7} {'clusters':>9}")
    for pid, est in skeleton.partition_directory:
        path = store.partition_path(pid)
        if path.exists():
            reader = store.partition(pid)
            actual = reader.record_count
            clusters = len(reader.clusters)
            fill = 100.0 * actual / cfg.c
            print(f"{pid:>9} {est:>8} {actual:>8} {fill:>7.1f} {clusters:>9}")
        else:
            print(f"{pid:>9} {est:>8} {'-':>8} {'-':>7} {'-':>9}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "build":
            return _cmd_build(args)
        if args.command == "query":
            return _cmd_query(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "inspect":
            return _cmd_inspect(args)
    except ClimberError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
