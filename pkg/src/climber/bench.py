"""Benchmark generator and experiment harness.

``gen_randomwalk`` writes cumulative-sum-of-Gaussian-steps datasets with
per-record determinism, ``build_index`` runs the full sampling /
skeleton / redistribution pipeline with phase timings, and ``run_bench``
measures recall and wall time for each query strategy against the exact
scan's ground truth.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .build import BuildConfig, IndexSkeleton, build_skeleton
from .errors import ConfigError, InputError
from .query import MODES, QuerySpec, QueryResult, answer, scan_exact
from .series import DataSeries, recall
from .signature import PivotSet
from .storage import (
    SKELETON_FILE,
    PartitionStore,
    RedistributeStats,
    read_dataset_header,
    redistribute,
    sample_partitions,
    serialize_skeleton,
    write_dataset,
)

DEFAULT_QUERY_COUNT = 50
DEFAULT_K = 500


def worker_count() -> int:
    """Worker cap for parallel sections; CLIMBER_THREADS overrides."""
    env = os.environ.get("CLIMBER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CLIMBER_THREADS={env!r} is not an integer") from exc
    return max(1, min(8, os.cpu_count() or 1))


def gen_randomwalk(
    path,
    count: int,
    length: int = 256,
    seed: int = 0,
    first_id: int = 0,
    value_width: int = 4,
) -> FsPath:
    """Write ``count`` random-walk series to one dataset file.

    Each series is the cumulative sum of i.i.d. standard-normal steps,
    generated from a stream keyed by (seed, record index) so shard
    boundaries never change a record's content.
    """
    if count < 1 or length < 1:
        raise InputError(f"need count >= 1 and length >= 1, got {count}, {length}")
    values = np.empty((count, length), dtype=np.float64)
    for i in range(count):
        rng = np.random.default_rng([seed, first_id + i])
        values[i] = np.cumsum(rng.standard_normal(length))
    ids = np.arange(first_id, first_id + count, dtype=np.int64)
    return write_dataset(path, ids, values, value_width)


def gen_randomwalk_shards(
    directory,
    count: int,
    length: int = 256,
    seed: int = 0,
    shards: int = 1,
    value_width: int = 4,
    stem: str = "randomwalk",
) -> list[FsPath]:
    """Split a random-walk dataset over ``shards`` files (ids stay global)."""
    if shards < 1 or shards > count:
        raise InputError(f"shards={shards} must be in [1, count={count}]")
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    per = count // shards
    extra = count % shards
    paths = []
    start = 0
    for s in range(shards):
        size = per + (1 if s < extra else 0)
        paths.append(
            gen_randomwalk(
                directory / f"{stem}-{s:03d}.clbd",
                size,
                length,
                seed,
                first_id=start,
                value_width=value_width,
            )
        )
        start += size
    return paths


@dataclass
class BuildTimings:
    """Wall-clock breakdown of the construction phases, in seconds."""

    sampling_skeleton: float = 0.0
    conversion: float = 0.0
    redistribution: float = 0.0

    @property
    def total(self) -> float:
        return self.sampling_skeleton + self.conversion + self.redistribution


def build_index(
    data_paths: Sequence,
    out_dir,
    cfg: BuildConfig,
) -> tuple[IndexSkeleton, PivotSet, PartitionStore, BuildTimings, RedistributeStats]:
    """Sample, build the skeleton, and redistribute the full dataset.

    ``cfg.alpha`` names the requested sample fraction; whole files are
    sampled, so the config stored in the skeleton records the fraction
    actually read (sampled records / total records) and all size
    extrapolation uses that value.
    """
    data_paths = [FsPath(p) for p in data_paths]
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    sample = sample_partitions(data_paths, cfg.alpha, cfg.seed)
    total_records = sum(read_dataset_header(p)[0] for p in data_paths)
    if total_records == 0:
        raise InputError("input dataset files contain no records")
    realized = len(sample) / total_records
    header_n = read_dataset_header(data_paths[0])[1]
    header_width = read_dataset_header(data_paths[0])[2]
    cfg = replace(
        cfg, alpha=realized, series_length=header_n, value_width=header_width
    )
    pivots, skeleton = build_skeleton(sample, cfg)
    t_skeleton = time.perf_counter() - t0

    stats = redistribute(data_paths, pivots, skeleton, out_dir)
    serialize_skeleton(skeleton, pivots, out_dir / SKELETON_FILE)
    timings = BuildTimings(
        sampling_skeleton=t_skeleton,
        conversion=stats.conversion_seconds,
        redistribution=stats.write_seconds,
    )
    store = PartitionStore(out_dir, skeleton)
    return skeleton, pivots, store, timings, stats


@dataclass(frozen=True)
class BenchSpec:
    """What to measure: query count, answer sizes, strategies, seed."""

    query_count: int = DEFAULT_QUERY_COUNT
    ks: tuple[int, ...] = (DEFAULT_K,)
    modes: tuple[str, ...] = MODES
    seed: int = 0
    noise: float = 0.0  # optional Gaussian perturbation of query objects

    def __post_init__(self):
        if self.query_count < 1:
            raise InputError("query_count must be >= 1")
        if not self.ks or any(k < 1 for k in self.ks):
            raise InputError("every k must be >= 1")
        unknown = [m for m in self.modes if m not in MODES]
        if unknown:
            raise ConfigError(f"unknown modes {unknown}; choose from {MODES}")
        if self.noise < 0:
            raise InputError("noise sigma must be >= 0")


@dataclass
class BenchRow:
    query_id: int
    k: int
    mode: str
    recall: float
    partitions_accessed: int
    records_examined: int
    seconds: float


@dataclass
class ModeStats:
    mode: str
    k: int
    mean_recall: float
    min_recall: float
    max_recall: float
    mean_seconds: float
    mean_partitions: float
    mean_records: float


@dataclass
class BenchReport:
    config: dict
    spec: dict
    stats: list[ModeStats]
    rows: list[BenchRow]
    timings: dict = field(default_factory=dict)

    def deterministic_payload(self) -> dict:
        """Everything except wall-clock measurements; identical across
        runs with the same seeds."""
        return {
            "config": self.config,
            "spec": self.spec,
            "stats": [
                {
                    "mode": s.mode,
                    "k": s.k,
                    "mean_recall": s.mean_recall,
                    "min_recall": s.min_recall,
                    "max_recall": s.max_recall,
                    "mean_partitions": s.mean_partitions,
                    "mean_records": s.mean_records,
                }
                for s in self.stats
            ],
            "rows": [
                {
                    "query_id": r.query_id,
                    "k": r.k,
                    "mode": r.mode,
                    "recall": r.recall,
                    "partitions_accessed": r.partitions_accessed,
                    "records_examined": r.records_examined,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        doc = self.deterministic_payload()
        doc["timings"] = dict(self.timings)
        doc["timings"]["mean_query_seconds"] = {
            f"{s.mode}@k={s.k}": s.mean_seconds for s in self.stats
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def text_table(self) -> str:
        lines = [
            f"{'mode':<12} {'k':>6} {'recall(mean)':>13} {'min':>7} {'max':>7} "
            f"{'parts':>7} {'records':>10} {'sec':>8}"
        ]
        for s in self.stats:
            lines.append(
                f"{s.mode:<12} {s.k:>6} {s.mean_recall:>13.4f} {s.min_recall:>7.4f} "
                f"{s.max_recall:>7.4f} {s.mean_partitions:>7.1f} "
                f"{s.mean_records:>10.1f} {s.mean_seconds:>8.4f}"
            )
        return "\n".join(lines)


def _evaluate_query(
    qi: int,
    record_id: int,
    series_values: np.ndarray,
    spec: BenchSpec,
    skeleton: IndexSkeleton,
    pivots: PivotSet,
    store: PartitionStore,
) -> list[BenchRow]:
    series = DataSeries(record_id, series_values)
    kmax = max(spec.ks)
    truth = scan_exact(QuerySpec(series, kmax, "scan"), store)
    truth_ids = truth.neighbor_ids()
    rows = []
    for mode in spec.modes:
        for k in spec.ks:
            q = QuerySpec(series, k, mode)
            result: QueryResult = answer(q, skeleton, pivots, store)
            rows.append(
                BenchRow(
                    query_id=record_id,
                    k=k,
                    mode=mode,
                    recall=recall(result.neighbor_ids(), truth_ids[:k]),
                    partitions_accessed=result.partitions_accessed,
                    records_examined=result.records_examined,
                    seconds=result.elapsed,
                )
            )
    return rows


def run_bench(
    spec: BenchSpec,
    skeleton: IndexSkeleton,
    pivots: PivotSet,
    store: PartitionStore,
    timings: BuildTimings | None = None,
) -> BenchReport:
    """Evaluate every (mode, k) over seeded queries drawn from the
    indexed dataset; ground truth comes from the exact scan."""
    ids, values = store.load_all()
    if ids.shape[0] == 0:
        raise InputError("store holds no records to draw queries from")
    count = min(spec.query_count, ids.shape[0])
    rng = np.random.default_rng(spec.seed)
    picks = rng.choice(ids.shape[0], size=count, replace=False)
    query_values = values[picks].astype(np.float64)
    if spec.noise > 0.0:
        query_values = query_values + rng.normal(
            0.0, spec.noise, size=query_values.shape
        )

    jobs = [
        (qi, int(ids[picks[qi]]), query_values[qi]) for qi in range(count)
    ]
    workers = worker_count()
    if workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_query = list(
                pool.map(
                    lambda job: _evaluate_query(
                        job[0], job[1], job[2], spec, skeleton, pivots, store
                    ),
                    jobs,
                )
            )
    else:
        per_query = [
            _evaluate_query(qi, rid, vals, spec, skeleton, pivots, store)
            for qi, rid, vals in jobs
        ]
    rows = [row for rows_ in per_query for row in rows_]

    stats = []
    for mode in spec.modes:
        for k in spec.ks:
            sub = [r for r in rows if r.mode == mode and r.k == k]
            recalls = [r.recall for r in sub]
            stats.append(
                ModeStats(
                    mode=mode,
                    k=k,
                    mean_recall=float(np.mean(recalls)),
                    min_recall=float(np.min(recalls)),
                    max_recall=float(np.max(recalls)),
                    mean_seconds=float(np.mean([r.seconds for r in sub])),
                    mean_partitions=float(np.mean([r.partitions_accessed for r in sub])),
                    mean_records=float(np.mean([r.records_examined for r in sub])),
                )
            )

    cfg = skeleton.config
    report = BenchReport(
        config={
            "w": cfg.w,
            "r": cfg.r,
            "m": cfg.m,
            "c": cfg.c,
            "alpha": cfg.alpha,
            "epsilon": cfg.epsilon,
            "max_centroids": cfg.max_centroids,
            "decay": {"kind": cfg.decay.kind, "lam": cfg.decay.lam},
            "seed": cfg.seed,
            "series_length": cfg.series_length,
            "value_width": cfg.value_width,
            "partitions": skeleton.partition_count(),
            "groups": len(skeleton.centroids),
        },
        spec={
            "query_count": count,
            "ks": list(spec.ks),
            "modes": list(spec.modes),
            "seed": spec.seed,
            "noise": spec.noise,
        },
        stats=stats,
        rows=rows,
    )
    if timings is not None:
        report.timings = {
            "sampling_skeleton_seconds": timings.sampling_skeleton,
            "conversion_seconds": timings.conversion,
            "redistribution_seconds": timings.redistribution,
            "build_total_seconds": timings.total,
        }
    return report
