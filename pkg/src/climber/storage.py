"""On-disk formats and I/O.

Binary little-endian fixed-width records for bulk data (dataset and
partition files), JSON for the small index skeleton. Partition files
cluster records contiguously per trie node and carry a cluster table of
(path, start offset, count) in the header; offsets count records, not
bytes, since records are fixed length.
"""

from __future__ import annotations

import json
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from .build import (
    BuildConfig,
    Centroid,
    IndexSkeleton,
    TrieNode,
    assign_groups_batch,
    walk_trie,
)
from .errors import ConfigError, InputError, ParseError, StorageError
from .series import Dataset, paa_matrix
from .signature import DecaySpec, PivotSet, signature_matrix

DATASET_MAGIC = b"CLBD"
PARTITION_MAGIC = b"CLBP"
SKELETON_MAGIC = "CLBS"
FORMAT_VERSION = 1

_DATASET_HEADER = struct.Struct("<4sIQIB")
_PARTITION_HEADER = struct.Struct("<4sIQQI")
_CLUSTER_ENTRY = struct.Struct("<H")  # path length; path bytes + offsets follow
_CLUSTER_TAIL = struct.Struct("<QQ")

PARTITION_FILE_FMT = "part-{:05d}.clbp"
SKELETON_FILE = "skeleton.json"


def _value_dtype(value_width: int) -> str:
    if value_width == 4:
        return "<f4"
    if value_width == 8:
        return "<f8"
    raise ConfigError(f"unsupported value width {value_width}")


def _record_dtype(n: int, value_width: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("values", _value_dtype(value_width), (n,))])


def path_str(path: Sequence[int]) -> str:
    return "/".join(str(int(p)) for p in path)


def path_is_prefix(prefix: str, path: str) -> bool:
    """Component-wise prefix test on '/'-joined pivot-id paths."""
    if prefix == "":
        return True
    return path == prefix or path.startswith(prefix + "/")


# ---------------------------------------------------------------------------
# Dataset files


def write_dataset(path, ids, values, value_width: int = 4) -> FsPath:
    """Write one dataset file: header plus fixed-length (id, values) records."""
    path = FsPath(path)
    ids = np.asarray(ids, dtype=np.uint64)
    values = np.asarray(values)
    if values.ndim != 2 or ids.shape[0] != values.shape[0]:
        raise InputError("ids and values disagree on record count")
    n = values.shape[1]
    records = np.empty(ids.shape[0], dtype=_record_dtype(n, value_width))
    records["id"] = ids
    records["values"] = values
    with open(path, "wb") as fh:
        fh.write(
            _DATASET_HEADER.pack(
                DATASET_MAGIC, FORMAT_VERSION, ids.shape[0], n, value_width
            )
        )
        records.tofile(fh)
    return path


def read_dataset_header(path) -> tuple[int, int, int]:
    """(record count, series length, value width) from a dataset file."""
    path = FsPath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_DATASET_HEADER.size)
    except OSError as exc:
        raise StorageError(f"cannot read dataset file {path}: {exc}") from exc
    if len(raw) < _DATASET_HEADER.size:
        raise ParseError("truncated dataset header", path=path, location=0)
    magic, version, count, n, value_width = _DATASET_HEADER.unpack(raw)
    if magic != DATASET_MAGIC:
        raise ParseError(f"bad magic {magic!r}", path=path, location=0)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported version {version}", path=path, location=4)
    return count, n, value_width


def read_dataset(path) -> Dataset:
    path = FsPath(path)
    count, n, value_width = read_dataset_header(path)
    with open(path, "rb") as fh:
        fh.seek(_DATASET_HEADER.size)
        records = np.fromfile(fh, dtype=_record_dtype(n, value_width), count=count)
    if records.shape[0] != count:
        raise ParseError(
            f"expected {count} records, found {records.shape[0]}", path=path
        )
    return Dataset(records["id"].astype(np.int64), records["values"])


def import_csv(csv_path, out_path, value_width: int = 4) -> FsPath:
    """Convert a CSV export (id in column 0, one series per line) to a
    dataset file."""
    csv_path = FsPath(csv_path)
    ids: list[int] = []
    rows: list[list[float]] = []
    width: int | None = None
    try:
        lines = csv_path.read_text().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read {csv_path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) < 2:
            raise ParseError("need an id and at least one value", path=csv_path, location=f"line {lineno}")
        try:
            ids.append(int(cells[0]))
            rows.append([float(cell) for cell in cells[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), path=csv_path, location=f"line {lineno}") from exc
        if width is None:
            width = len(cells) - 1
        elif len(cells) - 1 != width:
            raise ParseError(
                f"row has {len(cells) - 1} values, expected {width}",
                path=csv_path,
                location=f"line {lineno}",
            )
    if not ids:
        raise ParseError("no records found", path=csv_path)
    return write_dataset(out_path, np.array(ids), np.array(rows), value_width)


def sample_partitions(paths: Sequence, alpha: float, seed: int) -> Dataset:
    """Read ceil(alpha * file count) whole input files, chosen uniformly.

    Partition-level sampling: whole files are taken so no file needs a
    partial scan. Deterministic under ``seed``; selected files load in
    path-list order.
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"sample fraction alpha={alpha} not in (0, 1]")
    paths = [FsPath(p) for p in paths]
    if not paths:
        raise StorageError("no input dataset files to sample")
    take = int(np.ceil(alpha * len(paths)))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(paths), size=take, replace=False).tolist())
    parts = [read_dataset(paths[i]) for i in chosen]
    ids = np.concatenate([p.ids for p in parts])
    values = np.concatenate([p.values for p in parts])
    return Dataset(ids, values)


# ---------------------------------------------------------------------------
# Partition files


def write_partition(
    path,
    partition_id: int,
    group_id: int,
    clusters: Sequence[tuple[str, np.ndarray, np.ndarray]],
    n: int,
    value_width: int = 4,
) -> FsPath:
    """Write one partition file; ``clusters`` holds (node path, ids, values)
    groups that are laid out contiguously in the given order."""
    path = FsPath(path)
    entries = []
    offset = 0
    for node_path, ids, _values in clusters:
        entries.append((node_path.encode("ascii"), offset, ids.shape[0]))
        offset += ids.shape[0]
    with open(path, "wb") as fh:
        fh.write(
            _PARTITION_HEADER.pack(
                PARTITION_MAGIC, FORMAT_VERSION, partition_id, group_id, len(entries)
            )
        )
        for encoded, off, count in entries:
            fh.write(_CLUSTER_ENTRY.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_CLUSTER_TAIL.pack(off, count))
        for _node_path, ids, values in clusters:
            records = np.empty(ids.shape[0], dtype=_record_dtype(n, value_width))
            records["id"] = ids.astype(np.uint64)
            records["values"] = values
            records.tofile(fh)
    return path


class PartitionReader:
    """Random access to one partition file's clusters.

    The record shape is not part of the wire format; it comes from the
    skeleton config of the index this partition belongs to.
    """

    def __init__(self, path, n: int, value_width: int = 4):
        self.path = FsPath(path)
        self.n = n
        self.value_width = value_width
        self._dtype = _record_dtype(n, value_width)
        try:
            with open(self.path, "rb") as fh:
                raw = fh.read(_PARTITION_HEADER.size)
                if len(raw) < _PARTITION_HEADER.size:
                    raise ParseError("truncated partition header", path=self.path)
                magic, version, pid, gid, cluster_count = _PARTITION_HEADER.unpack(raw)
                if magic != PARTITION_MAGIC:
                    raise ParseError(f"bad magic {magic!r}", path=self.path, location=0)
                if version != FORMAT_VERSION:
                    raise ParseError(
                        f"unsupported version {version}", path=self.path, location=4
                    )
                self.partition_id = pid
                self.group_id = gid
                self.clusters: list[tuple[str, int, int]] = []
                for _ in range(cluster_count):
                    (path_len,) = _CLUSTER_ENTRY.unpack(fh.read(_CLUSTER_ENTRY.size))
                    node_path = fh.read(path_len).decode("ascii")
                    off, count = _CLUSTER_TAIL.unpack(fh.read(_CLUSTER_TAIL.size))
                    self.clusters.append((node_path, off, count))
                self._body_start = fh.tell()
        except OSError as exc:
            raise StorageError(f"cannot open partition file {self.path}: {exc}") from exc

    @property
    def record_count(self) -> int:
        return sum(count for _, _, count in self.clusters)

    def read_cluster(self, node_path: str) -> tuple[np.ndarray, np.ndarray]:
        """Records stored under ``node_path`` or any descendant cluster.

        Unknown paths yield an empty result; queries may legitimately
        target internal nodes that this partition does not cover.
        """
        matches = [
            (off, count)
            for stored, off, count in self.clusters
            if path_is_prefix(node_path, stored)
        ]
        if not matches:
            empty = np.empty(0, dtype=self._dtype)
            return empty["id"].astype(np.int64), empty["values"]
        ids: list[np.ndarray] = []
        values: list[np.ndarray] = []
        with open(self.path, "rb") as fh:
            for off, count in matches:
                fh.seek(self._body_start + off * self._dtype.itemsize)
                records = np.fromfile(fh, dtype=self._dtype, count=count)
                if records.shape[0] != count:
                    raise ParseError(
                        f"cluster at offset {off} truncated", path=self.path
                    )
                ids.append(records["id"].astype(np.int64))
                values.append(records["values"])
        return np.concatenate(ids), np.concatenate(values)

    def read_all(self) -> tuple[np.ndarray, np.ndarray]:
        return self.read_cluster("")


def read_cluster(partition: PartitionReader, node_path: str):
    """Free-function alias for :meth:`PartitionReader.read_cluster`."""
    return partition.read_cluster(node_path)


# ---------------------------------------------------------------------------
# Redistribution


@dataclass
class RedistributeStats:
    records_in: int = 0
    records_out: int = 0
    defaulted_records: int = 0
    partition_counts: dict[int, int] = field(default_factory=dict)
    group_counts: dict[int, int] = field(default_factory=dict)
    conversion_seconds: float = 0.0
    write_seconds: float = 0.0


def redistribute(
    paths: Sequence,
    pivots: PivotSet,
    skeleton: IndexSkeleton,
    out_dir,
) -> RedistributeStats:
    """Route every input record through its dual signature into partition
    files under ``out_dir``.

    Records whose rank-sensitive walk ends on a leaf join that leaf's
    cluster; walks stopping early join the group's default partition under
    the path they reached. With any input at all, every partition in the
    skeleton directory is materialized (possibly empty) so routing targets
    always exist on disk; empty input writes nothing.
    """
    cfg = skeleton.config
    if pivots.dimension != cfg.w:
        raise ConfigError(
            f"pivot dimension {pivots.dimension} does not match configured w={cfg.w}"
        )
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = RedistributeStats()
    # pid -> cluster path -> [ids...], [value blocks...]
    buffers: dict[int, dict[str, tuple[list, list]]] = {}

    t_convert = 0.0
    for path in paths:
        data = read_dataset(path)
        if len(data) == 0:
            continue
        if cfg.series_length is not None and data.length != cfg.series_length:
            raise ConfigError(
                f"{path}: series length {data.length} does not match index "
                f"series_length {cfg.series_length}"
            )
        stats.records_in += len(data)
        t0 = time.perf_counter()
        rs_matrix = signature_matrix(paa_matrix(data.values, cfg.w), pivots, cfg.m)
        gids = assign_groups_batch(rs_matrix, skeleton.centroids, cfg.decay, cfg.seed)
        for i in range(len(data)):
            gid = int(gids[i])
            node, walked = walk_trie(skeleton.tries[gid], rs_matrix[i])
            if node.is_leaf:
                (pid,) = node.partition_ids
            else:
                pid = skeleton.default_partition[gid]
                stats.defaulted_records += 1
            cluster = path_str(walked)
            slot = buffers.setdefault(pid, {}).setdefault(cluster, ([], []))
            slot[0].append(int(data.ids[i]))
            slot[1].append(data.values[i])
            stats.group_counts[gid] = stats.group_counts.get(gid, 0) + 1
        t_convert += time.perf_counter() - t0
    stats.conversion_seconds = t_convert

    if stats.records_in == 0:
        return stats

    t0 = time.perf_counter()
    value_width = cfg.value_width
    n = cfg.series_length
    for pid, _est in skeleton.partition_directory:
        gid = skeleton.group_of_partition(pid)
        clusters = []
        for cluster_path in sorted(buffers.get(pid, {})):
            id_list, value_list = buffers[pid][cluster_path]
            clusters.append(
                (cluster_path, np.array(id_list, dtype=np.int64), np.stack(value_list))
            )
        write_partition(
            out_dir / PARTITION_FILE_FMT.format(pid), pid, gid, clusters, n, value_width
        )
        count = sum(ids.shape[0] for _, ids, _ in clusters)
        stats.partition_counts[pid] = count
        stats.records_out += count
    stats.write_seconds = time.perf_counter() - t0
    return stats


# ---------------------------------------------------------------------------
# Skeleton serialization


def _trie_to_json(node: TrieNode) -> dict:
    return {
        "pivot_id": node.pivot_id,
        "size": int(node.size),
        "partition_ids": sorted(int(p) for p in node.partition_ids),
        "children": {
            str(pid): _trie_to_json(child) for pid, child in node.children.items()
        },
    }


def _trie_from_json(obj: dict, path) -> TrieNode:
    try:
        node = TrieNode(
            pivot_id=obj["pivot_id"],
            size=int(obj["size"]),
            partition_ids=set(obj["partition_ids"]),
            children={
                int(pid): _trie_from_json(child, path)
                for pid, child in obj["children"].items()
            },
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trie node: {exc}", path=path) from exc
    return node


def skeleton_to_json(skeleton: IndexSkeleton, pivots: PivotSet) -> str:
    cfg = skeleton.config
    doc = {
        "magic": SKELETON_MAGIC,
        "version": FORMAT_VERSION,
        "config": {
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
        },
        "pivots": {
            "seed": pivots.seed,
            "ids": list(pivots.ids),
            "vectors": pivots.vectors.tolist(),
        },
        "centroids": [
            {
                "group_id": cent.group_id,
                "signature": list(cent.signature) if cent.signature else None,
            }
            for cent in skeleton.centroids
        ],
        "tries": {str(gid): _trie_to_json(root) for gid, root in skeleton.tries.items()},
        "default_partitions": {
            str(gid): pid for gid, pid in skeleton.default_partition.items()
        },
        "partitions": [[pid, size] for pid, size in skeleton.partition_directory],
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def serialize_skeleton(skeleton: IndexSkeleton, pivots: PivotSet, path) -> FsPath:
    path = FsPath(path)
    path.write_text(skeleton_to_json(skeleton, pivots))
    return path


def deserialize_skeleton(path) -> tuple[IndexSkeleton, PivotSet]:
    path = FsPath(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise StorageError(f"cannot read skeleton file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, location=f"line {exc.lineno}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != SKELETON_MAGIC:
        raise ParseError(
            f"bad magic {doc.get('magic')!r}" if isinstance(doc, dict) else "not a JSON object",
            path=path,
            location="$.magic",
        )
    if doc.get("version") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported version {doc.get('version')}", path=path, location="$.version"
        )
    try:
        cfg_doc = doc["config"]
        decay_doc = cfg_doc["decay"]
        cfg = BuildConfig(
            w=cfg_doc["w"],
            r=cfg_doc["r"],
            m=cfg_doc["m"],
            c=cfg_doc["c"],
            alpha=cfg_doc["alpha"],
            epsilon=cfg_doc["epsilon"],
            max_centroids=cfg_doc["max_centroids"],
            decay=DecaySpec(kind=decay_doc["kind"], lam=decay_doc["lam"]),
            seed=cfg_doc["seed"],
            series_length=cfg_doc["series_length"],
            value_width=cfg_doc["value_width"],
        )
        pivots = PivotSet(np.array(doc["pivots"]["vectors"], dtype=np.float64), doc["pivots"]["seed"])
        centroids = [
            Centroid(
                group_id=cent["group_id"],
                signature=tuple(cent["signature"]) if cent["signature"] else None,
            )
            for cent in doc["centroids"]
        ]
        tries = {
            int(gid): _trie_from_json(node, path) for gid, node in doc["tries"].items()
        }
        default_partition = {
            int(gid): int(pid) for gid, pid in doc["default_partitions"].items()
        }
        directory = [(int(pid), int(size)) for pid, size in doc["partitions"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field: {exc}", path=path) from exc
    skeleton = IndexSkeleton(
        centroids=centroids,
        tries=tries,
        default_partition=default_partition,
        partition_directory=directory,
        config=cfg,
    )
    return skeleton, pivots


# ---------------------------------------------------------------------------
# Partition store


class PartitionStore:
    """Read access to a built index directory, with per-partition caching.

    Readers are safe to share across query threads; nothing here mutates
    the files.
    """

    def __init__(self, directory, skeleton: IndexSkeleton):
        self.directory = FsPath(directory)
        self.skeleton = skeleton
        cfg = skeleton.config
        if cfg.series_length is None:
            raise ConfigError("skeleton config lacks series_length; cannot open store")
        self.series_length = cfg.series_length
        self.value_width = cfg.value_width
        self._readers: dict[int, PartitionReader] = {}
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._all: tuple[np.ndarray, np.ndarray] | None = None
        self._lock = threading.Lock()

    def partition_ids(self) -> list[int]:
        return [pid for pid, _ in self.skeleton.partition_directory]

    def partition_path(self, pid: int) -> FsPath:
        return self.directory / PARTITION_FILE_FMT.format(pid)

    def partition(self, pid: int) -> PartitionReader:
        with self._lock:
            reader = self._readers.get(pid)
        if reader is not None:
            return reader
        path = self.partition_path(pid)
        if not path.exists():
            raise StorageError(f"missing partition file {path}")
        reader = PartitionReader(path, self.series_length, self.value_width)
        with self._lock:
            self._readers[pid] = reader
        return reader

    def read_full_partition(self, pid: int) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            cached = self._cache.get(pid)
        if cached is not None:
            return cached
        data = self.partition(pid).read_all()
        with self._lock:
            self._cache[pid] = data
        return data

    def load_all(self) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if self._all is not None:
                return self._all
        parts = [self.read_full_partition(pid) for pid in self.partition_ids()]
        if parts:
            ids = np.concatenate([p[0] for p in parts])
            values = np.concatenate([p[1] for p in parts])
        else:
            ids = np.empty(0, dtype=np.int64)
            values = np.empty((0, self.series_length))
        with self._lock:
            self._all = (ids, values)
        return self._all

    def record_count(self) -> int:
        return int(self.load_all()[0].shape[0])


def open_index(directory) -> tuple[IndexSkeleton, PivotSet, PartitionStore]:
    """Load skeleton, pivots, and a partition store from an index directory."""
    directory = FsPath(directory)
    skeleton_path = directory / SKELETON_FILE
    if not skeleton_path.exists():
        raise StorageError(f"no {SKELETON_FILE} under {directory}")
    skeleton, pivots = deserialize_skeleton(skeleton_path)
    return skeleton, pivots, PartitionStore(directory, skeleton)
