"""Query routing and answering.

Three approximate strategies plus the exact-scan oracle. Group choice at
query time must agree with the choice made when records were routed to
partitions, so all tie-breaking is keyed by the query's own signature;
a record used as its own query therefore always lands on the partition
that stores it. Candidate sets grow monotonically from plain knn through
the adaptive variants to the smallest-overlap scan, which makes per-query
recall nondecreasing along that chain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .build import (
    FALLBACK_GROUP,
    Centroid,
    IndexSkeleton,
    TrieNode,
    walk_trie,
)
from .errors import InputError, QueryError
from .series import DataSeries, paa_values, rank_by_distance, distances_to_many
from .signature import (
    DualSignature,
    PivotSet,
    dual_signature,
    overlap_distance,
    signature_choice,
    weight_distance,
)
from .storage import PartitionStore, path_str

MODES = ("knn", "adaptive2x", "adaptive4x", "od_smallest", "scan")
ADAPTIVE_MULTIPLIERS = {"adaptive2x": 2, "adaptive4x": 4}


@dataclass(frozen=True)
class QuerySpec:
    """One query: the series, the answer size, and the strategy."""

    series: DataSeries
    k: int
    mode: str = "adaptive4x"

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"answer size k={self.k} must be >= 1")
        if self.mode not in MODES:
            raise InputError(f"unknown query mode {self.mode!r}; choose from {MODES}")

    @property
    def multiplier(self) -> int | None:
        return ADAPTIVE_MULTIPLIERS.get(self.mode)


@dataclass(frozen=True)
class StopNode:
    """Deepest matched trie node for one group."""

    group_id: int
    path: str
    depth: int
    size: int


@dataclass(frozen=True)
class RoutingPlan:
    """Partitions and cluster paths a query will read."""

    group_ids: tuple[int, ...]
    stop_nodes: tuple[StopNode, ...]
    targets: tuple[tuple[int, tuple[str, ...]], ...]

    @property
    def partition_ids(self) -> tuple[int, ...]:
        return tuple(pid for pid, _ in self.targets)


@dataclass
class QueryResult:
    neighbors: list[tuple[int, float]]
    partitions_accessed: int
    records_examined: int
    elapsed: float = 0.0

    def neighbor_ids(self) -> list[int]:
        return [nid for nid, _ in self.neighbors]


def _query_signature(
    q: QuerySpec, skeleton: IndexSkeleton, pivots: PivotSet
) -> DualSignature:
    cfg = skeleton.config
    if cfg.series_length is not None and len(q.series) != cfg.series_length:
        raise InputError(
            f"query length {len(q.series)} does not match index length {cfg.series_length}"
        )
    return dual_signature(paa_values(q.series.values, cfg.w), pivots, cfg.m)


def _smallest_od_groups(
    sig: DualSignature, centroids: Sequence[Centroid]
) -> list[int]:
    """Group ids at the minimum overlap distance, ascending; the fall-back
    group alone when nothing overlaps."""
    real = sorted(
        (c for c in centroids if c.signature is not None), key=lambda c: c.group_id
    )
    if not real:
        return [FALLBACK_GROUP]
    ods = [overlap_distance(sig.rank_insensitive, c.signature) for c in real]
    best = min(ods)
    if best == sig.prefix_length:
        return [FALLBACK_GROUP]
    return [c.group_id for c, od in zip(real, ods) if od == best]


def _choose_group(
    sig: DualSignature,
    candidates: list[int],
    skeleton: IndexSkeleton,
) -> int:
    """Narrow tied groups exactly the way record routing does.

    Weight distance first; any remaining tie resolves through the same
    signature-keyed pick used at assignment time, so a stored record's
    query always selects the group holding it.
    """
    if len(candidates) == 1:
        return candidates[0]
    by_gid = {c.group_id: c for c in skeleton.centroids}
    wds = [
        weight_distance(sig, by_gid[g].signature, skeleton.config.decay)
        for g in candidates
    ]
    best = min(wds)
    tied = [g for g, wd in zip(candidates, wds) if wd == best]
    if len(tied) == 1:
        return tied[0]
    pick = signature_choice(skeleton.config.seed, sig.rank_sensitive, len(tied))
    return tied[pick]


def _node_partitions(skeleton: IndexSkeleton, group_id: int, node: TrieNode) -> set[int]:
    # Internal stops also cover the group's default partition, where
    # records with unseen deeper prefixes were placed.
    parts = set(node.partition_ids)
    if not node.is_leaf:
        parts.add(skeleton.default_partition[group_id])
    return parts


def _check_index(skeleton: IndexSkeleton) -> None:
    if not skeleton.centroids or not skeleton.partition_directory:
        raise QueryError("index skeleton is empty")


def route_knn(
    q: QuerySpec, skeleton: IndexSkeleton, pivots: PivotSet
) -> RoutingPlan:
    """Single-group routing: best group by overlap distance (weight
    distance, then a seeded signature-keyed pick on ties), then the
    deepest trie node matching the query's rank-sensitive prefix."""
    _check_index(skeleton)
    sig = _query_signature(q, skeleton, pivots)
    return _route_knn_sig(sig, skeleton)


def _route_knn_sig(sig: DualSignature, skeleton: IndexSkeleton) -> RoutingPlan:
    candidates = _smallest_od_groups(sig, skeleton.centroids)
    gid = _choose_group(sig, candidates, skeleton)
    node, walked = walk_trie(skeleton.tries[gid], sig.rank_sensitive)
    cluster = path_str(walked)
    parts = sorted(_node_partitions(skeleton, gid, node))
    stop = StopNode(gid, cluster, len(walked), node.size)
    return RoutingPlan(
        group_ids=(gid,),
        stop_nodes=(stop,),
        targets=tuple((pid, (cluster,)) for pid in parts),
    )


def route_adaptive(
    q: QuerySpec, skeleton: IndexSkeleton, pivots: PivotSet
) -> RoutingPlan:
    """knn routing that widens when the matched node looks smaller than k.

    Extra trie nodes are drawn from every group at the smallest overlap
    distance, walking each group's matched chain from the deepest node
    upward (longer path first, then larger node, then smaller group id),
    until the estimated candidate mass covers k or the partition cap
    (multiplier x the base plan's partitions) would be exceeded. Once any
    node is appended the plan reads all its partitions in full, which
    keeps candidate sets nested across the 2x/4x presets.
    """
    _check_index(skeleton)
    multiplier = q.multiplier
    if multiplier is None:
        raise InputError(f"mode {q.mode!r} is not an adaptive preset")
    sig = _query_signature(q, skeleton, pivots)
    base = _route_knn_sig(sig, skeleton)
    base_stop = base.stop_nodes[0]
    if base_stop.size >= q.k:
        return base

    memorized = _smallest_od_groups(sig, skeleton.centroids)
    cap = multiplier * len(base.targets)

    # Candidate nodes: the matched chain of every memorized group.
    candidates: list[tuple[int, int, int, TrieNode, str]] = []
    for gid in memorized:
        node = skeleton.tries[gid]
        chain = [(node, ())]
        walked: list[int] = []
        for pivot_id in sig.rank_sensitive:
            child = node.children.get(int(pivot_id))
            if child is None:
                break
            walked.append(int(pivot_id))
            node = child
            chain.append((node, tuple(walked)))
        for node, path in chain:
            candidates.append((len(path), node.size, gid, node, path_str(path)))
    candidates.sort(key=lambda cand: (-cand[0], -cand[1], cand[2]))

    parts = set(base.partition_ids)
    covered: dict[int, int] = {base_stop.group_id: base_stop.size}
    cumulative = base_stop.size
    appended: list[StopNode] = []
    for depth, size, gid, node, cluster in candidates:
        if cumulative >= q.k:
            break
        if gid == base_stop.group_id and cluster == base_stop.path:
            continue
        new_parts = parts | _node_partitions(skeleton, gid, node)
        if len(new_parts) > cap:
            break
        parts = new_parts
        gain = max(0, size - covered.get(gid, 0))
        covered[gid] = max(covered.get(gid, 0), size)
        cumulative += gain
        appended.append(StopNode(gid, cluster, depth, size))

    if not appended:
        return base
    group_ids = tuple(sorted({base_stop.group_id} | {s.group_id for s in appended}))
    return RoutingPlan(
        group_ids=group_ids,
        stop_nodes=(base_stop, *appended),
        targets=tuple((pid, ("",)) for pid in sorted(parts)),
    )


def route_od_smallest(
    q: QuerySpec, skeleton: IndexSkeleton, pivots: PivotSet
) -> RoutingPlan:
    """Every partition of every smallest-overlap group, read in full."""
    _check_index(skeleton)
    sig = _query_signature(q, skeleton, pivots)
    groups = _smallest_od_groups(sig, skeleton.centroids)
    stops = []
    parts: set[int] = set()
    for gid in groups:
        node, walked = walk_trie(skeleton.tries[gid], sig.rank_sensitive)
        stops.append(StopNode(gid, path_str(walked), len(walked), node.size))
        parts |= skeleton.partitions_of_group(gid)
    return RoutingPlan(
        group_ids=tuple(groups),
        stop_nodes=tuple(stops),
        targets=tuple((pid, ("",)) for pid in sorted(parts)),
    )


def plan_full(skeleton: IndexSkeleton) -> RoutingPlan:
    """A plan covering every partition's root cluster."""
    _check_index(skeleton)
    stops = tuple(
        StopNode(gid, "", 0, skeleton.tries[gid].size) for gid in sorted(skeleton.tries)
    )
    return RoutingPlan(
        group_ids=tuple(sorted(skeleton.tries)),
        stop_nodes=stops,
        targets=tuple(
            (pid, ("",)) for pid, _ in sorted(skeleton.partition_directory)
        ),
    )


def _minimize_paths(paths: Sequence[str]) -> list[str]:
    """Drop paths already covered by a shorter prefix in the same set."""
    from .storage import path_is_prefix

    keep: list[str] = []
    for path in sorted(set(paths), key=lambda p: (p.count("/") if p else -1, p)):
        if not any(path_is_prefix(prior, path) for prior in keep):
            keep.append(path)
    return keep


def execute(plan: RoutingPlan, q: QuerySpec, store: PartitionStore) -> QueryResult:
    """Load the plan's clusters, widen to whole partitions if they hold
    fewer than k candidates, and rank by true distance (ties by id)."""
    t0 = time.perf_counter()
    id_blocks: list[np.ndarray] = []
    value_blocks: list[np.ndarray] = []
    for pid, paths in plan.targets:
        reader = store.partition(pid)
        for cluster in _minimize_paths(paths):
            if cluster == "":
                ids, values = store.read_full_partition(pid)
            else:
                ids, values = reader.read_cluster(cluster)
            if ids.shape[0]:
                id_blocks.append(ids)
                value_blocks.append(values)
    ids, values = _merge_unique(id_blocks, value_blocks, store)
    if ids.shape[0] < q.k:
        id_blocks, value_blocks = [], []
        for pid, _paths in plan.targets:
            full_ids, full_values = store.read_full_partition(pid)
            if full_ids.shape[0]:
                id_blocks.append(full_ids)
                value_blocks.append(full_values)
        ids, values = _merge_unique(id_blocks, value_blocks, store)
    if ids.shape[0]:
        dists = distances_to_many(q.series.values, values)
        neighbors = rank_by_distance(ids, dists, q.k)
    else:
        neighbors = []
    return QueryResult(
        neighbors=neighbors,
        partitions_accessed=len({pid for pid, _ in plan.targets}),
        records_examined=int(ids.shape[0]),
        elapsed=time.perf_counter() - t0,
    )


def _merge_unique(
    id_blocks: list[np.ndarray], value_blocks: list[np.ndarray], store: PartitionStore
) -> tuple[np.ndarray, np.ndarray]:
    if not id_blocks:
        return (
            np.empty(0, dtype=np.int64),
            np.empty((0, store.series_length)),
        )
    ids = np.concatenate(id_blocks)
    values = np.concatenate(value_blocks)
    uniq, first = np.unique(ids, return_index=True)
    if uniq.shape[0] != ids.shape[0]:
        order = np.sort(first)
        ids = ids[order]
        values = values[order]
    return ids, values


def scan_exact(q: QuerySpec, store: PartitionStore) -> QueryResult:
    """Full scan over every partition: the exact answer."""
    t0 = time.perf_counter()
    ids, values = store.load_all()
    if ids.shape[0]:
        dists = distances_to_many(q.series.values, values)
        neighbors = rank_by_distance(ids, dists, q.k)
    else:
        neighbors = []
    return QueryResult(
        neighbors=neighbors,
        partitions_accessed=len(store.partition_ids()),
        records_examined=int(ids.shape[0]),
        elapsed=time.perf_counter() - t0,
    )


def route(q: QuerySpec, skeleton: IndexSkeleton, pivots: PivotSet) -> RoutingPlan:
    if q.mode == "knn":
        return route_knn(q, skeleton, pivots)
    if q.mode in ADAPTIVE_MULTIPLIERS:
        return route_adaptive(q, skeleton, pivots)
    if q.mode == "od_smallest":
        return route_od_smallest(q, skeleton, pivots)
    raise InputError(f"mode {q.mode!r} has no routing plan")


def answer(
    q: QuerySpec,
    skeleton: IndexSkeleton,
    pivots: PivotSet,
    store: PartitionStore,
) -> QueryResult:
    """Dispatch one query by its mode."""
    if q.mode == "scan":
        return scan_exact(q, store)
    return execute(route(q, skeleton, pivots), q, store)
