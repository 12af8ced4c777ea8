"""Index skeleton construction.

Two levels: coarse groups around frequency-derived centroids in the
rank-insensitive space, then per-group tries over rank-sensitive prefixes
whose leaves are bin-packed into capacity-bounded partitions. Everything
here operates on aggregated sample statistics; the skeleton it emits is a
small immutable object that later drives full-data redistribution and
query routing.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import BuildError, ConfigError, InputError
from .series import Dataset, paa_matrix
from .signature import (
    DecaySpec,
    DualSignature,
    PivotSet,
    overlap_distance,
    select_pivots,
    signature_choice,
    signature_matrix,
    weight_distance,
)

FALLBACK_GROUP = 0

Path = tuple[int, ...]


@dataclass(frozen=True)
class Centroid:
    """A group's rank-insensitive anchor; ``signature is None`` marks the
    wildcard fall-back group 0."""

    group_id: int
    signature: tuple[int, ...] | None


@dataclass
class TrieNode:
    """Prefix-tree node; ``size`` is the extrapolated object count routed
    through it and ``partition_ids`` the partitions covering its subtree."""

    pivot_id: int | None = None
    size: int = 0
    children: dict[int, "TrieNode"] = field(default_factory=dict)
    partition_ids: set[int] = field(default_factory=set)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children.values())

    def max_depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(c.max_depth() for c in self.children.values())


@dataclass(frozen=True)
class BuildConfig:
    """All build parameters; validated on construction.

    ``series_length`` and ``value_width`` describe the indexed records and
    are filled in by the build pipeline so a stored skeleton is
    self-describing.
    """

    w: int = 16
    r: int = 200
    m: int = 10
    c: int = 2000
    alpha: float = 0.1
    epsilon: int = 2
    max_centroids: int | None = None
    decay: DecaySpec = field(default_factory=DecaySpec)
    seed: int = 0
    series_length: int | None = None
    value_width: int = 4

    def __post_init__(self):
        if self.w < 1:
            raise ConfigError(f"segment count w={self.w} must be >= 1")
        if self.m < 1 or self.m > self.r:
            raise ConfigError(f"prefix length m={self.m} must satisfy 1 <= m <= r={self.r}")
        if self.c < 1:
            raise ConfigError(f"partition capacity c={self.c} must be >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"sample fraction alpha={self.alpha} not in (0, 1]")
        if not (1 <= self.epsilon <= self.m):
            raise ConfigError(
                f"centroid separation epsilon={self.epsilon} not in [1, m={self.m}]"
            )
        if self.max_centroids is not None and self.max_centroids < 1:
            raise ConfigError("max_centroids must be >= 1 when set")
        if self.value_width not in (4, 8):
            raise ConfigError(f"value width {self.value_width} must be 4 or 8")


@dataclass
class IndexSkeleton:
    """The small global index: centroids, per-group tries, partition map."""

    centroids: list[Centroid]
    tries: dict[int, TrieNode]
    default_partition: dict[int, int]
    partition_directory: list[tuple[int, int]]
    config: BuildConfig

    def group_ids(self) -> list[int]:
        return [c.group_id for c in self.centroids]

    def partitions_of_group(self, group_id: int) -> set[int]:
        return set(self.tries[group_id].partition_ids)

    def partition_count(self) -> int:
        return len(self.partition_directory)

    def group_of_partition(self, partition_id: int) -> int:
        for gid, root in self.tries.items():
            if partition_id in root.partition_ids:
                return gid
        raise InputError(f"partition {partition_id} not present in any group")


def aggregate_signatures(
    sigs: Iterable[DualSignature],
) -> tuple[list[tuple[tuple[int, ...], int]], list[tuple[tuple[int, ...], int]]]:
    """Exact-match frequency tables for both signature views."""
    rs_counts: Counter = Counter()
    for sig in sigs:
        rs_counts[sig.rank_sensitive] += 1
    ri_counts: Counter = Counter()
    for rs, freq in rs_counts.items():
        ri_counts[tuple(sorted(rs))] += freq
    return list(rs_counts.items()), list(ri_counts.items())


def compute_centroids(
    L: Sequence[tuple[tuple[int, ...], int]], cfg: BuildConfig
) -> list[Centroid]:
    """Greedy centroid discovery over the rank-insensitive frequency table.

    Descending by frequency, a candidate is accepted unless it is closer
    than ``epsilon`` (overlap distance) to an accepted centroid, and the
    scan stops once the estimated group size for a candidate falls below
    ``alpha * c`` or ``max_centroids`` is reached. The wildcard fall-back
    centroid is always present as group 0. Frequency ties order by
    ascending signature so builds are reproducible.
    """
    if not L:
        raise BuildError("cannot compute centroids from an empty signature table")
    entries = sorted(L, key=lambda e: (-e[1], e[0]))
    total_freq = sum(freq for _, freq in entries)
    accepted: list[tuple[int, ...]] = []
    accepted_freq = 0

    for i, (sig, freq) in enumerate(entries):
        if i > 0:
            if any(overlap_distance(sig, prior) < cfg.epsilon for prior in accepted):
                continue
            # Remaining mass assumed uniform over the would-be centroid set.
            non_centroid_freq = total_freq - accepted_freq
            size_est = freq + non_centroid_freq / (len(accepted) + 1)
            if size_est < cfg.alpha * cfg.c:
                break
        accepted.append(sig)
        accepted_freq += freq
        if cfg.max_centroids is not None and len(accepted) >= cfg.max_centroids:
            break

    centroids = [Centroid(FALLBACK_GROUP, None)]
    centroids += [Centroid(gid, sig) for gid, sig in enumerate(accepted, start=1)]
    return centroids


def _resolve_group(
    sig: DualSignature,
    real_centroids: Sequence[Centroid],
    ods: Sequence[int],
    decay: DecaySpec,
    seed: int,
) -> int:
    m = sig.prefix_length
    best_od = min(ods)
    if best_od == m:
        return FALLBACK_GROUP
    tied = [c for c, od in zip(real_centroids, ods) if od == best_od]
    if len(tied) == 1:
        return tied[0].group_id
    wds = [weight_distance(sig, c.signature, decay) for c in tied]
    best_wd = min(wds)
    tied = [c for c, wd in zip(tied, wds) if wd == best_wd]
    if len(tied) == 1:
        return tied[0].group_id
    pick = signature_choice(seed, sig.rank_sensitive, len(tied))
    return tied[pick].group_id


def assign_group(
    sig: DualSignature,
    centroids: Sequence[Centroid],
    decay: DecaySpec,
    seed: int,
) -> int:
    """Route one signature to a group: smallest overlap distance, ties by
    smallest weight distance, remaining ties by a seeded signature-keyed
    pick; zero overlap with every centroid falls back to group 0."""
    real = [c for c in centroids if c.signature is not None]
    if not any(c.group_id == FALLBACK_GROUP for c in centroids):
        raise InputError("centroid list lacks the fall-back group 0")
    if not real:
        return FALLBACK_GROUP
    ods = [overlap_distance(sig.rank_insensitive, c.signature) for c in real]
    return _resolve_group(sig, real, ods, decay, seed)


def assign_groups_batch(
    rs_matrix: np.ndarray,
    centroids: Sequence[Centroid],
    decay: DecaySpec,
    seed: int,
) -> np.ndarray:
    """Vectorized group assignment for an (N, m) rank-sensitive id matrix.

    Unambiguous rows resolve through integer overlap counts; tied rows go
    through the same scalar path as :func:`assign_group`.
    """
    real = sorted(
        (c for c in centroids if c.signature is not None), key=lambda c: c.group_id
    )
    n, m = rs_matrix.shape
    out = np.zeros(n, dtype=np.int64)
    if not real or n == 0:
        return out
    max_pivot = max(int(rs_matrix.max()), max(max(c.signature) for c in real))
    onehot = np.zeros((n, max_pivot + 1), dtype=np.uint8)
    onehot[np.arange(n)[:, None], rs_matrix] = 1
    overlaps = np.empty((n, len(real)), dtype=np.int64)
    for j, cent in enumerate(real):
        overlaps[:, j] = onehot[:, list(cent.signature)].sum(axis=1)
    ods = m - overlaps
    best = ods.min(axis=1)
    tie_counts = (ods == best[:, None]).sum(axis=1)

    gids = np.array([c.group_id for c in real], dtype=np.int64)
    unique = (tie_counts == 1) & (best < m)
    out[unique] = gids[np.argmin(ods[unique], axis=1)]
    out[best == m] = FALLBACK_GROUP

    for i in np.nonzero((tie_counts > 1) & (best < m))[0]:
        sig = DualSignature.from_rank_sensitive(rs_matrix[i].tolist())
        out[i] = _resolve_group(sig, real, ods[i].tolist(), decay, seed)
    return out


def build_trie(
    members: Sequence[tuple[Sequence[int], int]], c: int
) -> TrieNode:
    """Prefix trie over (rank-sensitive signature, size) members.

    A node splits on the next signature position while its size exceeds
    ``c`` and positions remain; a node at full prefix depth stays an
    oversized leaf.
    """
    if c < 1:
        raise ConfigError(f"capacity c={c} must be >= 1")
    members = [(tuple(int(p) for p in sig), int(freq)) for sig, freq in members]
    root = TrieNode(None, size=sum(freq for _, freq in members))
    _split_node(root, members, depth=0, c=c)
    return root


def _split_node(
    node: TrieNode, members: list[tuple[Path, int]], depth: int, c: int
) -> None:
    if node.size <= c or not members:
        return
    prefix_len = min(len(sig) for sig, _ in members)
    if depth >= prefix_len:
        return  # no further discrimination available
    buckets: dict[int, list[tuple[Path, int]]] = {}
    for sig, freq in members:
        buckets.setdefault(sig[depth], []).append((sig, freq))
    for pivot_id in sorted(buckets):
        sub = buckets[pivot_id]
        child = TrieNode(pivot_id, size=sum(freq for _, freq in sub))
        node.children[pivot_id] = child
        _split_node(child, sub, depth + 1, c)


def walk_trie(root: TrieNode, rank_sensitive: Sequence[int]) -> tuple[TrieNode, Path]:
    """Descend as far as the signature's pivots match edges; returns the
    deepest node reached and its path."""
    node = root
    path: list[int] = []
    for pivot_id in rank_sensitive:
        child = node.children.get(int(pivot_id))
        if child is None:
            break
        node = child
        path.append(int(pivot_id))
    return node, tuple(path)


def collect_leaves(root: TrieNode) -> list[tuple[Path, int]]:
    """(path, size) for every leaf, in depth-first path order."""
    out: list[tuple[Path, int]] = []

    def visit(node: TrieNode, path: Path) -> None:
        if node.is_leaf:
            out.append((path, node.size))
            return
        for pivot_id in sorted(node.children):
            visit(node.children[pivot_id], path + (pivot_id,))

    visit(root, ())
    return out


def pack_leaves(
    leaves: Sequence[tuple[Path, int]], c: int
) -> dict[Path, int]:
    """First-fit-decreasing packing of leaves into capacity-c partitions.

    Size ties order by path so packings are reproducible; a leaf larger
    than ``c`` opens a dedicated partition that nothing else can join.
    Returns leaf path -> partition ordinal (0-based, creation order).
    """
    ordered = sorted(leaves, key=lambda leaf: (-leaf[1], leaf[0]))
    remaining: list[int] = []
    placement: dict[Path, int] = {}
    for path, size in ordered:
        target = None
        for b, room in enumerate(remaining):
            if room >= size:
                target = b
                break
        if target is None:
            target = len(remaining)
            remaining.append(c)
        remaining[target] -= size
        placement[tuple(path)] = target
    return placement


def assemble_partitions(
    tries: dict[int, TrieNode], c: int
) -> tuple[dict[int, int], list[tuple[int, int]]]:
    """Pack every group's leaves and wire partition ids into the tries.

    Groups are processed in ascending id with globally dense partition
    numbering. Returns (default partition per group, partition directory
    of (id, estimated size)). Each group's default is its least-occupied
    partition, ties to the smaller id.
    """
    default_partition: dict[int, int] = {}
    directory: list[tuple[int, int]] = []
    next_pid = 0
    for gid in sorted(tries):
        root = tries[gid]
        leaves = collect_leaves(root)
        placement = pack_leaves(leaves, c)
        bin_count = max(placement.values()) + 1 if placement else 1
        sizes = [0] * bin_count
        pid_of_bin = [next_pid + b for b in range(bin_count)]
        for path, size in leaves:
            b = placement[path]
            sizes[b] += size
        _attach_partitions(root, (), placement, pid_of_bin)
        for b in range(bin_count):
            directory.append((pid_of_bin[b], sizes[b]))
        smallest = min(range(bin_count), key=lambda b: (sizes[b], pid_of_bin[b]))
        default_partition[gid] = pid_of_bin[smallest]
        next_pid += bin_count
    return default_partition, directory


def _attach_partitions(
    node: TrieNode, path: Path, placement: dict[Path, int], pid_of_bin: list[int]
) -> set[int]:
    if node.is_leaf:
        node.partition_ids = {pid_of_bin[placement[path]]}
        return node.partition_ids
    union: set[int] = set()
    for pivot_id, child in node.children.items():
        union |= _attach_partitions(child, path + (pivot_id,), placement, pid_of_bin)
    node.partition_ids = union
    return union


def build_skeleton(sample: Dataset, cfg: BuildConfig) -> tuple[PivotSet, IndexSkeleton]:
    """Full skeleton construction from a sample dataset.

    PAA -> pivot selection -> dual signatures -> frequency aggregation ->
    centroids -> per-signature group assignment -> per-group tries over
    1/alpha-extrapolated sizes -> leaf packing.
    """
    if len(sample) == 0:
        raise BuildError("cannot build a skeleton from an empty sample")
    if len(sample) < cfg.r:
        raise BuildError(
            f"sample of {len(sample)} series is smaller than pivot count r={cfg.r}"
        )
    if cfg.series_length is None:
        cfg = replace(cfg, series_length=sample.length)
    elif cfg.series_length != sample.length:
        raise BuildError(
            f"sample length {sample.length} differs from configured "
            f"series_length {cfg.series_length}"
        )

    paa_mat = paa_matrix(sample.values, cfg.w)
    pivots = select_pivots(paa_mat, cfg.r, cfg.seed)
    rs_matrix = signature_matrix(paa_mat, pivots, cfg.m)

    sigs = (DualSignature.from_rank_sensitive(row.tolist()) for row in rs_matrix)
    rs_table, ri_table = aggregate_signatures(sigs)
    centroids = compute_centroids(ri_table, cfg)

    # Assign each distinct signature once; extrapolate sample mass by 1/alpha.
    unique_rs = np.array([rs for rs, _ in rs_table], dtype=np.int64)
    gids = assign_groups_batch(unique_rs, centroids, cfg.decay, cfg.seed)
    members: dict[int, list[tuple[Path, int]]] = {c.group_id: [] for c in centroids}
    for (rs, freq), gid in zip(rs_table, gids):
        est = max(1, round(freq / cfg.alpha))
        members[int(gid)].append((rs, est))

    tries: dict[int, TrieNode] = {}
    for cent in centroids:
        gid = cent.group_id
        if gid == FALLBACK_GROUP:
            # Fall-back group keeps a flat trie regardless of size.
            tries[gid] = TrieNode(None, size=sum(f for _, f in members[gid]))
        else:
            tries[gid] = build_trie(members[gid], cfg.c)

    default_partition, directory = assemble_partitions(tries, cfg.c)
    skeleton = IndexSkeleton(
        centroids=centroids,
        tries=tries,
        default_partition=default_partition,
        partition_directory=directory,
        config=cfg,
    )
    return pivots, skeleton
