"""Pivot management and the dual prefix-signature calculus.

Each object carries two views of its m nearest pivots: a rank-sensitive
list ordered by proximity (fine granularity) and a rank-insensitive list
of the same ids in ascending order (coarse granularity). Group-level
comparisons use the overlap distance on the coarse view; ties fall back
to decay-weighted distances on the fine view.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BuildError, ConfigError, InputError
from .series import PaaVector

DECAY_KINDS = ("exponential", "linear")


class PivotSet:
    """r reference vectors with ids 1..r; fixed for the life of an index."""

    def __init__(self, vectors: np.ndarray, seed: int):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise InputError("pivot vectors must form a nonempty 2-D array")
        self.vectors = vectors
        self.seed = int(seed)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @property
    def ids(self) -> range:
        return range(1, self.count + 1)

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other) -> bool:
        if not isinstance(other, PivotSet):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.vectors, other.vectors)


@dataclass(frozen=True)
class DualSignature:
    """Rank-sensitive prefix and its id-sorted rank-insensitive form."""

    rank_sensitive: tuple[int, ...]
    rank_insensitive: tuple[int, ...]

    def __post_init__(self):
        rs, ri = self.rank_sensitive, self.rank_insensitive
        if len(rs) != len(ri):
            raise InputError("signature views differ in length")
        if len(set(rs)) != len(rs):
            raise InputError("rank-sensitive signature repeats a pivot id")
        if tuple(sorted(rs)) != tuple(ri):
            raise InputError("rank-insensitive view is not the sorted id set")

    @classmethod
    def from_rank_sensitive(cls, rs: Sequence[int]) -> "DualSignature":
        rs = tuple(int(p) for p in rs)
        return cls(rs, tuple(sorted(rs)))

    @property
    def prefix_length(self) -> int:
        return len(self.rank_sensitive)


@dataclass(frozen=True)
class DecaySpec:
    """Position-weight decay: exponential ``lam**(i-1)`` or linear ``(m-i+1)/m``.

    The linear rate is derived from the prefix length at evaluation time,
    so ``lam`` must be left unset for the linear kind.
    """

    kind: str = "exponential"
    lam: float | None = 0.5

    def __post_init__(self):
        if self.kind not in DECAY_KINDS:
            raise ConfigError(f"unknown decay kind {self.kind!r}")
        if self.kind == "exponential":
            if self.lam is None or not (0.0 < self.lam < 1.0):
                raise ConfigError(f"exponential decay rate {self.lam} not in (0, 1)")
        elif self.lam is not None:
            raise ConfigError("linear decay derives its rate from the prefix length")

    def weights(self, m: int) -> np.ndarray:
        if m < 1:
            raise ConfigError(f"prefix length {m} must be >= 1")
        positions = np.arange(1, m + 1, dtype=np.float64)
        if self.kind == "exponential":
            return self.lam ** (positions - 1.0)
        return (m - positions + 1.0) / m


def select_pivots(sample, r: int, seed: int) -> PivotSet:
    """Pick r distinct sample vectors uniformly at random under ``seed``."""
    if isinstance(sample, np.ndarray):
        matrix = np.asarray(sample, dtype=np.float64)
    else:
        rows = [
            np.asarray(v.means if isinstance(v, PaaVector) else v, dtype=np.float64)
            for v in sample
        ]
        if not rows:
            raise BuildError("empty sample: no vectors to select pivots from")
        matrix = np.stack(rows)
    if matrix.shape[0] < r:
        raise BuildError(
            f"sample of {matrix.shape[0]} vectors is smaller than pivot count r={r}"
        )
    if r < 1:
        raise ConfigError(f"pivot count r={r} must be >= 1")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(matrix.shape[0], size=r, replace=False)
    return PivotSet(matrix[chosen], seed)


def squared_distances(matrix: np.ndarray, pivots: PivotSet) -> np.ndarray:
    """(N, r) squared distances, computed pivot-by-pivot.

    The per-pivot difference form keeps every row's reduction identical
    whether it arrives alone or inside a batch, which signature
    reproducibility depends on.
    """
    mat = matrix.astype(np.float64, copy=False)
    out = np.empty((mat.shape[0], pivots.count), dtype=np.float64)
    for j in range(pivots.count):
        diff = mat - pivots.vectors[j]
        np.square(diff, out=diff)
        out[:, j] = np.sum(diff, axis=1)
    return out


def signature_matrix(matrix: np.ndarray, pivots: PivotSet, m: int) -> np.ndarray:
    """Rank-sensitive signatures for every row of a (N, w) matrix.

    Returns an (N, m) int array of pivot ids, nearest first. Equal
    distances resolve to the smaller pivot id (stable sort over columns
    already ordered by id).
    """
    if m < 1 or m > pivots.count:
        raise ConfigError(f"prefix length m={m} must satisfy 1 <= m <= r={pivots.count}")
    if matrix.shape[1] != pivots.dimension:
        raise InputError(
            f"vector dimension {matrix.shape[1]} differs from pivot dimension {pivots.dimension}"
        )
    d2 = squared_distances(matrix, pivots)
    order = np.argsort(d2, axis=1, kind="stable")[:, :m]
    return (order + 1).astype(np.int64)


def dual_signature(v, pivots: PivotSet, m: int) -> DualSignature:
    """Dual signature of one PAA vector."""
    vec = np.asarray(v.means if isinstance(v, PaaVector) else v, dtype=np.float64)
    rs = signature_matrix(vec[None, :], pivots, m)[0]
    return DualSignature.from_rank_sensitive(rs.tolist())


def overlap_distance(a: Sequence[int], b: Sequence[int]) -> int:
    """m minus the id-set intersection size, over two sorted id lists."""
    if len(a) != len(b):
        raise InputError(f"signature lengths differ: {len(a)} vs {len(b)}")
    # Linear merge; both inputs are strictly increasing by invariant.
    i = j = shared = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            shared += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return len(a) - shared


def pivot_weights(rank_sensitive: Sequence[int], decay: DecaySpec) -> np.ndarray:
    """Per-position weights for a rank-sensitive signature, decreasing."""
    return decay.weights(len(rank_sensitive))


def total_weight(m: int, decay: DecaySpec) -> float:
    """Sum of position weights; constant for fixed (m, decay)."""
    return float(np.sum(decay.weights(m)))


def weight_distance(sig: DualSignature, centroid: Iterable[int], decay: DecaySpec) -> float:
    """Total weight minus the weights of signature pivots present in ``centroid``."""
    centroid_ids = frozenset(int(p) for p in centroid)
    m = sig.prefix_length
    if len(centroid_ids) != m:
        raise InputError(
            f"centroid length {len(centroid_ids)} differs from prefix length {m}"
        )
    weights = decay.weights(m)
    matched = np.fromiter(
        (p in centroid_ids for p in sig.rank_sensitive), dtype=bool, count=m
    )
    return float(np.sum(weights) - np.sum(weights[matched]))


def signature_choice(seed: int, rank_sensitive: Sequence[int], n_choices: int) -> int:
    """Deterministic pick in [0, n_choices) keyed by (seed, signature).

    One global stream keyed by the object's signature guarantees that the
    same signature resolves ties identically during skeleton construction,
    redistribution, and query routing.
    """
    if n_choices < 1:
        raise InputError("no choices to pick from")
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<q", int(seed)))
    h.update(struct.pack(f"<{len(rank_sensitive)}I", *(int(p) for p in rank_sensitive)))
    return int.from_bytes(h.digest(), "little") % n_choices
