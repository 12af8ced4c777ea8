"""Raw data-series model: Euclidean distance, PAA reduction, recall.

All arithmetic runs in 64-bit floats regardless of how values are stored
on disk. Every distance helper reduces row-wise with the same operation
sequence, so a value computed for a single series is bit-identical to the
same row computed inside a batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, InputError

MAX_ID = 2**63 - 1


@dataclass(frozen=True)
class DataSeries:
    """One fixed-length real-valued sequence with a unique 64-bit id."""

    id: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size == 0:
            raise InputError("series values must be a nonempty 1-D sequence")
        if not np.isfinite(vals).all():
            raise InputError(f"series {self.id} contains non-finite values")
        if not (0 <= int(self.id) <= MAX_ID):
            raise InputError(f"series id {self.id} outside the 64-bit range")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]


class Dataset:
    """A collection of data series sharing one length, backed by arrays.

    ``ids`` is an int64 vector and ``values`` a (d, n) float matrix; both
    are treated as immutable once the dataset is constructed.
    """

    def __init__(self, ids: np.ndarray, values: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        values = np.asarray(values)
        if values.ndim != 2:
            raise InputError("dataset values must be a 2-D (count, length) array")
        if ids.shape[0] != values.shape[0]:
            raise InputError("dataset id count does not match value row count")
        if values.shape[0] > 0 and values.shape[1] == 0:
            raise InputError("dataset series length must be positive")
        if not np.isfinite(values).all():
            raise InputError("dataset contains non-finite values")
        if np.unique(ids).shape[0] != ids.shape[0]:
            raise InputError("dataset ids are not unique")
        self.ids = ids
        self.values = values

    @classmethod
    def from_series(cls, series: Iterable[DataSeries]) -> "Dataset":
        members = list(series)
        if not members:
            raise InputError("cannot build a dataset from zero series")
        lengths = {len(s) for s in members}
        if len(lengths) != 1:
            raise InputError(f"series lengths differ: {sorted(lengths)}")
        ids = np.array([s.id for s in members], dtype=np.int64)
        values = np.stack([np.asarray(s.values, dtype=np.float64) for s in members])
        return cls(ids, values)

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.ids.shape[0]

    def series(self, i: int) -> DataSeries:
        return DataSeries(int(self.ids[i]), self.values[i])

    def __iter__(self) -> Iterator[DataSeries]:
        for i in range(len(self)):
            yield self.series(i)


@dataclass(frozen=True)
class PaaVector:
    """Per-segment means of one series, reduced from length n to w."""

    means: np.ndarray
    source_id: int

    def __len__(self) -> int:
        return self.means.shape[0]


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two equal-length value sequences."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise InputError(f"length mismatch: {av.shape} vs {bv.shape}")
    diff = av - bv
    return float(np.sqrt(np.sum(diff * diff)))


def distances_to_many(q, values: np.ndarray, chunk: int = 16384) -> np.ndarray:
    """Euclidean distances from one query to every row of ``values``.

    Chunked so the float64 upcast of large float32 blocks stays bounded;
    each row reduces independently, so results do not depend on chunking.
    """
    qv = np.asarray(q, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != qv.shape[0]:
        raise InputError(
            f"length mismatch: query {qv.shape[0]} vs rows {values.shape[1:]}"
        )
    out = np.empty(values.shape[0], dtype=np.float64)
    for start in range(0, values.shape[0], chunk):
        diff = values[start : start + chunk] - qv  # upcasts to float64
        np.square(diff, out=diff)
        out[start : start + chunk] = np.sqrt(np.sum(diff, axis=1))
    return out


def _segment_starts(n: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    # First (n mod w) segments take one extra value each.
    base, rem = divmod(n, w)
    sizes = np.full(w, base, dtype=np.int64)
    sizes[:rem] += 1
    starts = np.zeros(w, dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    return starts, sizes


def paa_values(values, w: int) -> np.ndarray:
    """PAA of a single value sequence: w segment means."""
    vals = np.asarray(values, dtype=np.float64)
    return paa_matrix(vals[None, :], w)[0]


def paa_matrix(values: np.ndarray, w: int) -> np.ndarray:
    """Row-wise PAA of a (d, n) matrix, returning (d, w) float64 means."""
    n = values.shape[1]
    if w < 1 or w > n:
        raise ConfigError(f"segment count w={w} must satisfy 1 <= w <= n={n}")
    starts, sizes = _segment_starts(n, w)
    as64 = values.astype(np.float64, copy=False)
    sums = np.add.reduceat(as64, starts, axis=1)
    return sums / sizes


def paa(x: DataSeries, w: int) -> PaaVector:
    """PAA reduction of one data series."""
    return PaaVector(paa_values(x.values, w), x.id)


def recall(approx: Iterable[int], exact: Iterable[int]) -> float:
    """|approx ∩ exact| / |exact| for two id sets."""
    exact_set = set(exact)
    if not exact_set:
        raise InputError("exact answer set is empty")
    return len(set(approx) & exact_set) / len(exact_set)


def rank_by_distance(
    ids: np.ndarray, distances: np.ndarray, k: int
) -> list[tuple[int, float]]:
    """Top-k (id, distance) pairs, ascending by distance then by id."""
    order = np.lexsort((ids, distances))[:k]
    return [(int(ids[i]), float(distances[i])) for i in order]


def topk_exact(ids: np.ndarray, values: np.ndarray, q, k: int) -> list[tuple[int, float]]:
    """Exact top-k by Euclidean distance over in-memory rows."""
    dists = distances_to_many(q, values)
    return rank_by_distance(ids, dists, k)
