"""Shared fixtures: a hand-built two-level skeleton with known counts, a
small end-to-end index, and an independent brute-force oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest

from climber.bench import build_index, gen_randomwalk_shards
from climber.build import (
    BuildConfig,
    Centroid,
    IndexSkeleton,
    TrieNode,
    assemble_partitions,
    build_trie,
)
from climber.signature import DecaySpec, PivotSet


def naive_topk(ids, values, query, k):
    """Reference top-k: pure-Python distances, sorted by (distance, id)."""
    scored = []
    for rid, row in zip(ids, values):
        acc = 0.0
        for a, b in zip([float(x) for x in row], [float(x) for x in query]):
            acc += (a - b) * (a - b)
        scored.append((math.sqrt(acc), int(rid)))
    scored.sort()
    return [(rid, dist) for dist, rid in scored[:k]]


@dataclass
class FigureFixture:
    """A three-group skeleton whose big group splits 5250 -> 3700/900/400/250
    with the 3700 node splitting again into 2800/500/400, capacity 3000."""

    skeleton: IndexSkeleton
    pivots: PivotSet
    config: BuildConfig
    members_big: list
    query_values: np.ndarray  # signature <6, 2, 7>
    big_group: int
    beta6: int
    beta7: int


def make_figure_fixture() -> FigureFixture:
    cfg = BuildConfig(
        w=3, r=10, m=3, c=3000, alpha=1.0, epsilon=1, decay=DecaySpec(), seed=11,
        series_length=3,
    )
    # Pivot geometry: a point near pivot 6 sees 6, then 2, then 7. Pivots
    # 8..10 sit in a far corner no centroid mentions, so a query there has
    # zero overlap with every group.
    vectors = np.array(
        [
            [50.0, 50.0, 50.0],    # p1
            [3.0, 0.0, 0.0],       # p2
            [60.0, 60.0, 60.0],    # p3
            [70.0, 70.0, 70.0],    # p4
            [80.0, 80.0, 80.0],    # p5
            [0.0, 0.0, 0.0],       # p6
            [0.0, 4.0, 0.0],       # p7
            [200.0, 200.0, 200.0], # p8
            [206.0, 200.0, 200.0], # p9
            [200.0, 209.0, 200.0], # p10
        ]
    )
    pivots = PivotSet(vectors, seed=11)

    members_big = [
        ((6, 5, 1), 2800),
        ((4, 2, 3), 900),
        ((6, 7, 2), 500),
        ((6, 1, 3), 400),
        ((5, 3, 2), 400),
        ((1, 2, 3), 250),
    ]
    tries = {
        0: TrieNode(None, size=0),
        1: build_trie([((1, 2, 3), 100)], cfg.c),
        2: build_trie([((2, 4, 5), 100)], cfg.c),
        3: build_trie(members_big, cfg.c),
    }
    default_partition, directory = assemble_partitions(tries, cfg.c)
    skeleton = IndexSkeleton(
        centroids=[
            Centroid(0, None),
            Centroid(1, (1, 2, 3)),
            Centroid(2, (2, 4, 5)),
            Centroid(3, (4, 6, 7)),
        ],
        tries=tries,
        default_partition=default_partition,
        partition_directory=directory,
        config=cfg,
    )
    big_parts = sorted(tries[3].partition_ids)
    assert len(big_parts) == 2
    return FigureFixture(
        skeleton=skeleton,
        pivots=pivots,
        config=cfg,
        members_big=members_big,
        query_values=np.array([0.1, 0.0, 0.0]),
        big_group=3,
        beta6=big_parts[0],
        beta7=big_parts[1],
    )


@pytest.fixture
def fig5():
    return make_figure_fixture()


@dataclass
class SmallIndex:
    paths: list
    skeleton: IndexSkeleton
    pivots: PivotSet
    store: object
    stats: object
    timings: object
    cfg: BuildConfig


def build_small_index(tmp_path, count=600, length=32, seed=5, **overrides) -> SmallIndex:
    params = dict(w=8, r=24, m=4, c=60, alpha=0.5, epsilon=2, seed=seed)
    params.update(overrides)
    cfg = BuildConfig(**params)
    paths = gen_randomwalk_shards(tmp_path / "data", count, length, seed, shards=6)
    skeleton, pivots, store, timings, stats = build_index(paths, tmp_path / "idx", cfg)
    return SmallIndex(paths, skeleton, pivots, store, stats, timings, cfg)


@pytest.fixture
def small_index(tmp_path):
    return build_small_index(tmp_path)
