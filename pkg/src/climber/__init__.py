"""climber: disk-backed approximate kNN similarity search for fixed-length
data series.

Objects are reduced with piecewise aggregate approximation, signed with a
dual (proximity-ordered / id-ordered) pivot-prefix signature, grouped
around data-driven centroids, and packed into capacity-bounded partition
files through per-group prefix tries. Queries route through the same
signatures and are answered by true-distance ranking inside the touched
partitions, with an exact full scan available as the ground-truth oracle.
"""

from .bench import (
    BenchReport,
    BenchSpec,
    BuildTimings,
    build_index,
    gen_randomwalk,
    gen_randomwalk_shards,
    run_bench,
    worker_count,
)
from .build import (
    BuildConfig,
    Centroid,
    IndexSkeleton,
    TrieNode,
    aggregate_signatures,
    assign_group,
    build_skeleton,
    build_trie,
    collect_leaves,
    compute_centroids,
    pack_leaves,
    walk_trie,
)
from .errors import (
    BuildError,
    ClimberError,
    ConfigError,
    InputError,
    ParseError,
    QueryError,
    StorageError,
)
from .query import (
    QueryResult,
    QuerySpec,
    RoutingPlan,
    answer,
    execute,
    plan_full,
    route_adaptive,
    route_knn,
    route_od_smallest,
    scan_exact,
)
from .series import (
    DataSeries,
    Dataset,
    PaaVector,
    euclidean_distance,
    paa,
    paa_matrix,
    paa_values,
    recall,
)
from .signature import (
    DecaySpec,
    DualSignature,
    PivotSet,
    dual_signature,
    overlap_distance,
    pivot_weights,
    select_pivots,
    total_weight,
    weight_distance,
)
from .storage import (
    PartitionReader,
    PartitionStore,
    deserialize_skeleton,
    import_csv,
    open_index,
    read_cluster,
    read_dataset,
    redistribute,
    sample_partitions,
    serialize_skeleton,
    write_dataset,
)

__version__ = "0.1.0"
