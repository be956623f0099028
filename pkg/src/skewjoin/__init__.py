"""Skew-aware distributed equi-joins on a deterministic simulated cluster."""

from .amjoin import (
    AmJoinStats,
    RelationSplit,
    Strategy,
    am_join,
    am_self_join,
    choose_small_large_strategy,
    shuffle_join,
    split_relation,
    swap_row,
)
from .engine import (
    BroadcastCapacityError,
    Cluster,
    ClusterConfig,
    PartitionedDataset,
    RunMetrics,
)
from .hotkeys import (
    SpaceSavingSummary,
    estimate_hot_key_cost,
    get_hot_keys,
    hot_frequency_threshold,
    join_hot_keys,
    max_hot_keys,
)
from .model import (
    JoinMode,
    JoinRow,
    Record,
    Relation,
    RelationFormatError,
    key_from_int,
    key_to_int,
    oracle_join,
    read_relation_tsv,
    rows_counter,
    write_join_rows,
    write_metrics,
    write_relation_tsv,
)
from .sljoin import (
    SmallLargeStats,
    ddr_full_outer_join,
    der_full_outer_join,
    index_broadcast_full_outer_join,
    index_broadcast_join,
    index_broadcast_left_outer_join,
    index_broadcast_right_outer_join,
)
from .treejoin import (
    TreeJoinStats,
    chunk_list,
    chunking_depth,
    iteration_bound,
    self_tree_join,
    tree_join,
    tree_join_basic,
)

__version__ = "0.1.0"
