"""The adaptive multistage join: split, dispatch, union.

Each relation is split locally into four disjoint sub-relations by hot
key membership (hot in both / self only / other only / neither).  For
any hot-key maps whatsoever -- even ones naming keys absent from the
data -- the join decomposes soundly into four aligned sub-joins, because
a record's potential matches always live in the matching split of the
other relation:

*  both-hot x both-hot      -> tree join
*  R-hot-only x S-cold-hot  -> index-broadcast family (S side small)
*  S-hot-only x R-cold-hot  -> index-broadcast family, output swapped
*  both-cold                -> shuffle join

Outer modes run the probe core listed per leg (tree join / left-outer
or inner index-broadcast / shuffle outer join) plus, where the mode
requires it, a small-side anti pass and both-hot dangling pads.  With
hot-key maps that reflect real heavy hitters those extra passes emit
nothing (a key hot in both relations appears in both, so no dangling
records exist there); with adversarial maps they restore the exact
outer semantics.

A broadcast leg is demoted to a shuffle join when the broadcast cost
model says shuffling the large side is cheaper or when the small side's
index exceeds executor memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .engine import BroadcastCapacityError, Cluster, PartitionedDataset
from .hotkeys import get_hot_keys, hot_frequency_threshold
from .model import JoinMode, JoinRow, Relation
from .sljoin import (
    index_broadcast_full_outer_join,
    index_broadcast_join,
    index_broadcast_left_outer_join,
    index_broadcast_right_outer_join,
)
from .treejoin import TreeJoinStats, self_tree_join, tree_join

__all__ = [
    "AmJoinStats",
    "RelationSplit",
    "Strategy",
    "am_join",
    "am_self_join",
    "choose_small_large_strategy",
    "shuffle_join",
    "split_relation",
    "swap_row",
]


class Strategy(Enum):
    BROADCAST = "broadcast"
    SHUFFLE = "shuffle"


@dataclass
class RelationSplit:
    """The four disjoint sub-relations; their union is the input."""

    hh: Relation
    hc: Relation
    ch: Relation
    cc: Relation


@dataclass
class AmJoinStats:
    """Instrumentation: which core algorithm ran per sub-join."""

    dispatch: list[tuple[str, str]] = field(default_factory=list)
    tree: TreeJoinStats = field(default_factory=TreeJoinStats)


def split_relation(cluster: Cluster, rel: Relation, hot_self: dict, hot_other: dict) -> RelationSplit:
    """Two local predicate rounds, no network: first by the relation's
    own hot keys, then each half by the other relation's hot keys."""
    hot, cold = cluster.split_partitions(rel.data, lambda rec: rec.key in hot_self)
    hh, hc = cluster.split_partitions(hot, lambda rec: rec.key in hot_other)
    ch, cc = cluster.split_partitions(cold, lambda rec: rec.key in hot_other)
    return RelationSplit(
        hh=Relation.from_dataset(hh),
        hc=Relation.from_dataset(hc),
        ch=Relation.from_dataset(ch),
        cc=Relation.from_dataset(cc),
    )


def choose_small_large_strategy(small_count: int, m_small: float, large_count: int,
                                m_large: float, lam: float, n: int) -> Strategy:
    """Broadcast the small side iff shuffling the large side would cost
    at least as much (ties favour broadcast, which also saves stages).
    With lam == 0 the broadcast time model is undefined, so shuffle."""
    if lam <= 0:
        return Strategy.SHUFFLE
    log_n = math.log(n) / math.log(lam + 1.0) if n > 1 else 0.0
    broadcast_cost = small_count * m_small * (1.0 + lam * log_n)
    split_cost = large_count * m_large * (1.0 + lam)
    return Strategy.BROADCAST if split_cost >= broadcast_cost else Strategy.SHUFFLE


def swap_row(row: JoinRow) -> JoinRow:
    """Exchange the two payload sides, key unchanged; an involution."""
    return JoinRow(row.key, row.right, row.left)


def shuffle_join(cluster: Cluster, r: Relation, s: Relation, mode: JoinMode) -> PartitionedDataset:
    """Reduce-side join: both relations are tagged, grouped by key and
    cross-multiplied with NULL padding per mode.  Every key is handled
    by exactly one executor, which is the skew bottleneck the multistage
    algorithms exist to avoid."""
    if mode is JoinMode.SELF_SAME_ATTRIBUTE:
        raise ValueError("shuffle join does not implement the self mode")
    tagged_r = cluster.map(r.data, lambda rec: [(rec.key, (0, rec.payload))])
    tagged_s = cluster.map(s.data, lambda rec: [(rec.key, (1, rec.payload))])
    grouped = cluster.group_by_key(cluster.union(tagged_r, tagged_s))

    def reduce_key(kv) -> list[JoinRow]:
        key, tagged = kv
        left = [p for tag, p in tagged if tag == 0]
        right = [p for tag, p in tagged if tag == 1]
        if left and right:
            return [JoinRow(key, a, b) for a in left for b in right]
        if left and mode in (JoinMode.LEFT_OUTER, JoinMode.FULL_OUTER):
            return [JoinRow(key, a, None) for a in left]
        if right and mode in (JoinMode.RIGHT_OUTER, JoinMode.FULL_OUTER):
            return [JoinRow(key, None, b) for b in right]
        return []

    return cluster.map(grouped, reduce_key)


_MIRROR = {
    JoinMode.INNER: JoinMode.INNER,
    JoinMode.LEFT_OUTER: JoinMode.RIGHT_OUTER,
    JoinMode.RIGHT_OUTER: JoinMode.LEFT_OUTER,
    JoinMode.FULL_OUTER: JoinMode.FULL_OUTER,
}

_IB_BY_MODE = {
    JoinMode.INNER: (index_broadcast_join, "ib"),
    JoinMode.LEFT_OUTER: (index_broadcast_left_outer_join, "ib-left"),
    JoinMode.RIGHT_OUTER: (index_broadcast_right_outer_join, "ib"),
    JoinMode.FULL_OUTER: (index_broadcast_full_outer_join, "ib-left"),
}


def _small_large_leg(cluster: Cluster, large: Relation, small: Relation, leg_mode: JoinMode,
                     leg_name: str, stats: AmJoinStats | None) -> PartitionedDataset:
    strategy = choose_small_large_strategy(
        small.cardinality, small.avg_record_bytes or 1.0,
        large.cardinality, large.avg_record_bytes or 1.0,
        cluster.config.lam, cluster.config.n)
    if strategy is Strategy.BROADCAST:
        algo, core_name = _IB_BY_MODE[leg_mode]
        try:
            rows = algo(cluster, large, small)
            if stats is not None:
                stats.dispatch.append((leg_name, core_name))
            return rows
        except BroadcastCapacityError:
            pass
    rows = shuffle_join(cluster, large, small, leg_mode)
    if stats is not None:
        stats.dispatch.append((leg_name, "shuffle"))
    return rows


def _present_keys(cluster: Cluster, ds: PartitionedDataset) -> frozenset:
    def scan(part: list) -> tuple[list, frozenset]:
        return [], frozenset(rec.key for rec in part)

    _, sets = cluster.scan_partitions(ds, scan)
    sets_ds = cluster.from_partition_lists([[s] for s in sets])
    return cluster.tree_aggregate(sets_ds, frozenset(), lambda a, b: a | b)


def _dangling_pads(cluster: Cluster, split_r: Relation, split_s: Relation,
                   mode: JoinMode) -> list[PartitionedDataset]:
    """NULL-pad both-hot records whose key never occurs on the other
    side.  Empty for hot-key maps built from the data (a key hot in both
    relations occurs in both); needed for arbitrary injected maps."""
    pads = []
    if mode in (JoinMode.LEFT_OUTER, JoinMode.FULL_OUTER):
        present = _present_keys(cluster, split_s.data)
        present = cluster.broadcast(present, 8 * len(present))
        pads.append(cluster.map(
            split_r.data,
            lambda rec, ks=present: [] if rec.key in ks else [JoinRow(rec.key, rec.payload, None)]))
    if mode in (JoinMode.RIGHT_OUTER, JoinMode.FULL_OUTER):
        present = _present_keys(cluster, split_r.data)
        present = cluster.broadcast(present, 8 * len(present))
        pads.append(cluster.map(
            split_s.data,
            lambda rec, ks=present: [] if rec.key in ks else [JoinRow(rec.key, None, rec.payload)]))
    return pads


def am_join(cluster: Cluster, r: Relation, s: Relation, mode: JoinMode, *,
            k_max_r: int = 1000, k_max_s: int = 1000, min_freq: float | None = None,
            hot_r: dict[bytes, int] | None = None, hot_s: dict[bytes, int] | None = None,
            stats: AmJoinStats | None = None) -> PartitionedDataset:
    """Adaptive multistage equi-join for inner and all outer modes.

    Hot keys are collected once and reused by the tree-join leg.  The
    result is the union of the four sub-joins; capacity errors on
    broadcast legs fall back to shuffle joins internally.
    """
    if mode is JoinMode.SELF_SAME_ATTRIBUTE:
        raise ValueError("use am_self_join for the self mode")
    if min_freq is None:
        min_freq = hot_frequency_threshold(cluster.config.lam)
    if hot_r is None:
        hot_r = get_hot_keys(cluster, r, k_max_r, min_freq)
    if hot_s is None:
        hot_s = get_hot_keys(cluster, s, k_max_s, min_freq)

    split_r = split_relation(cluster, r, hot_r, hot_s)
    split_s = split_relation(cluster, s, hot_s, hot_r)

    tree_stats = stats.tree if stats is not None else None
    hh = tree_join(cluster, split_r.hh, split_s.hh,
                   k_max_r=k_max_r, k_max_s=k_max_s, min_freq=min_freq,
                   hot_r=hot_r, hot_s=hot_s, stats=tree_stats)
    if stats is not None:
        stats.dispatch.append(("hh", "tree"))

    leg1 = _small_large_leg(cluster, split_r.hc, split_s.ch, mode, "hc-ch", stats)
    leg2 = _small_large_leg(cluster, split_s.hc, split_r.ch, _MIRROR[mode], "sh-rc", stats)
    leg2 = cluster.map(leg2, lambda row: [swap_row(row)])

    cc = shuffle_join(cluster, split_r.cc, split_s.cc, mode)
    if stats is not None:
        stats.dispatch.append(("cc", f"shuffle-{mode.value}"))

    result = cluster.union(cluster.union(hh, leg1), cluster.union(leg2, cc))
    for pad in _dangling_pads(cluster, split_r.hh, split_s.hh, mode):
        result = cluster.union(result, pad)
    return result


def am_self_join(cluster: Cluster, relation: Relation, *,
                 k_max: int = 1000, min_freq: float | None = None,
                 stats: AmJoinStats | None = None) -> PartitionedDataset:
    """Same-attribute self-join: the hot keys of both sides coincide, so
    the two small-large legs are provably empty and the join reduces to
    the self variant of the tree join."""
    if min_freq is None:
        min_freq = hot_frequency_threshold(cluster.config.lam)
    hot = get_hot_keys(cluster, relation, k_max, min_freq)
    tree_stats = stats.tree if stats is not None else None
    rows = self_tree_join(cluster, relation, k_max=k_max, min_freq=min_freq,
                          hot_keys=hot, stats=tree_stats)
    if stats is not None:
        stats.dispatch.append(("self", "tree-self"))
    return rows
