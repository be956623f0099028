"""Approximate distributed heavy-hitter collection.

Each executor runs a Space-Saving summary over its partition; the
per-partition summaries are then merged pairwise in a tree through the
engine's aggregate primitive.  On key-partitioned input (all records of
a key in one partition) the reported frequencies are exact whenever the
summary capacity covers the local distinct keys.

Merging: counts and errors add for keys tracked on both sides; a key
absent from one side inherits that side's eviction floor (the largest
count ever evicted there, 0 if it never evicted) as both added count
and added error.  The floor is the operative form of the classic
min-count bound for untracked keys -- it keeps the
``count - error <= true frequency <= count`` bracket while letting
eviction-free summaries merge exactly.
"""

from __future__ import annotations

import heapq
import math
from typing import Iterable

from .engine import Cluster
from .model import Relation

__all__ = [
    "SpaceSavingSummary",
    "collect_summary",
    "estimate_hot_key_cost",
    "get_hot_keys",
    "hot_frequency_threshold",
    "join_hot_keys",
    "max_hot_keys",
]

_ENTRY_BYTES = 24  # key + count + error


class SpaceSavingSummary:
    """Bounded map of key -> (count, error) frequency estimates."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.counts: dict[bytes, int] = {}
        self.errors: dict[bytes, int] = {}
        self.floor = 0  # largest count ever evicted
        self._heap: list[tuple[int, bytes]] = []  # lazy min-heap of (count, key)

    def __len__(self) -> int:
        return len(self.counts)

    def offer(self, key: bytes) -> None:
        count = self.counts.get(key)
        if count is not None:
            self.counts[key] = count + 1
            heapq.heappush(self._heap, (count + 1, key))
            return
        if len(self.counts) < self.capacity:
            self.counts[key] = 1
            self.errors[key] = 0
            heapq.heappush(self._heap, (1, key))
            return
        victim_count, victim = self._pop_min()
        del self.counts[victim]
        del self.errors[victim]
        self.floor = max(self.floor, victim_count)
        self.counts[key] = victim_count + 1
        self.errors[key] = victim_count
        heapq.heappush(self._heap, (victim_count + 1, key))

    def _pop_min(self) -> tuple[int, bytes]:
        while True:
            count, key = heapq.heappop(self._heap)
            if self.counts.get(key) == count:
                return count, key

    def items(self) -> list[tuple[bytes, tuple[int, int]]]:
        """Entries sorted by descending count, key bytes breaking ties."""
        return sorted(((k, (c, self.errors[k])) for k, c in self.counts.items()),
                      key=lambda kv: (-kv[1][0], kv[0]))

    def accounting_bytes(self) -> int:
        return _ENTRY_BYTES * len(self.counts)

    @classmethod
    def merge(cls, a: "SpaceSavingSummary", b: "SpaceSavingSummary", capacity: int) -> "SpaceSavingSummary":
        merged: list[tuple[bytes, int, int]] = []
        for key in list(a.counts) + [k for k in b.counts if k not in a.counts]:
            ca = a.counts.get(key)
            cb = b.counts.get(key)
            count = (ca if ca is not None else a.floor) + (cb if cb is not None else b.floor)
            error = (a.errors[key] if ca is not None else a.floor) + (b.errors[key] if cb is not None else b.floor)
            merged.append((key, count, error))
        merged.sort(key=lambda kce: (-kce[1], kce[0]))
        out = cls(capacity)
        out.floor = a.floor + b.floor
        kept = merged[:capacity]
        dropped = merged[capacity:]
        if dropped:
            out.floor = max(out.floor, max(c for _, c, _ in dropped))
        for key, count, error in kept:
            out.counts[key] = count
            out.errors[key] = error
            heapq.heappush(out._heap, (count, key))
        return out


def build_summary(keys: Iterable[bytes], capacity: int) -> SpaceSavingSummary:
    summary = SpaceSavingSummary(capacity)
    for key in keys:
        summary.offer(key)
    return summary


def collect_summary(cluster: Cluster, relation: Relation, capacity: int) -> SpaceSavingSummary:
    """Per-partition Space-Saving summaries merged pairwise in a tree."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")

    def local(part: list) -> tuple[list, SpaceSavingSummary]:
        return [], build_summary((rec.key for rec in part), capacity)

    _, summaries = cluster.scan_partitions(relation.data, local)
    summary_ds = cluster.from_partition_lists([[s] for s in summaries], sizer=_summary_size)
    return cluster.tree_aggregate(
        summary_ds,
        SpaceSavingSummary(capacity),
        lambda a, b: SpaceSavingSummary.merge(a, b, capacity),
        sizer=_summary_size,
    )


def get_hot_keys(cluster: Cluster, relation: Relation, k_max: int, min_freq: float,
                 capacity: int | None = None) -> dict[bytes, int]:
    """Collect up to ``k_max`` keys with estimated frequency >= ``min_freq``.

    Per-partition summaries default to capacity ``k_max`` each (so no
    hot key can be lost locally on key-partitioned data while staying
    within the key-memory budget) and are merged in a binary tree.  With
    capacity at least the distinct key count the result is the exact
    top-k over the threshold.  Output keys are ordered by descending
    count, key bytes breaking ties.
    """
    merged = collect_summary(cluster, relation, capacity if capacity is not None else k_max)
    hot: dict[bytes, int] = {}
    for key, (count, _error) in merged.items():
        if count >= min_freq:
            hot[key] = count
            if len(hot) >= k_max:
                break
    return hot


def _summary_size(summary: SpaceSavingSummary) -> int:
    return summary.accounting_bytes()


def hot_frequency_threshold(lam: float) -> float:
    """Minimum per-relation frequency for a key to count as hot."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return (1.0 + lam) ** 1.5


def max_hot_keys(cardinality_r: int, memory: float, m_s: float, m_b: float, lam: float) -> int:
    """Upper bound on how many hot keys to collect for one relation.

    Combines the memory bound on the key set itself, the pigeonhole
    bound from the hot threshold, and the requirement that the other
    relation's hot-in-other sub-relation fit in executor memory.
    """
    if min(cardinality_r, memory, m_s, m_b) <= 0:
        raise ValueError("all sizing inputs must be positive")
    bound = min(min(cardinality_r, memory / m_s) / (1.0 + lam) ** 1.5, memory / m_b)
    return max(1, math.floor(bound))


def join_hot_keys(hot_r: dict[bytes, int], hot_s: dict[bytes, int]) -> dict[bytes, tuple[int, int]]:
    """Intersection of two hot-key maps with paired frequencies."""
    return {k: (f, hot_s[k]) for k, f in hot_r.items() if k in hot_s}


def estimate_hot_key_cost(cardinality_r: int, m_r: float, k_max: int, m_b: float, lam: float, n: int) -> float:
    """Cost estimate of collecting hot keys: parallel local scans plus a
    binary-tree network merge of the bounded summaries."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return cardinality_r * m_r / n + k_max * m_b * lam * math.log2(n)
