"""Multistage tree-structured equi-join of keys that are hot on both sides.

A joined index maps each key to the pair of record lists coming from
the two relations.  Iteratively, cold entries (short lists) emit their
cross product while hot entries are chunked into sub-list pairs that
are randomly redistributed and processed by other executors in the next
pass; list lengths shrink by a cube-root factor per pass, so the number
of passes grows doubly-logarithmically with the hottest frequency.

The fully balanced variant avoids ever collecting a hot key's records
on a single executor: using broadcast frequency estimates, every record
of a hot key is locally "unraveled" into copies keyed by an augmented
key (original key plus a pair of sub-list ids), which reproduces the
first splitting pass without a splitter executor.

The same-attribute self-join variant keeps one record list per key and
emits each unordered record pair exactly once (diagonal r-r pairs
included): off-diagonal sub-list cells hold two disjoint record lists
and emit their cross product, diagonal cells recurse with
upper-triangle emission.  Pair payloads are emitted in ascending byte
order so results compare as multisets against the oracle.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple

from .engine import Cluster, PartitionedDataset, fnv1a64
from .hotkeys import get_hot_keys, hot_frequency_threshold, join_hot_keys
from .model import JoinRow, Relation

__all__ = [
    "IndexEntry",
    "SelfEntry",
    "TreeJoinStats",
    "all_value_pairs",
    "build_joined_index",
    "chunk_list",
    "chunking_depth",
    "is_hot_entry",
    "iteration_bound",
    "self_tree_join",
    "strip_key_padding",
    "tree_join",
    "tree_join_basic",
    "tree_join_iteration",
    "unravel_record",
]


class IndexEntry(NamedTuple):
    key: Any
    list_r: list
    list_s: list


class SelfEntry(NamedTuple):
    key: Any
    records: list


@dataclass
class TreeJoinStats:
    """Optional instrumentation filled in by the join drivers."""

    iterations: int = 0
    splitter_emitted_records: int = 0
    unravel_emitted_records: int = 0
    output_rows: int = 0


def _icbrt_ceil(value: int) -> int:
    """Smallest d with d**3 >= value (exact integer cube-root ceiling)."""
    d = round(value ** (1.0 / 3.0))
    while d ** 3 < value:
        d += 1
    while d > 1 and (d - 1) ** 3 >= value:
        d -= 1
    return d


def sublist_count(length: int) -> int:
    return _icbrt_ceil(length) if length > 0 else 1


def chunk_list(lst: list) -> list[list]:
    """Split into ceil(len**(1/3)) consecutive sub-lists of equal length
    except possibly the last; concatenation reproduces the input."""
    length = len(lst)
    if length == 0:
        raise ValueError("cannot chunk an empty list")
    pieces = _icbrt_ceil(length)
    piece_len = math.ceil(length / pieces)
    return [lst[i:i + piece_len] for i in range(0, length, piece_len)]


def is_hot_entry(l1: int, l2: int, lam: float) -> bool:
    """Whether joined lists of these lengths should be chunked: the
    effective length sqrt(l1*l2) strictly exceeds (1+lam)**1.5."""
    return l1 * l2 > (1.0 + lam) ** 3


def all_value_pairs(entry: IndexEntry) -> list[JoinRow]:
    """Full cross product of the entry's two lists, key preserved."""
    key = entry.key
    return [JoinRow(key, a, b) for a in entry.list_r for b in entry.list_s]


def chunk_entry(entry: IndexEntry) -> tuple[Any, list[list], list[list]]:
    return entry.key, chunk_list(entry.list_r), chunk_list(entry.list_s)


def _cross_sub_entries(chunked: tuple[Any, list[list], list[list]]) -> list[IndexEntry]:
    key, chunks_r, chunks_s = chunked
    return [IndexEntry(key, cr, cs) for cr in chunks_r for cs in chunks_s]


def build_joined_index(cluster: Cluster, keyed_r: PartitionedDataset,
                       keyed_s: PartitionedDataset) -> PartitionedDataset:
    """Group two (key, payload) datasets into IndexEntry records.

    Records are tagged with their side, unioned, grouped by key and
    reduced, so all records of a key land in one partition.  Keys
    present on only one side keep their entry; such entries emit no
    pairs downstream (inner semantics)."""
    tagged_r = cluster.map(keyed_r, lambda kv: [(kv[0], (0, kv[1]))])
    tagged_s = cluster.map(keyed_s, lambda kv: [(kv[0], (1, kv[1]))])
    grouped = cluster.group_by_key(cluster.union(tagged_r, tagged_s))

    def reduce_entry(kv) -> list[IndexEntry]:
        key, tagged = kv
        list_r = [payload for tag, payload in tagged if tag == 0]
        list_s = [payload for tag, payload in tagged if tag == 1]
        return [IndexEntry(key, list_r, list_s)]

    return cluster.map(grouped, reduce_entry)


def tree_join_iteration(cluster: Cluster, index: PartitionedDataset,
                        lam: float) -> tuple[PartitionedDataset, PartitionedDataset]:
    """One pass: cold entries emit their pairs, hot entries are chunked
    into the next index.  The split is local; no shuffle happens here."""
    hot, cold = cluster.split_partitions(
        index, lambda e: is_hot_entry(len(e.list_r), len(e.list_s), lam))
    partial = cluster.map(cold, all_value_pairs)
    chunked = cluster.map(hot, lambda e: [chunk_entry(e)])
    new_index = cluster.map(chunked, _cross_sub_entries)
    return partial, new_index


def _run_iterations(cluster: Cluster, index: PartitionedDataset, lam: float,
                    iteration: Callable, stats: TreeJoinStats | None) -> PartitionedDataset:
    results = cluster.empty()
    while not index.is_empty():
        partial, new_index = iteration(cluster, index, lam)
        results = cluster.union(results, partial)
        if stats is not None:
            stats.output_rows += partial.count()
            if not new_index.is_empty():
                stats.iterations += 1
                stats.splitter_emitted_records += sum(
                    _entry_record_count(e) for e in new_index.elements())
        index = cluster.random_shuffle(new_index)
    return results


def _entry_record_count(entry) -> int:
    if isinstance(entry, SelfEntry):
        return len(entry.records)
    return len(entry.list_r) + len(entry.list_s)


def _keyed(cluster: Cluster, relation: Relation) -> PartitionedDataset:
    return cluster.map(relation.data, lambda rec: [(rec.key, rec.payload)])


def tree_join_basic(cluster: Cluster, r: Relation, s: Relation,
                    stats: TreeJoinStats | None = None) -> PartitionedDataset:
    """Inner join via the plain iteration loop (no hot-key pretreatment).

    Terminates because chunked sub-list lengths strictly decrease for
    lists of two or more records."""
    lam = cluster.config.lam
    index = build_joined_index(cluster, _keyed(cluster, r), _keyed(cluster, s))
    return _run_iterations(cluster, index, lam, tree_join_iteration, stats)


def unravel_record(key: bytes, payload: bytes, swap: bool,
                   hot_pair_freqs: dict[bytes, tuple[int, int]], seed: int) -> list[tuple]:
    """Emit the augmented-key copies of one hot record.

    ``hot_pair_freqs`` maps each shared hot key to its (R-frequency,
    S-frequency) pair; ``swap`` is True for records of the second
    relation and flips which frequency counts as the record's own side.
    The record's own sub-list id is drawn once, pseudo-randomly from the
    record bytes and the seed; the other side's id takes all values.
    Augmented keys are always ordered (key, R-chunk, S-chunk)."""
    if swap:
        l2, l1 = hot_pair_freqs[key]
    else:
        l1, l2 = hot_pair_freqs[key]
    d1 = max(1, _icbrt_ceil(max(1, l1)))
    d2 = max(1, _icbrt_ceil(max(1, l2)))
    own = fnv1a64(struct.pack(">q", seed & 0x7FFFFFFFFFFFFFFF) + key + payload + b"unravel") % d1
    out = []
    for other in range(d2):
        aug = (key, other, own) if swap else (key, own, other)
        out.append((aug, payload))
    return out


def strip_key_padding(entry: IndexEntry) -> IndexEntry:
    """Drop the two sub-list ids from an augmented-key entry; the record
    lists are untouched."""
    return IndexEntry(entry.key[0], entry.list_r, entry.list_s)


def tree_join(cluster: Cluster, r: Relation, s: Relation, *,
              k_max_r: int = 1000, k_max_s: int = 1000, min_freq: float | None = None,
              hot_r: dict[bytes, int] | None = None, hot_s: dict[bytes, int] | None = None,
              stats: TreeJoinStats | None = None) -> PartitionedDataset:
    """Fully balanced inner join.

    Keys hot in both relations are split off locally and unraveled under
    augmented keys so no executor ever holds a hot key's full record
    lists; the rest build a regular joined index.  Precomputed hot-key
    maps may be passed in to avoid recollecting them.  Frequency
    estimates are upper bounds and can only cause over-chunking, never
    wrong results.
    """
    lam = cluster.config.lam
    if min_freq is None:
        min_freq = hot_frequency_threshold(lam)
    if hot_r is None:
        hot_r = get_hot_keys(cluster, r, k_max_r, min_freq)
    if hot_s is None:
        hot_s = get_hot_keys(cluster, s, k_max_s, min_freq)
    shared = join_hot_keys(hot_r, hot_s)
    shared = cluster.broadcast(shared, 24 * len(shared))

    hot_part_r, cold_r = cluster.split_partitions(r.data, lambda rec: rec.key in shared)
    hot_part_s, cold_s = cluster.split_partitions(s.data, lambda rec: rec.key in shared)

    cold_index = build_joined_index(
        cluster,
        cluster.map(cold_r, lambda rec: [(rec.key, rec.payload)]),
        cluster.map(cold_s, lambda rec: [(rec.key, rec.payload)]),
    )

    seed = cluster.config.seed
    emitted_before = sum(cluster.metrics.emitted_records)
    unraveled_r = cluster.map(
        hot_part_r, lambda rec: unravel_record(rec.key, rec.payload, False, shared, seed))
    unraveled_s = cluster.map(
        hot_part_s, lambda rec: unravel_record(rec.key, rec.payload, True, shared, seed))
    if stats is not None:
        delta = sum(cluster.metrics.emitted_records) - emitted_before
        stats.unravel_emitted_records += delta
        stats.splitter_emitted_records += delta
        if delta:
            stats.iterations += 1
    hot_index = cluster.map(
        build_joined_index(cluster, unraveled_r, unraveled_s),
        lambda entry: [strip_key_padding(entry)])

    index = cluster.union(hot_index, cold_index)
    return _run_iterations(cluster, index, lam, tree_join_iteration, stats)


# -- same-attribute self-join ------------------------------------------


def _upper_triangle_rows(key: Any, records: list) -> list[JoinRow]:
    rows = []
    for i in range(len(records)):
        a = records[i]
        for j in range(i, len(records)):
            b = records[j]
            rows.append(JoinRow(key, a, b) if a <= b else JoinRow(key, b, a))
    return rows


def _self_cross_rows(entry: IndexEntry) -> list[JoinRow]:
    rows = []
    key = entry.key
    for a in entry.list_r:
        for b in entry.list_s:
            rows.append(JoinRow(key, a, b) if a <= b else JoinRow(key, b, a))
    return rows


def _self_chunk(entry) -> list:
    """Chunk a hot self-join entry into sub-list cells: diagonal cells
    stay single-list (upper-triangle emission recurses), off-diagonal
    cells become disjoint two-list entries."""
    if isinstance(entry, SelfEntry):
        chunks = chunk_list(entry.records)
        out = []
        for i in range(len(chunks)):
            for j in range(i, len(chunks)):
                if i == j:
                    out.append(SelfEntry(entry.key, chunks[i]))
                else:
                    out.append(IndexEntry(entry.key, chunks[i], chunks[j]))
        return out
    return _cross_sub_entries(chunk_entry(entry))


def _self_is_hot(entry, lam: float) -> bool:
    if isinstance(entry, SelfEntry):
        length = len(entry.records)
        return is_hot_entry(length, length, lam)
    return is_hot_entry(len(entry.list_r), len(entry.list_s), lam)


def _self_iteration(cluster: Cluster, index: PartitionedDataset,
                    lam: float) -> tuple[PartitionedDataset, PartitionedDataset]:
    hot, cold = cluster.split_partitions(index, lambda e: _self_is_hot(e, lam))

    def emit(entry) -> list[JoinRow]:
        if isinstance(entry, SelfEntry):
            return _upper_triangle_rows(entry.key, entry.records)
        return _self_cross_rows(entry)

    partial = cluster.map(cold, emit)
    new_index = cluster.map(hot, _self_chunk)
    return partial, new_index


def unravel_self_record(key: bytes, payload: bytes, hot_freqs: dict[bytes, int],
                        seed: int) -> list[tuple]:
    """Self-join unraveling: one delta for both sides, emission only
    under ordered augmented keys (a copy aimed at cell (j, i) with j > i
    is re-keyed to (i, j)).  The value is tagged with which side of the
    cell the record belongs to."""
    length = hot_freqs[key]
    d = max(1, _icbrt_ceil(max(1, length)))
    own = fnv1a64(struct.pack(">q", seed & 0x7FFFFFFFFFFFFFFF) + key + payload + b"unravel") % d
    out = []
    for other in range(d):
        i, j = (own, other) if own <= other else (other, own)
        side = 0 if own == i else 1
        if i == j:
            side = 0
        out.append(((key, i, j), (side, payload)))
    return out


def self_tree_join(cluster: Cluster, relation: Relation, *,
                   k_max: int = 1000, min_freq: float | None = None,
                   hot_keys: dict[bytes, int] | None = None,
                   stats: TreeJoinStats | None = None) -> PartitionedDataset:
    """Same-attribute self-join emitting each unordered record pair once.

    A key with f records yields exactly f*(f+1)/2 rows, roughly halving
    the processing and IO of joining the relation with itself as a
    general equi-join.
    """
    lam = cluster.config.lam
    if min_freq is None:
        min_freq = hot_frequency_threshold(lam)
    if hot_keys is None:
        hot_keys = get_hot_keys(cluster, relation, k_max, min_freq)
    hot_keys = cluster.broadcast(hot_keys, 16 * len(hot_keys))

    hot_part, cold_part = cluster.split_partitions(relation.data, lambda rec: rec.key in hot_keys)

    cold_keyed = cluster.map(cold_part, lambda rec: [(rec.key, rec.payload)])
    cold_grouped = cluster.group_by_key(cold_keyed)
    cold_index = cluster.map(cold_grouped, lambda kv: [SelfEntry(kv[0], kv[1])])

    seed = cluster.config.seed
    emitted_before = sum(cluster.metrics.emitted_records)
    unraveled = cluster.map(
        hot_part, lambda rec: unravel_self_record(rec.key, rec.payload, hot_keys, seed))
    if stats is not None:
        delta = sum(cluster.metrics.emitted_records) - emitted_before
        stats.unravel_emitted_records += delta
        stats.splitter_emitted_records += delta
        if delta:
            stats.iterations += 1
    grouped = cluster.group_by_key(unraveled)

    def build_cell(kv) -> list:
        (key, i, j), tagged = kv
        if i == j:
            return [SelfEntry(key, [payload for _tag, payload in tagged])]
        left = [payload for tag, payload in tagged if tag == 0]
        right = [payload for tag, payload in tagged if tag == 1]
        return [IndexEntry(key, left, right)]

    hot_index = cluster.map(grouped, build_cell)
    index = cluster.union(hot_index, cold_index)
    return _run_iterations(cluster, index, lam, _self_iteration, stats)


# -- iteration-count analysis ------------------------------------------


def iteration_bound(l_max: int, lam: float) -> int:
    """Upper bound on splitting passes for the hottest frequency.

    Undefined at lam == 0 (the bound's inner logarithm has base 1);
    that configuration raises instead of guessing."""
    if lam <= 0:
        raise ValueError("iteration bound requires lam > 0")
    if l_max < 2:
        raise ValueError("l_max must be >= 2")
    inner = math.log(l_max) / math.log(1.0 + lam)
    if inner <= 1.0:
        return 0
    return max(0, math.ceil(math.log(inner) / math.log(1.5) - 1.0))


def chunking_depth(l1: int, l2: int, lam: float) -> int:
    """Number of splitting passes the iteration loop performs for a
    single key with these list lengths; uses the real chunk arithmetic,
    so it equals the measured pass count of an engine run (the loop's
    control flow depends only on list lengths)."""
    seen: dict[tuple[int, int], int] = {}

    def depth(a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        if (a, b) in seen:
            return seen[(a, b)]
        if not is_hot_entry(a, b, lam):
            seen[(a, b)] = 0
            return 0
        lens_a = {len(c) for c in chunk_list([None] * a)}
        lens_b = {len(c) for c in chunk_list([None] * b)}
        result = 1 + max(depth(x, y) for x in lens_a for y in lens_b)
        seen[(a, b)] = result
        return result

    return depth(l1, l2)
