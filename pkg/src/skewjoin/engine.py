"""Deterministic in-process simulation of a shared-nothing cluster.

A :class:`Cluster` holds ``n`` simulated executors, each owning one
partition of every :class:`PartitionedDataset`.  All distributed
algorithms in this package are expressed through the primitives below
(map, group-by-key, union, broadcast, tree-aggregate, random shuffle,
local split, partition scan), which makes their data movement fully
accountable.

Cost model
----------
Volume counters are exact byte counts:

* ``shuffled_bytes``  -- every element that enters a network
  redistribution (``group_by_key``, ``random_shuffle``) or is shipped
  during a ``tree_aggregate`` merge is counted at its full size.  This
  matches the convention of textbook communication-cost analyses, where
  a hash exchange of a dataset costs its full volume regardless of
  incidental source/destination co-location.
* ``broadcast_bytes`` -- ``size_bytes * n`` per broadcast (one copy per
  executor).  The *time* model of a broadcast is logarithmic in ``n``:
  ``size_bytes * (1 + lam * log_{lam+1}(n))``, see
  :meth:`Cluster.broadcast_time`.

"Runtime" is never wall-clock; it is the derived scalar
``local_bytes + lam * network_bytes`` (:meth:`RunMetrics.simulated_runtime`).
``lam`` is modelled as a pure byte multiplier; it deliberately does not
distinguish latency from bandwidth.

Hashing
-------
Key placement uses FNV-1a 64-bit over ``seed || key bytes`` (see
:func:`fnv1a64`), fixed for the life of the repo so placements are
reproducible across machines and Python versions.  Tests may substitute
an explicit partitioner such as ``key mod n``.

Element sizing
--------------
The default sizer charges the payload byte length plus a fixed 8-byte
overhead per key/id/integer: ``bytes`` cost ``len``, integers cost 8,
``None`` costs 0, and containers cost the sum of their parts.

Each primitive invocation counts as one stage.  Partitions within one
invocation may conceptually run in parallel (user functions must be
pure); this implementation runs them sequentially, which by design
yields identical results.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

__all__ = [
    "BroadcastCapacityError",
    "Cluster",
    "ClusterConfig",
    "PartitionedDataset",
    "RunMetrics",
    "element_size",
    "fnv1a64",
]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class BroadcastCapacityError(RuntimeError):
    """A broadcast value does not fit in one executor's memory."""


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; platform independent by construction."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def key_to_bytes(key: Any) -> bytes:
    """Canonical byte form of a (possibly composite) grouping key."""
    if isinstance(key, bytes):
        return key
    if isinstance(key, int):
        return struct.pack(">q", key)
    if isinstance(key, tuple):
        parts = [key_to_bytes(p) for p in key]
        return b"".join(struct.pack(">I", len(p)) + p for p in parts)
    raise TypeError(f"unhashable grouping key type: {type(key).__name__}")


def element_size(element: Any) -> int:
    """Accounting size in bytes of a dataset element."""
    if isinstance(element, bytes):
        return len(element)
    if element is None:
        return 0
    if isinstance(element, (int, float)):
        return 8
    if isinstance(element, (tuple, list, set, frozenset)):
        return sum(element_size(part) for part in element)
    raise TypeError(f"unsized element type: {type(element).__name__}")


@dataclass
class ClusterConfig:
    """Static parameters of a simulated cluster run.

    ``lam`` is the dimensionless network-to-disk cost ratio; ``memory``
    is the per-executor memory budget in bytes used by broadcast
    capacity checks.
    """

    n: int
    lam: float = 1.0
    memory: int = 1 << 28
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("executor count must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.memory <= 0:
            raise ValueError("memory per executor must be > 0")


@dataclass
class RunMetrics:
    """Per-run counters; all non-negative and non-decreasing."""

    stages: int = 0
    shuffled_bytes: int = 0
    broadcast_bytes: int = 0
    emitted_records: list[int] = field(default_factory=list)
    emitted_bytes: list[int] = field(default_factory=list)

    @classmethod
    def zero(cls, n: int) -> "RunMetrics":
        return cls(emitted_records=[0] * n, emitted_bytes=[0] * n)

    @property
    def network_bytes(self) -> int:
        return self.shuffled_bytes + self.broadcast_bytes

    def simulated_runtime(self, lam: float) -> float:
        """Derived cost scalar: local bytes + lam * network bytes."""
        return sum(self.emitted_bytes) + lam * self.network_bytes

    def to_json_dict(self) -> dict:
        return {
            "stages": self.stages,
            "shuffledBytes": self.shuffled_bytes,
            "broadcastBytes": self.broadcast_bytes,
            "emittedRecordsPerExecutor": list(self.emitted_records),
            "emittedBytesPerExecutor": list(self.emitted_bytes),
        }


@dataclass
class PartitionedDataset:
    """An ordered list of element sequences, one per executor.

    The partition count is fixed at creation and element order within a
    partition is deterministic given the creating cluster's seed.
    """

    partitions: list[list[Any]]
    sizer: Callable[[Any], int] = element_size

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)

    def count(self) -> int:
        return sum(len(p) for p in self.partitions)

    def is_empty(self) -> bool:
        return all(not p for p in self.partitions)

    def elements(self) -> Iterator[Any]:
        for part in self.partitions:
            yield from part

    def partition_sizes(self) -> list[int]:
        return [len(p) for p in self.partitions]


class Cluster:
    """The simulated cluster: primitives plus metric accounting."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.metrics = RunMetrics.zero(config.n)
        self._op_seq = 0

    # -- construction -------------------------------------------------

    def create(self, elements: Iterable[Any], sizer: Callable = element_size) -> PartitionedDataset:
        """Round-robin the elements over the n executors (no cost)."""
        parts: list[list[Any]] = [[] for _ in range(self.config.n)]
        for i, el in enumerate(elements):
            parts[i % self.config.n].append(el)
        return PartitionedDataset(parts, sizer)

    def from_partition_lists(self, lists: list[list[Any]], sizer: Callable = element_size) -> PartitionedDataset:
        """Wrap already partition-aligned lists as a dataset (no cost)."""
        if len(lists) != self.config.n:
            raise ValueError("partition list count must equal executor count")
        return PartitionedDataset([list(p) for p in lists], sizer)

    def empty(self, sizer: Callable = element_size) -> PartitionedDataset:
        return PartitionedDataset([[] for _ in range(self.config.n)], sizer)

    # -- internal helpers ---------------------------------------------

    def _next_salt(self) -> int:
        self._op_seq += 1
        return self._op_seq

    def _default_partition(self, key: Any, salt: int) -> int:
        data = struct.pack(">qq", self.config.seed & 0x7FFFFFFFFFFFFFFF, salt) + key_to_bytes(key)
        return fnv1a64(data) % self.config.n

    def _account_emission(self, partition: int, out: list[Any], sizer: Callable) -> None:
        self.metrics.emitted_records[partition] += len(out)
        self.metrics.emitted_bytes[partition] += sum(sizer(el) for el in out)

    # -- primitives ----------------------------------------------------

    def map(self, ds: PartitionedDataset, f: Callable[[Any], Iterable[Any]],
            sizer: Callable | None = None) -> PartitionedDataset:
        """Apply a pure record-to-records function; outputs stay local."""
        self.metrics.stages += 1
        out_sizer = sizer or ds.sizer
        parts = []
        for i, part in enumerate(ds.partitions):
            out: list[Any] = []
            for el in part:
                out.extend(f(el))
            self._account_emission(i, out, out_sizer)
            parts.append(out)
        return PartitionedDataset(parts, out_sizer)

    def scan_partitions(self, ds: PartitionedDataset, fn: Callable[[list], tuple[list, Any]],
                        sizer: Callable | None = None) -> tuple[PartitionedDataset, list[Any]]:
        """Partition-local scan producing output elements plus one side
        value per executor (e.g. a set or sketch populated while the
        partition is read).  No network movement."""
        self.metrics.stages += 1
        out_sizer = sizer or ds.sizer
        parts: list[list[Any]] = []
        sides: list[Any] = []
        for i, part in enumerate(ds.partitions):
            out, side = fn(part)
            self._account_emission(i, out, out_sizer)
            parts.append(out)
            sides.append(side)
        return PartitionedDataset(parts, out_sizer), sides

    def group_by_key(self, ds: PartitionedDataset,
                     partitioner: Callable[[Any], int] | None = None,
                     sizer: Callable | None = None) -> PartitionedDataset:
        """Group (key, value) elements; all values of a key land in one
        partition chosen by the seeded hash of the key.  The full volume
        of the exchanged elements is charged to ``shuffled_bytes``;
        value-list order is deterministic."""
        self.metrics.stages += 1
        salt = self._next_salt()
        out_sizer = sizer or ds.sizer
        in_sizer = ds.sizer
        grouped: list[dict] = [{} for _ in range(self.config.n)]
        moved = 0
        for part in ds.partitions:
            for el in part:
                key, value = el
                dest = partitioner(key) if partitioner is not None else self._default_partition(key, salt)
                grouped[dest].setdefault(key, []).append(value)
                moved += in_sizer(el)
        self.metrics.shuffled_bytes += moved
        parts = [[(k, vs) for k, vs in g.items()] for g in grouped]
        return PartitionedDataset(parts, out_sizer)

    def union(self, a: PartitionedDataset, b: PartitionedDataset) -> PartitionedDataset:
        """Partition-wise concatenation; no network movement."""
        if a.n_partitions != b.n_partitions:
            raise ValueError("cannot union datasets with different partition counts")
        self.metrics.stages += 1
        parts = [pa + pb for pa, pb in zip(a.partitions, b.partitions)]
        return PartitionedDataset(parts, a.sizer)

    def broadcast(self, value: Any, size_bytes: int) -> Any:
        """Ship a driver-side value to every executor.

        Volume accounting is ``size_bytes * n``; the time model is
        logarithmic in n (see :meth:`broadcast_time`).  A zero-size
        broadcast leaves every counter unchanged."""
        if size_bytes > self.config.memory:
            raise BroadcastCapacityError(
                f"broadcast of {size_bytes} bytes exceeds executor memory {self.config.memory}")
        if size_bytes > 0:
            self.metrics.stages += 1
            self.metrics.broadcast_bytes += size_bytes * self.config.n
        return value

    def broadcast_time(self, size_bytes: int) -> float:
        """Simulated-time cost of broadcasting ``size_bytes``."""
        lam, n = self.config.lam, self.config.n
        if lam == 0 or n <= 1:
            return float(size_bytes)
        return size_bytes * (1.0 + lam * math.log(n) / math.log(lam + 1.0))

    def tree_aggregate(self, ds: PartitionedDataset, zero: Any, combine: Callable[[Any, Any], Any],
                       sizer: Callable | None = None) -> Any:
        """Fold all elements with an associative-commutative combine.

        Partitions are folded locally, then the per-executor partials
        are merged pairwise in a binary tree; every shipped partial is
        charged to ``shuffled_bytes`` at its accounting size.  The
        result is independent of the partitioning."""
        self.metrics.stages += 1
        agg_sizer = sizer or ds.sizer
        partials = []
        for part in ds.partitions:
            acc = zero
            for el in part:
                acc = combine(acc, el)
            partials.append(acc)
        while len(partials) > 1:
            merged = []
            for i in range(0, len(partials), 2):
                if i + 1 < len(partials):
                    self.metrics.shuffled_bytes += agg_sizer(partials[i + 1])
                    merged.append(combine(partials[i], partials[i + 1]))
                else:
                    merged.append(partials[i])
            partials = merged
        return partials[0] if partials else zero

    def random_shuffle(self, ds: PartitionedDataset) -> PartitionedDataset:
        """Assign each element to a uniformly random partition via a
        seeded RNG; deterministic given the cluster seed and the op
        sequence.  Full exchanged volume is charged."""
        self.metrics.stages += 1
        salt = self._next_salt()
        rng = random.Random(fnv1a64(struct.pack(">qq", self.config.seed & 0x7FFFFFFFFFFFFFFF, salt) + b"shuffle"))
        n = self.config.n
        sizer = ds.sizer
        parts: list[list[Any]] = [[] for _ in range(n)]
        moved = 0
        for part in ds.partitions:
            for el in part:
                parts[rng.randrange(n)].append(el)
                moved += sizer(el)
        self.metrics.shuffled_bytes += moved
        return PartitionedDataset(parts, sizer)

    def split_partitions(self, ds: PartitionedDataset,
                         predicate: Callable[[Any], bool]) -> tuple[PartitionedDataset, PartitionedDataset]:
        """Locally split each partition: (elements matching predicate,
        the rest), keeping partition indexes.  No network movement."""
        self.metrics.stages += 1
        true_parts: list[list[Any]] = []
        false_parts: list[list[Any]] = []
        for part in ds.partitions:
            t: list[Any] = []
            f: list[Any] = []
            for el in part:
                (t if predicate(el) else f).append(el)
            true_parts.append(t)
            false_parts.append(f)
        return PartitionedDataset(true_parts, ds.sizer), PartitionedDataset(false_parts, ds.sizer)
