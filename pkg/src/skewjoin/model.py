"""Record/relation data model, on-disk formats and the join oracle.

Keys are opaque byte strings; the synthetic generator and the TSV
reader encode non-negative integers as fixed-width 8-byte big-endian.
Join output is an unordered multiset: all equivalence checks compare
multisets (see :func:`rows_counter`), never sequences.

File formats (bit-exact):

* relation TSV: one record per line, ``<key int>\\t<hex payload>``
* join rows TSV: ``<key int>\\t<left|∅>\\t<right|∅>`` with payloads in
  hex and NULL written as the ∅ glyph (bytes ``E2 88 85``)
* metrics: a single JSON object with the run-counter fields
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple

from .engine import Cluster, PartitionedDataset, RunMetrics, element_size

__all__ = [
    "JoinMode",
    "JoinRow",
    "Record",
    "Relation",
    "RelationFormatError",
    "key_from_int",
    "key_to_int",
    "oracle_join",
    "read_relation_tsv",
    "rows_counter",
    "write_join_rows",
    "write_metrics",
    "write_relation_tsv",
]

NULL_GLYPH = "∅"


class RelationFormatError(ValueError):
    """A relation file line does not match the TSV format."""


class JoinMode(Enum):
    INNER = "inner"
    LEFT_OUTER = "left"
    RIGHT_OUTER = "right"
    FULL_OUTER = "full"
    SELF_SAME_ATTRIBUTE = "self"


def key_from_int(value: int) -> bytes:
    return struct.pack(">Q", value)


def key_to_int(key: bytes) -> int:
    return struct.unpack(">Q", key)[0]


class Record(NamedTuple):
    key: bytes
    payload: bytes


class JoinRow(NamedTuple):
    key: bytes
    left: bytes | None
    right: bytes | None


@dataclass
class Relation:
    """A partitioned multiset of records with measured statistics."""

    data: PartitionedDataset
    cardinality: int
    avg_record_bytes: float

    @classmethod
    def from_dataset(cls, ds: PartitionedDataset) -> "Relation":
        count = 0
        total = 0
        for rec in ds.elements():
            count += 1
            total += 8 + len(rec.payload)
        return cls(data=ds, cardinality=count, avg_record_bytes=(total / count) if count else 0.0)

    @classmethod
    def from_records(cls, cluster: Cluster, records: Iterable[Record]) -> "Relation":
        return cls.from_dataset(cluster.create(records))

    def records(self) -> list[Record]:
        return list(self.data.elements())


def read_relation_tsv(path: str, n_partitions: int) -> Relation:
    """Load a relation file, assigning lines round-robin to partitions."""
    parts: list[list[Record]] = [[] for _ in range(n_partitions)]
    count = 0
    total = 0
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle.read().splitlines(), start=1):
            fields = line.split("\t")
            if len(fields) != 2:
                raise RelationFormatError(f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
            try:
                key = key_from_int(int(fields[0]))
            except (ValueError, struct.error) as exc:
                raise RelationFormatError(f"line {lineno}: bad key {fields[0]!r}: {exc}") from None
            try:
                payload = bytes.fromhex(fields[1])
            except ValueError as exc:
                raise RelationFormatError(f"line {lineno}: bad hex payload: {exc}") from None
            rec = Record(key, payload)
            parts[count % n_partitions].append(rec)
            count += 1
            total += 8 + len(payload)
    ds = PartitionedDataset(parts, element_size)
    return Relation(data=ds, cardinality=count, avg_record_bytes=(total / count) if count else 0.0)


def write_relation_tsv(records: Iterable[Record], path: str) -> int:
    lines = 0
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(f"{key_to_int(rec.key)}\t{rec.payload.hex()}\n")
            lines += 1
    return lines


def _payload_field(payload: bytes | None) -> str:
    return NULL_GLYPH if payload is None else payload.hex()


def write_join_rows(rows: Iterable[JoinRow], path: str) -> int:
    lines = 0
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(f"{key_to_int(row.key)}\t{_payload_field(row.left)}\t{_payload_field(row.right)}\n")
            lines += 1
    return lines


def write_metrics(metrics: RunMetrics, path: str, extra_fields: dict | None = None) -> None:
    payload = metrics.to_json_dict()
    if extra_fields:
        payload.update(extra_fields)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def rows_counter(rows: Iterable[JoinRow] | PartitionedDataset) -> Counter:
    """Multiset view of join rows for equivalence checks."""
    if isinstance(rows, PartitionedDataset):
        rows = rows.elements()
    return Counter(rows)


def oracle_join(r: Relation, s: Relation, mode: JoinMode) -> list[JoinRow]:
    """Brute-force nested-loop join defining correctness for every mode.

    Desk-scale only: both inputs are materialised in one process.  For
    the same-attribute self-join, each unordered record pair of a key is
    produced exactly once (the r-r diagonal pair included) with the two
    payloads in ascending byte order, which is also how the distributed
    implementation canonicalises pairs.
    """
    if mode is JoinMode.SELF_SAME_ATTRIBUTE:
        if r is not s:
            raise ValueError("same-attribute self-join requires both inputs to be the same relation")
        recs = r.records()
        rows = []
        for i in range(len(recs)):
            for j in range(i, len(recs)):
                if recs[i].key == recs[j].key:
                    lo, hi = sorted((recs[i].payload, recs[j].payload))
                    rows.append(JoinRow(recs[i].key, lo, hi))
        return rows

    left = r.records()
    right = s.records()
    rows = []
    matched_left = [False] * len(left)
    matched_right = [False] * len(right)
    for i, rr in enumerate(left):
        for j, ss in enumerate(right):
            if rr.key == ss.key:
                rows.append(JoinRow(rr.key, rr.payload, ss.payload))
                matched_left[i] = True
                matched_right[j] = True
    if mode in (JoinMode.LEFT_OUTER, JoinMode.FULL_OUTER):
        for i, rr in enumerate(left):
            if not matched_left[i]:
                rows.append(JoinRow(rr.key, rr.payload, None))
    if mode in (JoinMode.RIGHT_OUTER, JoinMode.FULL_OUTER):
        for j, ss in enumerate(right):
            if not matched_right[j]:
                rows.append(JoinRow(ss.key, None, ss.payload))
    return rows
