"""Reproducible synthetic relations: uniform keys plus Zipf-skewed keys.

A dataset spec combines ``n_uniform`` records with keys drawn uniformly
from [1, uniform_key_space] and ``n_zipf`` records whose keys are drawn
from a Zipf distribution with skew ``alpha`` over [1, zipf_domain]; the
two key spaces may overlap.  All keys are scaled by ``key_multiplier``
(handy for controlling join selectivity) and payloads are
``record_bytes`` pseudo-random bytes.  Generation is partition-parallel
with per-partition derived seeds and fully deterministic per seed.

Zipf sampling is inverse-CDF: the normalisation table is a cumulative
sum of k**-alpha computed once per (alpha, domain) and binary-searched
per draw.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .engine import PartitionedDataset, element_size
from .model import Record, Relation, key_from_int

__all__ = ["DatasetSpec", "ZipfSampler", "generate", "zipf_sample"]


class ZipfSampler:
    """Inverse-CDF sampler over ranks [1, domain] with P(k) ~ k**-alpha."""

    def __init__(self, alpha: float, domain: int):
        if domain < 1:
            raise ValueError("domain must be >= 1")
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = alpha
        self.domain = domain
        weights = np.arange(1, domain + 1, dtype=np.float64) ** -alpha
        self._cdf = np.cumsum(weights)
        self._total = float(self._cdf[-1])

    def sample(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cdf, rng.random() * self._total, side="right")) + 1

    def sample_array(self, rng: np.random.Generator, size: int) -> np.ndarray:
        draws = rng.random(size) * self._total
        return np.searchsorted(self._cdf, draws, side="right").astype(np.int64) + 1


@functools.lru_cache(maxsize=32)
def _cached_sampler(alpha: float, domain: int) -> ZipfSampler:
    return ZipfSampler(alpha, domain)


def zipf_sample(alpha: float, domain: int, rng: np.random.Generator) -> int:
    """One Zipf draw; the (alpha, domain) table is cached across calls."""
    return _cached_sampler(alpha, domain).sample(rng)


@dataclass
class DatasetSpec:
    alpha: float
    record_bytes: int = 100
    n_uniform: int = 1_000_000
    n_zipf: int = 100_000
    zipf_domain: int = 1_000
    uniform_key_space: int = 2**31 - 1
    key_multiplier: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if min(self.n_uniform, self.n_zipf, self.record_bytes) < 0:
            raise ValueError("counts and sizes must be >= 0")
        if self.zipf_domain < 1 or self.uniform_key_space < 1:
            raise ValueError("key spaces must be >= 1")
        if self.key_multiplier < 1:
            raise ValueError("key_multiplier must be >= 1")


def _split_count(total: int, n_parts: int, index: int) -> int:
    return total // n_parts + (1 if index < total % n_parts else 0)


def generate(spec: DatasetSpec, n_partitions: int) -> Relation:
    """Materialise the relation described by ``spec`` over the given
    number of partitions; cardinality is n_uniform + n_zipf."""
    sampler = ZipfSampler(spec.alpha, spec.zipf_domain)
    seeds = np.random.SeedSequence(spec.seed).spawn(n_partitions)
    parts: list[list[Record]] = []
    total = 0
    count = 0
    for i in range(n_partitions):
        rng = np.random.default_rng(seeds[i])
        n_uni = _split_count(spec.n_uniform, n_partitions, i)
        n_zip = _split_count(spec.n_zipf, n_partitions, i)
        uni_keys = rng.integers(1, spec.uniform_key_space + 1, size=n_uni, dtype=np.int64)
        zipf_keys = sampler.sample_array(rng, n_zip)
        keys = np.concatenate([uni_keys, zipf_keys]) * spec.key_multiplier
        n_recs = len(keys)
        payload_block = rng.integers(0, 256, size=(n_recs, spec.record_bytes), dtype=np.uint8).tobytes()
        width = spec.record_bytes
        part = [
            Record(key_from_int(int(keys[j])), payload_block[j * width:(j + 1) * width])
            for j in range(n_recs)
        ]
        parts.append(part)
        count += n_recs
        total += n_recs * (8 + width)
    ds = PartitionedDataset(parts, element_size)
    return Relation(data=ds, cardinality=count, avg_record_bytes=(total / count) if count else 0.0)
