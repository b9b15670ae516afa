"""Target-set construction: random public IPv4 pools and stratified
subsampling against a target continent distribution.

Responsiveness probing is an ingestion boundary: the pool's `responsive`
subset comes from a file (one IP per line), never from live probing.
"""

from __future__ import annotations

import csv
import random
from bisect import bisect_right
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from itertools import accumulate
from math import floor
from pathlib import Path
from typing import Mapping

from .model import ContinentDistribution, PrefixSet


class PoolExhaustedError(RuntimeError):
    """Requested more addresses than the non-bogon space contains."""


def largest_remainder_quotas(weights: Mapping[str, float], n: int) -> dict[str, int]:
    """Integer quotas summing to exactly n: floor first, then hand the
    leftover units to the largest fractional parts (ties by key)."""
    raw = {key: n * w for key, w in weights.items()}
    quotas = {key: floor(value) for key, value in raw.items()}
    leftover = n - sum(quotas.values())
    order = sorted(weights, key=lambda k: (-(raw[k] - quotas[k]), k))
    for key in order[:leftover]:
        quotas[key] += 1
    return quotas


def generate_pool(n: int, seed: int, bogons: PrefixSet) -> set[IPv4Address]:
    """Draw n distinct uniformly random non-bogon addresses, deterministically.

    Samples indices into the complement of the bogon space directly, so the
    draw stays O(n) even when bogons cover nearly everything.
    """
    if n < 1:
        raise ValueError(f"pool size must be >= 1, got {n}")
    gaps = bogons.complement_intervals()
    sizes = [hi - lo + 1 for lo, hi in gaps]
    available = sum(sizes)
    if n > available:
        raise PoolExhaustedError(f"{n} addresses requested, only {available} public ones exist")
    cumulative = list(accumulate(sizes))
    indices = random.Random(seed).sample(range(available), n)
    pool = set()
    for index in indices:
        g = bisect_right(cumulative, index)
        offset = index - (cumulative[g - 1] if g else 0)
        pool.add(IPv4Address(gaps[g][0] + offset))
    return pool


@dataclass(frozen=True)
class TargetPool:
    """Candidate addresses, the responsive subset, and continent tags."""

    candidates: frozenset[IPv4Address]
    responsive: frozenset[IPv4Address]
    geo: Mapping[IPv4Address, str]  # responsive address -> continent

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", frozenset(self.candidates))
        object.__setattr__(self, "responsive", frozenset(self.responsive))
        object.__setattr__(self, "geo", dict(self.geo))
        if not self.responsive <= self.candidates:
            raise ValueError("responsive set is not a subset of candidates")
        missing = [ip for ip in self.responsive if ip not in self.geo]
        if missing:
            raise ValueError(f"{len(missing)} responsive addresses lack a continent tag")


@dataclass(frozen=True)
class StratifiedSample:
    """Sample plus the quota bookkeeping, including any shortfall warnings."""

    addresses: frozenset[IPv4Address]
    quotas: dict[str, int]        # intended per-continent counts
    realized: dict[str, int]      # what the pool could actually supply
    shortfall: dict[str, int] = field(default_factory=dict)
    unfilled: int = 0

    def __len__(self) -> int:
        return len(self.addresses)


def continent_quotas(target: ContinentDistribution, n: int) -> dict[str, int]:
    return largest_remainder_quotas(dict(target.items()), n)


def stratified_sample(pool: TargetPool, target: ContinentDistribution,
                      n: int, seed: int) -> StratifiedSample:
    """Pick n responsive addresses matching the target continent mix.

    Per-continent counts are largest-remainder quotas of n. When a
    continent cannot fill its quota the deficit is re-spread over the
    continents that still have addresses, proportionally to their target
    weights; anything that cannot be placed at all is reported as
    `unfilled` (only possible when the whole responsive pool is smaller
    than n).
    """
    if not pool.responsive:
        raise ValueError("responsive pool is empty")
    weights = dict(target.items())
    groups: dict[str, list[IPv4Address]] = {c: [] for c in weights}
    for ip in pool.responsive:
        continent = pool.geo[ip]
        if continent in groups:
            groups[continent].append(ip)
    for addrs in groups.values():
        addrs.sort()

    intended = largest_remainder_quotas(weights, n)
    alloc = {c: 0 for c in weights}
    remaining = n
    active = {c for c in weights if len(groups[c]) > 0}
    while remaining > 0 and active:
        wsum = sum(weights[c] for c in active)
        if wsum > 0:
            share = {c: weights[c] / wsum for c in active}
        else:
            share = {c: 1.0 / len(active) for c in active}
        round_quotas = largest_remainder_quotas(share, remaining)
        progressed = False
        for c in sorted(active):
            take = min(round_quotas[c], len(groups[c]) - alloc[c])
            if take > 0:
                alloc[c] += take
                remaining -= take
                progressed = True
        active = {c for c in active if alloc[c] < len(groups[c])}
        if not progressed:
            break

    rng = random.Random(seed)
    picked: set[IPv4Address] = set()
    for c in sorted(alloc):
        if alloc[c]:
            picked.update(rng.sample(groups[c], alloc[c]))

    shortfall = {c: intended[c] - alloc[c] for c in weights if alloc[c] < intended[c]}
    return StratifiedSample(
        addresses=frozenset(picked),
        quotas=intended,
        realized=alloc,
        shortfall=shortfall,
        unfilled=remaining,
    )


# ---------------------------------------------------------------------------
# file helpers


def load_ip_list(path) -> set[IPv4Address]:
    """One IP per line, `#` comments allowed."""
    addrs = set()
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                addrs.add(IPv4Address(line))
    return addrs


def write_ip_list(addrs, path) -> int:
    ordered = sorted(addrs)
    with open(path, "w", encoding="utf-8") as fh:
        for ip in ordered:
            fh.write(f"{ip}\n")
    return len(ordered)


def load_distribution(path) -> ContinentDistribution:
    """Read a target distribution from CSV (`continent,weight`) or TOML."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        weights = {str(k): float(v) for k, v in data.get("weights", data).items()}
        return ContinentDistribution(weights)
    weights = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "continent":
                continue
            weights[row[0].strip()] = float(row[1])
    return ContinentDistribution(weights)
