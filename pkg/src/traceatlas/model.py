"""Shared domain types for the measurement pipeline. No I/O lives here.

All types are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import enum
from bisect import bisect_right
from dataclasses import dataclass
from ipaddress import AddressValueError, IPv4Address, IPv4Network
from typing import Iterable, Mapping

UNKNOWN = "UNKNOWN"

# Continent codes used throughout; UNKNOWN is the sentinel for "no idea".
CONTINENTS = ("AF", "AS", "EU", "NA", "OC", "SA")

IPv4Addr = IPv4Address


class MalformedAddressError(ValueError):
    """Raised when text is not a valid dotted-quad IPv4 address."""


def parse_ipv4(text: str) -> IPv4Address:
    """Parse a dotted-quad string into an address; reject anything else."""
    if not isinstance(text, str) or not text:
        raise MalformedAddressError(f"not an IPv4 address: {text!r}")
    try:
        return IPv4Address(text)
    except AddressValueError as exc:
        raise MalformedAddressError(f"not an IPv4 address: {text!r}") from exc


class HopAnnotation(enum.Enum):
    NONE = "none"
    NETWORK_UNREACHABLE = "!N"
    HOST_UNREACHABLE = "!H"


class Provenance(enum.Enum):
    DATABASE = "database"
    DELAY_INFERRED = "delay-inferred"


@dataclass(frozen=True)
class HopObservation:
    """One TTL-indexed observation: a responder with an RTT, or a star."""

    ttl: int
    responder: IPv4Address | None = None
    rtt_ms: float | None = None
    annotation: HopAnnotation = HopAnnotation.NONE

    def __post_init__(self) -> None:
        if self.ttl < 1:
            raise ValueError(f"ttl must be >= 1, got {self.ttl}")
        if self.responder is None and self.rtt_ms is not None:
            raise ValueError("rtt_ms requires a responder")
        if self.rtt_ms is not None and self.rtt_ms < 0:
            raise ValueError(f"negative rtt_ms: {self.rtt_ms}")

    @property
    def is_star(self) -> bool:
        return self.responder is None


@dataclass(frozen=True)
class TraceRecord:
    """One parsed traceroute.

    `hops` are ordered by strictly increasing TTL (enforced here).
    `destination_reached` is set by the producer (parser or generator) and
    holds iff the last responding hop's responder equals the destination;
    a record violating that linkage models a corrupt capture and is caught
    by the sanitizer rather than rejected at construction.
    """

    probe_id: str
    source_country: str
    destination: IPv4Address
    hops: tuple[HopObservation, ...]
    destination_reached: bool
    launched_at: int

    def __post_init__(self) -> None:
        hops = tuple(self.hops)
        object.__setattr__(self, "hops", hops)
        last = 0
        for hop in hops:
            if hop.ttl <= last:
                raise ValueError(f"hop TTLs not strictly increasing at ttl={hop.ttl}")
            last = hop.ttl

    def last_responding(self) -> HopObservation | None:
        for hop in reversed(self.hops):
            if hop.responder is not None:
                return hop
        return None


@dataclass(frozen=True)
class GeoRecord:
    """IP location: country + continent + coordinates, with provenance."""

    ip: IPv4Address
    country: str
    continent: str
    latitude: float | None
    longitude: float | None
    provenance: Provenance = Provenance.DATABASE

    def __post_init__(self) -> None:
        if self.country != UNKNOWN:
            if self.latitude is None or self.longitude is None:
                raise ValueError(f"located record for {self.ip} lacks coordinates")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of bounds: {self.latitude}")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of bounds: {self.longitude}")
        if self.provenance is Provenance.DELAY_INFERRED and self.country != UNKNOWN:
            raise ValueError("delay-inferred records carry continent only")

    @property
    def is_unknown(self) -> bool:
        return self.country == UNKNOWN


def unknown_geo(ip: IPv4Address, provenance: Provenance = Provenance.DATABASE) -> GeoRecord:
    return GeoRecord(ip=ip, country=UNKNOWN, continent=UNKNOWN,
                     latitude=None, longitude=None, provenance=provenance)


@dataclass(frozen=True)
class CountryLink:
    """Directed country-to-country transition observed between hops."""

    from_country: str
    to_country: str
    count: int = 1

    def __post_init__(self) -> None:
        if self.from_country == self.to_country:
            raise ValueError(f"self-link: {self.from_country}")
        if self.count < 1:
            raise ValueError(f"count must be positive, got {self.count}")


@dataclass(frozen=True)
class ExitEntry:
    country: str
    share: float
    count: int


@dataclass(frozen=True)
class ExitPointTable:
    """Distribution of first-foreign-country exit points for one source.

    Entries are sorted ascending by share. Shares sum to 1 as produced by
    the analyzer; a threshold-filtered view keeps raw shares and may sum
    to less. `no_exit` counts traces that never left the source country.
    """

    source_country: str
    entries: tuple[ExitEntry, ...]
    no_exit: int = 0

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        for a, b in zip(entries, entries[1:]):
            if (a.share, a.country) > (b.share, b.country):
                raise ValueError("entries must be sorted ascending by share")

    def total_share(self) -> float:
        return sum(e.share for e in self.entries)

    def share_of(self, country: str) -> float:
        for entry in self.entries:
            if entry.country == country:
                return entry.share
        return 0.0


@dataclass(frozen=True)
class ContinentDistribution:
    """Target weights per continent; must sum to 1 within 1e-9."""

    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        weights = dict(self.weights)
        object.__setattr__(self, "weights", weights)
        for continent, w in weights.items():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight out of range for {continent}: {w}")
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1.0")

    def items(self):
        return self.weights.items()


class PrefixSet:
    """Set of CIDR prefixes compiled into disjoint intervals for fast lookup."""

    def __init__(self, prefixes: Iterable[IPv4Network]):
        self.prefixes = tuple(prefixes)
        spans = sorted(
            (int(net.network_address), int(net.broadcast_address)) for net in self.prefixes
        )
        merged: list[list[int]] = []
        for lo, hi in spans:
            if merged and lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        self._starts = [lo for lo, _ in merged]
        self._ends = [hi for _, hi in merged]

    def contains_int(self, value: int) -> bool:
        i = bisect_right(self._starts, value) - 1
        return i >= 0 and value <= self._ends[i]

    def __contains__(self, ip: IPv4Address) -> bool:
        return self.contains_int(int(ip))

    def covered_count(self) -> int:
        """Number of distinct addresses covered by the set."""
        return sum(hi - lo + 1 for lo, hi in zip(self._starts, self._ends))

    def complement_intervals(self) -> list[tuple[int, int]]:
        """Inclusive [lo, hi] integer spans of the address space NOT covered."""
        gaps = []
        cursor = 0
        for lo, hi in zip(self._starts, self._ends):
            if lo > cursor:
                gaps.append((cursor, lo - 1))
            cursor = hi + 1
        if cursor <= 0xFFFFFFFF:
            gaps.append((cursor, 0xFFFFFFFF))
        return gaps


def is_bogon(ip: IPv4Address, bogon_list: PrefixSet | Iterable[IPv4Network]) -> bool:
    """True iff `ip` falls inside any prefix of the list."""
    if not isinstance(bogon_list, PrefixSet):
        bogon_list = PrefixSet(bogon_list)
    return ip in bogon_list


# RFC 1918 private space plus the RFC 5735 special-use registry.
DEFAULT_BOGON_PREFIXES = (
    "0.0.0.0/8",
    "10.0.0.0/8",
    "127.0.0.0/8",
    "169.254.0.0/16",
    "172.16.0.0/12",
    "192.0.0.0/24",
    "192.0.2.0/24",
    "192.88.99.0/24",
    "192.168.0.0/16",
    "198.18.0.0/15",
    "198.51.100.0/24",
    "203.0.113.0/24",
    "224.0.0.0/4",
    "240.0.0.0/4",
    "255.255.255.255/32",
)


def default_bogons() -> PrefixSet:
    return PrefixSet(IPv4Network(p) for p in DEFAULT_BOGON_PREFIXES)


def load_bogon_list(path) -> PrefixSet:
    """Load a bogon file: one CIDR prefix per line, `#` comments allowed."""
    nets = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            nets.append(IPv4Network(line))
    return PrefixSet(nets)
