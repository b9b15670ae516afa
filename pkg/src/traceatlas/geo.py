"""IP geolocation: prefix database lookups, a persistent lookup cache,
and minimum-delay continent inference for addresses the database misses.

The database is an offline CSV snapshot (`prefix,country,continent,lat,lon`)
so runs are reproducible; the cache is an embedded sqlite file standing in
for the original server-side store.
"""

from __future__ import annotations

import csv
import math
import sqlite3
import threading
from dataclasses import dataclass
from ipaddress import IPv4Address, IPv4Network
from typing import Callable, Iterable, Mapping

from .model import GeoRecord, Provenance, UNKNOWN, unknown_geo

EARTH_RADIUS_KM = 6371.0


class CoordinateError(ValueError):
    """Latitude or longitude outside its valid range."""


class GeoFormatError(ValueError):
    """Malformed geo database / probe-delay fixture."""


class CacheSchemaError(RuntimeError):
    """Cache file was written with an incompatible schema version."""


def great_circle_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in km between (lat, lon) degree pairs.

    Sphere of radius 6371.0 km. Uses absolute coordinate differences so the
    result is bitwise symmetric in its arguments.
    """
    for lat, lon in (a, b):
        if not -90.0 <= lat <= 90.0:
            raise CoordinateError(f"latitude out of bounds: {lat}")
        if not -180.0 <= lon <= 180.0:
            raise CoordinateError(f"longitude out of bounds: {lon}")
    phi1 = math.radians(a[0])
    phi2 = math.radians(b[0])
    dphi = math.radians(abs(a[0] - b[0]))
    dlam = math.radians(abs(a[1] - b[1]))
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class ProbeDelayVector:
    """Minimum observed RTT toward one IP from each worldwide probe."""

    ip: IPv4Address
    delays: Mapping[str, tuple[str, float]]  # probe_id -> (continent, min rtt ms)

    def __post_init__(self) -> None:
        delays = dict(self.delays)
        object.__setattr__(self, "delays", delays)
        if not delays:
            raise ValueError(f"empty delay vector for {self.ip}")
        for probe_id, (_, rtt) in delays.items():
            if rtt < 0:
                raise ValueError(f"negative rtt from probe {probe_id}: {rtt}")


def infer_continent(delays: ProbeDelayVector) -> str:
    """Continent of the probe with the smallest RTT.

    Ties break on the lexicographically smallest probe id, which makes the
    result invariant under permutation of the mapping.
    """
    best_probe = min(delays.delays, key=lambda pid: (delays.delays[pid][1], pid))
    return delays.delays[best_probe][0]


def load_probe_delays(path) -> dict[IPv4Address, ProbeDelayVector]:
    """Read `ip,probe_id,continent,rtt_ms` rows, keeping per-probe minima."""
    per_ip: dict[IPv4Address, dict[str, tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0] == "ip":
                continue
            if len(row) != 4:
                raise GeoFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            ip = IPv4Address(row[0].strip())
            probe_id = row[1].strip()
            continent = row[2].strip()
            rtt = float(row[3])
            delays = per_ip.setdefault(ip, {})
            if probe_id in delays:
                prev_continent, prev_rtt = delays[probe_id]
                if prev_continent != continent:
                    raise GeoFormatError(
                        f"{path}:{lineno}: probe {probe_id} changes continent")
                rtt = min(rtt, prev_rtt)
            delays[probe_id] = (continent, rtt)
    return {ip: ProbeDelayVector(ip=ip, delays=d) for ip, d in per_ip.items()}


class GeoDatabase:
    """Prefix-indexed location table with longest-prefix-match lookups."""

    def __init__(self, entries: Iterable[tuple[IPv4Network, str, str, float, float]]):
        # one dict per prefix length: masked address -> row
        self._tables: dict[int, dict[int, tuple[str, str, float, float]]] = {}
        self._size = 0
        for net, country, continent, lat, lon in entries:
            table = self._tables.setdefault(net.prefixlen, {})
            key = int(net.network_address) >> (32 - net.prefixlen) if net.prefixlen else 0
            if key in table:
                raise GeoFormatError(f"duplicate prefix {net}")
            table[key] = (country, continent, lat, lon)
            self._size += 1
        self._lengths = sorted(self._tables, reverse=True)

    def __len__(self) -> int:
        return self._size

    def match(self, ip: IPv4Address) -> tuple[str, str, float, float] | None:
        value = int(ip)
        for plen in self._lengths:
            key = value >> (32 - plen) if plen else 0
            row = self._tables[plen].get(key)
            if row is not None:
                return row
        return None

    @classmethod
    def load_csv(cls, path) -> "GeoDatabase":
        entries = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].startswith("#") or row[0] == "prefix":
                    continue
                if len(row) != 5:
                    raise GeoFormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
                entries.append((IPv4Network(row[0].strip()), row[1].strip(),
                                row[2].strip(), float(row[3]), float(row[4])))
        return cls(entries)


def write_geo_csv(entries: Iterable[tuple[str, str, str, float, float]], path) -> None:
    """Write database rows (`prefix,country,continent,lat,lon`), sorted by prefix."""
    rows = sorted(entries, key=lambda r: (IPv4Network(r[0]).network_address, IPv4Network(r[0]).prefixlen))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["prefix", "country", "continent", "lat", "lon"])
        for prefix, country, continent, lat, lon in rows:
            writer.writerow([prefix, country, continent, repr(float(lat)), repr(float(lon))])


def snapshot_database(fetch: Callable[[], Iterable[tuple[str, str, str, float, float]]], path) -> int:
    """Materialize rows from a fetcher (e.g. an API client) into the CSV format.

    Optional plumbing: the hermetic pipeline only ever reads the CSV.
    Returns the number of rows written.
    """
    rows = list(fetch())
    write_geo_csv(rows, path)
    return len(rows)


_CACHE_SCHEMA_VERSION = 1


class CacheStore:
    """Embedded key-value store for resolved GeoRecords (sqlite-backed).

    Writes are serialized internally, so lookups may come from parallel
    workers sharing one store. Hit/miss counters are per-instance.
    """

    def __init__(self, path=":memory:"):
        self.path = str(path)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False, isolation_level=None)
        self._conn.execute("PRAGMA synchronous=OFF")
        self._init_schema()

    def _init_schema(self) -> None:
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT)")
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS geo ("
                " ip INTEGER PRIMARY KEY, country TEXT, continent TEXT,"
                " lat REAL, lon REAL, provenance TEXT)")
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key='schema_version'").fetchone()
            if row is None:
                self._conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (str(_CACHE_SCHEMA_VERSION),))
            elif int(row[0]) != _CACHE_SCHEMA_VERSION:
                raise CacheSchemaError(
                    f"cache {self.path} has schema v{row[0]}, expected v{_CACHE_SCHEMA_VERSION}")

    def get(self, ip: IPv4Address) -> GeoRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT country, continent, lat, lon, provenance FROM geo WHERE ip=?",
                (int(ip),)).fetchone()
        if row is None:
            self.misses += 1
            return None
        self.hits += 1
        country, continent, lat, lon, provenance = row
        return GeoRecord(ip=ip, country=country, continent=continent,
                         latitude=lat, longitude=lon, provenance=Provenance(provenance))

    def put(self, record: GeoRecord) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO geo (ip, country, continent, lat, lon, provenance)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                (int(record.ip), record.country, record.continent,
                 record.latitude, record.longitude, record.provenance.value))

    def __len__(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM geo").fetchone()[0]

    def close(self) -> None:
        self._conn.close()


def lookup(db: GeoDatabase, cache: CacheStore | None, ip: IPv4Address) -> GeoRecord:
    """Resolve one IP: cache first, then longest-prefix match, then UNKNOWN.

    Results (including UNKNOWN misses) are cached, which keeps lookups with
    and without a cache identical.
    """
    if cache is not None:
        cached = cache.get(ip)
        if cached is not None:
            return cached
    row = db.match(ip)
    if row is None:
        record = unknown_geo(ip)
    else:
        country, continent, lat, lon = row
        record = GeoRecord(ip=ip, country=country, continent=continent,
                           latitude=lat, longitude=lon, provenance=Provenance.DATABASE)
    if cache is not None:
        cache.put(record)
    return record


class Geolocator:
    """Database + cache + optional delay-based continent fallback."""

    def __init__(self, db: GeoDatabase, cache: CacheStore | None = None,
                 probe_delays: Mapping[IPv4Address, ProbeDelayVector] | None = None):
        self.db = db
        self.cache = cache
        self.probe_delays = probe_delays or {}

    def lookup(self, ip: IPv4Address) -> GeoRecord:
        record = lookup(self.db, self.cache, ip)
        if record.is_unknown:
            vector = self.probe_delays.get(ip)
            if vector is not None:
                return GeoRecord(ip=ip, country=UNKNOWN,
                                 continent=infer_continent(vector),
                                 latitude=None, longitude=None,
                                 provenance=Provenance.DELAY_INFERRED)
        return record
