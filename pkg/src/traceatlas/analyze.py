"""Topology and performance analysis over sanitized, geolocated traces:
country-link extraction, exit-point tables, and the binned statistics
(distance histogram, hops vs distance, RTT vs hops, RTT vs distance).

Link extraction works on country changes between consecutive geolocated
hops; star hops and hops whose country is unknown (bogons, database
misses) change nothing and are skipped outright.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Iterable, Mapping, Sequence

from .geo import great_circle_distance
from .model import CountryLink, ExitEntry, ExitPointTable, GeoRecord, TraceRecord, UNKNOWN

IOA_COUNTRIES = ("MG", "MU", "RE", "SC", "YT")

DEFAULT_DISTANCE_BIN_KM = 500.0
DEFAULT_HOP_BIN = 1.0

X_AXES = ("distance_km", "hop_count")
Y_AXES = ("hop_count", "rtt_ms")


class MissingCentroidError(KeyError):
    """A source country has no centroid in the coordinate table."""


class UnmappedCountryError(ValueError):
    def __init__(self, codes: Sequence[str]):
        super().__init__(f"no continent mapping for: {', '.join(sorted(codes))}")
        self.codes = tuple(sorted(codes))


@dataclass(frozen=True)
class GeoHop:
    responder: IPv4Address | None
    country: str
    latitude: float | None
    longitude: float | None
    rtt_ms: float | None


@dataclass(frozen=True)
class GeoTrace:
    """A trace after geolocation, ready for path and delay analysis."""

    source_country: str
    hops: tuple[GeoHop, ...]
    destination_geo: GeoRecord
    end_to_end_rtt_ms: float
    hop_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "hops", tuple(self.hops))
        if self.hop_count != len(self.hops):
            raise ValueError(f"hop_count {self.hop_count} != {len(self.hops)} hops")
        if self.end_to_end_rtt_ms < 0:
            raise ValueError(f"negative end-to-end RTT: {self.end_to_end_rtt_ms}")


def geolocate_trace(record: TraceRecord, geo) -> GeoTrace:
    """Resolve every responder and the destination of one TraceRecord.

    End-to-end RTT is the RTT of the final responding hop (0.0 when no hop
    ever responded, which sanitized traces never exhibit).
    """
    hops = []
    for hop in record.hops:
        if hop.responder is None:
            hops.append(GeoHop(responder=None, country=UNKNOWN,
                               latitude=None, longitude=None, rtt_ms=None))
        else:
            located = geo.lookup(hop.responder)
            hops.append(GeoHop(responder=hop.responder, country=located.country,
                               latitude=located.latitude, longitude=located.longitude,
                               rtt_ms=hop.rtt_ms))
    last = record.last_responding()
    rtt = last.rtt_ms if last is not None and last.rtt_ms is not None else 0.0
    return GeoTrace(
        source_country=record.source_country,
        hops=tuple(hops),
        destination_geo=geo.lookup(record.destination),
        end_to_end_rtt_ms=rtt,
        hop_count=len(hops),
    )


def _known_countries(trace: GeoTrace) -> list[str]:
    # source country occupies position 0; stars and unknowns change nothing
    path = [trace.source_country]
    for hop in trace.hops:
        if hop.responder is not None and hop.country != UNKNOWN:
            path.append(hop.country)
    return path


def extract_country_links(trace: GeoTrace) -> list[CountryLink]:
    """One link per country change along the hop sequence, in path order."""
    path = _known_countries(trace)
    return [
        CountryLink(from_country=a, to_country=b)
        for a, b in zip(path, path[1:])
        if a != b
    ]


def exit_point(trace: GeoTrace) -> str | None:
    """First hop country outside the trace's own source country."""
    for country in _known_countries(trace)[1:]:
        if country != trace.source_country:
            return country
    return None


def aggregate_links(links: Iterable[CountryLink]) -> tuple[CountryLink, ...]:
    """Merge links by direction, summing counts; sorted for determinism."""
    totals: Counter = Counter()
    for link in links:
        totals[(link.from_country, link.to_country)] += link.count
    return tuple(
        CountryLink(from_country=a, to_country=b, count=c)
        for (a, b), c in sorted(totals.items())
    )


def exit_point_table(traces: Iterable[GeoTrace], source: str) -> ExitPointTable:
    """Exit-point distribution for one source country.

    Shares use traces-with-exit as the denominator; traces that never left
    the country are tallied in `no_exit`. Duplicate exit codes merge.
    """
    counts: Counter = Counter()
    no_exit = 0
    for trace in traces:
        if trace.source_country != source:
            continue
        where = exit_point(trace)
        if where is None:
            no_exit += 1
        else:
            counts[where] += 1
    total = sum(counts.values())
    entries = tuple(
        ExitEntry(country=c, share=counts[c] / total, count=counts[c])
        for c in sorted(counts, key=lambda c: (counts[c], c))
    )
    return ExitPointTable(source_country=source, entries=entries, no_exit=no_exit)


def continent_rollup(table: ExitPointTable,
                     country_to_continent: Mapping[str, str]) -> ExitPointTable:
    """Aggregate an exit table by continent; the total share is preserved."""
    unmapped = {e.country for e in table.entries if e.country not in country_to_continent}
    if unmapped:
        raise UnmappedCountryError(sorted(unmapped))
    shares: dict[str, float] = {}
    counts: Counter = Counter()
    for entry in table.entries:
        continent = country_to_continent[entry.country]
        shares[continent] = shares.get(continent, 0.0) + entry.share
        counts[continent] += entry.count
    entries = tuple(
        ExitEntry(country=c, share=shares[c], count=counts[c])
        for c in sorted(shares, key=lambda c: (shares[c], c))
    )
    return ExitPointTable(source_country=table.source_country, entries=entries,
                          no_exit=table.no_exit)


def threshold_filter(table: ExitPointTable, min_share: float) -> ExitPointTable:
    """Keep entries with share >= min_share. Shares are NOT renormalized:
    the filtered view plots raw shares."""
    if not 0.0 <= min_share < 1.0:
        raise ValueError(f"min_share must be in [0, 1), got {min_share}")
    entries = tuple(e for e in table.entries if e.share >= min_share)
    return ExitPointTable(source_country=table.source_country, entries=entries,
                          no_exit=table.no_exit)


def asymmetry_report(links: Iterable[CountryLink],
                     watchlist: Sequence[str] = IOA_COUNTRIES) -> list[tuple[str, str]]:
    """Directed pairs within the watchlist whose reverse edge is absent."""
    watch = set(watchlist)
    present = {(l.from_country, l.to_country) for l in links}
    return sorted(
        (a, b) for a, b in present
        if a in watch and b in watch and (b, a) not in present
    )


# ---------------------------------------------------------------------------
# binned statistics


@dataclass(frozen=True)
class Bin:
    lo: float
    hi: float
    mean: float
    count: int
    stddev: float


@dataclass(frozen=True)
class BinnedSeries:
    """Fixed-width bins from 0; only occupied bins are emitted."""

    bin_width: float
    bins: tuple[Bin, ...]

    @property
    def bin_edges(self) -> tuple[float, ...]:
        edges: list[float] = []
        for b in self.bins:
            for edge in (b.lo, b.hi):
                if not edges or edge > edges[-1]:
                    edges.append(edge)
        return tuple(edges)

    def total_count(self) -> int:
        return sum(b.count for b in self.bins)


def _series_from_values(values_per_bin: dict[int, list[float]], width: float) -> BinnedSeries:
    # math.fsum is exactly rounded, so per-bin stats do not depend on the
    # order partial aggregations arrive in
    bins = []
    for index in sorted(values_per_bin):
        values = values_per_bin[index]
        n = len(values)
        mean = math.fsum(values) / n
        var = max(0.0, math.fsum(v * v for v in values) / n - mean * mean)
        bins.append(Bin(lo=index * width, hi=(index + 1) * width,
                        mean=mean, count=n, stddev=math.sqrt(var)))
    return BinnedSeries(bin_width=width, bins=tuple(bins))


def _merge_bin_maps(parts: Iterable[dict[int, list[float]]]) -> dict[int, list[float]]:
    merged: dict[int, list[float]] = {}
    for part in parts:
        for index, values in part.items():
            merged.setdefault(index, []).extend(values)
    return merged


def _chunked(items: Sequence, workers: int) -> list[Sequence]:
    if workers <= 1 or len(items) <= 1:
        return [items]
    size = max(1, -(-len(items) // workers))
    return [items[i:i + size] for i in range(0, len(items), size)]


def _map_chunks(fn, chunks, workers: int):
    if len(chunks) == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def source_distance_km(trace: GeoTrace, centroids: Mapping[str, tuple[float, float]]) -> float | None:
    """Great-circle km between the source-country centroid and the
    destination's coordinates; None when the destination is unlocated."""
    if trace.source_country not in centroids:
        raise MissingCentroidError(trace.source_country)
    dest = trace.destination_geo
    if dest.latitude is None or dest.longitude is None:
        return None
    return great_circle_distance(centroids[trace.source_country],
                                 (dest.latitude, dest.longitude))


def distance_histogram(traces: Sequence[GeoTrace], bin_width_km: float,
                       centroids: Mapping[str, tuple[float, float]],
                       workers: int = 1) -> BinnedSeries:
    """Histogram of source-to-destination distances (stats are over the
    distances that fell in each bin). Unlocated destinations are skipped."""
    if bin_width_km <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width_km}")

    def collect(chunk: Sequence[GeoTrace]) -> dict[int, list[float]]:
        out: dict[int, list[float]] = {}
        for trace in chunk:
            distance = source_distance_km(trace, centroids)
            if distance is None:
                continue
            out.setdefault(int(distance // bin_width_km), []).append(distance)
        return out

    parts = _map_chunks(collect, _chunked(traces, workers), workers)
    return _series_from_values(_merge_bin_maps(parts), bin_width_km)


def relate(traces: Sequence[GeoTrace], x: str, y: str, bin_width: float,
           centroids: Mapping[str, tuple[float, float]] | None = None,
           workers: int = 1) -> dict[str, BinnedSeries]:
    """Per-source-country mean/count/stddev of `y` over fixed-width `x` bins.

    Axis choices: x in {distance_km, hop_count}, y in {hop_count, rtt_ms},
    covering hops-vs-distance, rtt-vs-hops and rtt-vs-distance.
    """
    if x not in X_AXES:
        raise ValueError(f"x axis must be one of {X_AXES}, got {x!r}")
    if y not in Y_AXES:
        raise ValueError(f"y axis must be one of {Y_AXES}, got {y!r}")
    if x == y:
        raise ValueError("axes must be distinct")
    if bin_width <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    if x == "distance_km" and centroids is None:
        raise ValueError("distance axis requires a centroid table")

    def x_value(trace: GeoTrace) -> float | None:
        if x == "hop_count":
            return float(trace.hop_count)
        return source_distance_km(trace, centroids)

    def y_value(trace: GeoTrace) -> float:
        return float(trace.hop_count) if y == "hop_count" else trace.end_to_end_rtt_ms

    def collect(chunk: Sequence[GeoTrace]) -> dict[str, dict[int, list[float]]]:
        out: dict[str, dict[int, list[float]]] = {}
        for trace in chunk:
            xv = x_value(trace)
            if xv is None:
                continue
            per_bin = out.setdefault(trace.source_country, {})
            per_bin.setdefault(int(xv // bin_width), []).append(y_value(trace))
        return out

    parts = _map_chunks(collect, _chunked(traces, workers), workers)
    per_source: dict[str, dict[int, list[float]]] = {}
    for part in parts:
        for source, bin_map in part.items():
            merged = per_source.setdefault(source, {})
            for index, values in bin_map.items():
                merged.setdefault(index, []).extend(values)
    return {
        source: _series_from_values(bin_map, bin_width)
        for source, bin_map in sorted(per_source.items())
    }


# ---------------------------------------------------------------------------
# serialization


def write_binned_csv(series: BinnedSeries, path) -> None:
    """`bin,mean,count,stddev` rows; `bin` is the lower edge."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "mean", "count", "stddev"])
        for b in series.bins:
            writer.writerow([repr(b.lo), repr(b.mean), b.count, repr(b.stddev)])


def write_share_csv(table: ExitPointTable, path) -> None:
    """`code,share,count` rows in table (ascending-share) order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["code", "share", "count"])
        for entry in table.entries:
            writer.writerow([entry.country, repr(entry.share), entry.count])


def exit_table_to_dict(table: ExitPointTable) -> dict:
    return {
        "source_country": table.source_country,
        "no_exit": table.no_exit,
        "entries": [
            {"country": e.country, "share": e.share, "count": e.count}
            for e in table.entries
        ],
    }


def write_exit_table_json(table: ExitPointTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(exit_table_to_dict(table), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_links_csv(links: Iterable[CountryLink], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["from", "to", "count"])
        for link in aggregate_links(links):
            writer.writerow([link.from_country, link.to_country, link.count])


def write_gnuplot_data(series: BinnedSeries, path) -> None:
    """Whitespace-separated columns for direct gnuplot consumption."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# bin mean count stddev\n")
        for b in series.bins:
            fh.write(f"{b.lo!r} {b.mean!r} {b.count} {b.stddev!r}\n")
