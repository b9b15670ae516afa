"""Synthetic trace corpora with fully known ground truth.

A SyntheticWorld fixes countries (with centroids and continents), directed
inter-country latencies, per-source exit-share targets and a mix of planted
rejection causes. Generation is deterministic under the world seed; labels
record each trace's true exit country, country path, hop count, end-to-end
RTT and planted rejection cause, which makes generated corpora usable as
oracles for the whole parse/sanitize/geolocate/analyze pipeline.

Planted counts are largest-remainder quotas, so share specifications are
recovered exactly (not just in expectation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from pathlib import Path
from random import Random
from typing import Mapping

from .datafiles import load_countries
from .geo import write_geo_csv
from .parsing import RawTraceDocument, write_corpus_file
from .sampler import largest_remainder_quotas
from .worldmap import derive_map_coords, write_map_coords

BASE_TIMESTAMP = 1490169600  # 2017-03-22T08:00:00Z, start of a campaign day

_REJECTION_KINDS = ("not_reached", "trailing_stars", "unreachable_mark",
                    "corrupt", "loop", "unknown_country")

# 5.0.0.0/8 is ordinary public unicast space; country k owns 5.k.0.0/16.
_PREFIX_BASE = 5 << 24

# TEST-NET-3: never in any synthetic geo database, so these hops resolve
# to UNKNOWN downstream.
_UNLOCATABLE_BASE = int(IPv4Address("203.0.113.0"))


@dataclass(frozen=True)
class WorldCountry:
    code: str
    continent: str
    lat: float
    lon: float


@dataclass(frozen=True)
class SourceSpec:
    weight: float
    exits: Mapping[str, float]  # exit country -> share of clean traces

    def __post_init__(self) -> None:
        object.__setattr__(self, "exits", dict(self.exits))
        if self.weight <= 0:
            raise ValueError(f"source weight must be positive, got {self.weight}")
        total = sum(self.exits.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"exit shares sum to {total}, expected 1.0")


@dataclass(frozen=True)
class SyntheticWorld:
    countries: tuple[WorldCountry, ...]
    sources: Mapping[str, SourceSpec]
    edges: Mapping[tuple[str, str], float] = field(default_factory=dict)
    rejections: Mapping[str, float] = field(default_factory=dict)
    jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "sources", dict(self.sources))
        object.__setattr__(self, "edges", dict(self.edges))
        object.__setattr__(self, "rejections", dict(self.rejections))
        codes = [c.code for c in self.countries]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate country codes")
        if len(codes) > 200:
            raise ValueError("at most 200 countries per world")
        known = set(codes)
        for source, spec in self.sources.items():
            if source not in known:
                raise ValueError(f"source {source} not among world countries")
            for exit_code in spec.exits:
                if exit_code not in known:
                    raise ValueError(f"exit {exit_code} not among world countries")
        for (a, b), latency in self.edges.items():
            if latency <= 0:
                raise ValueError(f"edge {a}->{b} has non-positive latency")
        total_rej = sum(self.rejections.values())
        if total_rej > 1.0 + 1e-9:
            raise ValueError(f"rejection fractions sum to {total_rej} > 1")
        for kind in self.rejections:
            if kind not in _REJECTION_KINDS:
                raise ValueError(f"unknown rejection kind {kind!r}")
        if self.jitter_ms < 0:
            raise ValueError("jitter must be >= 0")

    def centroids(self) -> dict[str, tuple[float, float]]:
        return {c.code: (c.lat, c.lon) for c in self.countries}

    def continent_map(self) -> dict[str, str]:
        return {c.code: c.continent for c in self.countries}

    def geo_entries(self) -> list[tuple[str, str, str, float, float]]:
        ordered = sorted(self.countries, key=lambda c: c.code)
        return [
            (f"5.{i}.0.0/16", c.code, c.continent, c.lat, c.lon)
            for i, c in enumerate(ordered)
        ]

    def edge_latency(self, a: str, b: str) -> float:
        return self.edges.get((a, b), 80.0)


@dataclass(frozen=True)
class TraceLabel:
    """Ground truth for one generated document."""

    index: int
    probe_id: str
    launched_at: int
    source_country: str
    destination: str
    exit_country: str | None
    country_path: tuple[str, ...]
    hop_count: int
    end_to_end_rtt_ms: float
    rejection: str | None  # None = clean in both sanitizer modes

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "probe_id": self.probe_id,
            "launched_at": self.launched_at,
            "source_country": self.source_country,
            "destination": self.destination,
            "exit_country": self.exit_country,
            "country_path": list(self.country_path),
            "hop_count": self.hop_count,
            "end_to_end_rtt_ms": self.end_to_end_rtt_ms,
            "rejection": self.rejection,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceLabel":
        return cls(
            index=data["index"],
            probe_id=data["probe_id"],
            launched_at=data["launched_at"],
            source_country=data["source_country"],
            destination=data["destination"],
            exit_country=data["exit_country"],
            country_path=tuple(data["country_path"]),
            hop_count=data["hop_count"],
            end_to_end_rtt_ms=data["end_to_end_rtt_ms"],
            rejection=data["rejection"],
        )


class _IpAllocator:
    """Deterministic per-country address supply inside 5.<k>.0.0/16."""

    def __init__(self, world: SyntheticWorld):
        self._index = {c: i for i, c in enumerate(sorted(x.code for x in world.countries))}
        self._next: dict[str, int] = {}

    def router(self, country: str) -> str:
        # hosts .1.1 .. upward within the country /16, skipping .0 and .255
        n = self._next.get(country, 0)
        self._next[country] = n + 1
        third, fourth = (n // 254) % 254 + 1, n % 254 + 1
        return str(IPv4Address(_PREFIX_BASE + (self._index[country] << 16) + (third << 8) + fourth))

    def destination(self, country: str) -> str:
        return self.router(country)


def _build_hops(rng: Random, world: SyntheticWorld, allocator: _IpAllocator,
                source: str, exit_country: str, kind: str) -> tuple[list, str, list[str]]:
    """Hop plan for one trace: list of (ip-or-None, rtt, mark) plus the
    destination address and the true country path."""
    jitter = world.jitter_ms

    def j(value: float) -> float:
        if jitter:
            value += rng.uniform(-jitter, jitter)
        return round(max(value, 0.001), 3)

    hops: list[tuple[str | None, float | None, str]] = []
    path = [source]
    rtt = 0.0

    intra = 200 if kind == "loop" else rng.randint(1, 3)
    for _ in range(intra):
        rtt += rng.uniform(0.2, 2.0)
        hops.append((allocator.router(source), j(rtt), ""))
    if kind == "clean" and rng.random() < 0.15:
        hops.append((None, None, ""))  # a lone mid-path star is clean
    if kind == "unknown_country":
        unlocatable = str(IPv4Address(_UNLOCATABLE_BASE + rng.randint(1, 254)))
        rtt += rng.uniform(0.2, 2.0)
        hops.append((unlocatable, j(rtt), ""))
    if kind == "unreachable_mark":
        mark = rng.choice(("!N", "!H"))
        hops[-1] = (hops[-1][0], hops[-1][1], mark)

    rtt += world.edge_latency(source, exit_country)
    for _ in range(rng.randint(0, 1)):
        rtt += rng.uniform(0.2, 2.0)
        hops.append((allocator.router(exit_country), j(rtt), ""))
        path.append(exit_country)

    destination = allocator.destination(exit_country)
    rtt += rng.uniform(0.2, 2.0)
    if kind == "not_reached":
        # destination silent: a last router plus one or two stars (never 3)
        hops.append((allocator.router(exit_country), j(rtt), ""))
        path.append(exit_country)
        for _ in range(rng.randint(1, 2)):
            hops.append((None, None, ""))
    else:
        hops.append((destination, j(rtt), ""))
        path.append(exit_country)
        if kind == "trailing_stars":
            hops.extend([(None, None, "")] * 3)

    # collapse consecutive duplicates into the true country path
    collapsed = [path[0]]
    for c in path[1:]:
        if c != collapsed[-1]:
            collapsed.append(c)
    return hops, destination, collapsed


def _render_document(probe_id: str, ts: int, destination: str,
                     hops: list[tuple[str | None, float | None, str]],
                     corrupt_shape: str | None = None) -> RawTraceDocument:
    if corrupt_shape == "empty":
        return RawTraceDocument(probe_id=probe_id, launched_at=ts, body="")
    max_hops = 255 if len(hops) > 30 else 30
    lines = [f"traceroute to {destination} ({destination}), {max_hops} hops max, 60 byte packets"]
    if corrupt_shape == "garbled":
        lines.append(" 1  this-is-not-an-address  1.000 ms")
    elif corrupt_shape == "non_monotone":
        lines.append(f" 2  {destination}  1.000 ms")
        lines.append(f" 2  {destination}  2.000 ms")
    else:
        for ttl, (ip, rtt, mark) in enumerate(hops, start=1):
            if ip is None:
                lines.append(f" {ttl}  *")
            else:
                suffix = f" {mark}" if mark else ""
                lines.append(f" {ttl}  {ip}  {rtt:.3f} ms{suffix}")
    return RawTraceDocument(probe_id=probe_id, launched_at=ts, body="\n".join(lines))


def generate_documents(world: SyntheticWorld, n: int) -> tuple[list[RawTraceDocument], list[TraceLabel]]:
    """Emit n raw documents plus their ground-truth labels, deterministically."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = Random(world.seed)
    allocator = _IpAllocator(world)

    # causes: global largest-remainder quotas over the rejection mix
    mix = dict(world.rejections)
    mix["__clean__"] = 1.0 - sum(mix.values())
    cause_quotas = largest_remainder_quotas(mix, n)
    causes: list[str] = []
    for kind in sorted(cause_quotas):
        causes.extend([kind] * cause_quotas[kind])
    rng.shuffle(causes)

    # sources: quotas over source weights
    weights = {s: spec.weight for s, spec in world.sources.items()}
    wsum = sum(weights.values())
    weights = {s: w / wsum for s, w in weights.items()}
    source_quotas = largest_remainder_quotas(weights, n)
    sources: list[str] = []
    for s in sorted(source_quotas):
        sources.extend([s] * source_quotas[s])
    rng.shuffle(sources)

    # exits: per-source quotas over everything that needs an exit decision
    needs_exit: dict[str, list[int]] = {s: [] for s in world.sources}
    for i in range(n):
        if causes[i] != "corrupt":
            needs_exit[sources[i]].append(i)
    exit_for_slot: dict[int, str] = {}
    for s in sorted(needs_exit):
        slots = needs_exit[s]
        if not slots:
            continue
        quotas = largest_remainder_quotas(dict(world.sources[s].exits), len(slots))
        pool: list[str] = []
        for code in sorted(quotas):
            pool.extend([code] * quotas[code])
        rng.shuffle(pool)
        for slot, exit_code in zip(slots, pool):
            exit_for_slot[slot] = exit_code

    corrupt_shapes = ("empty", "garbled", "non_monotone")
    docs: list[RawTraceDocument] = []
    labels: list[TraceLabel] = []
    for i in range(n):
        source = sources[i]
        cause = causes[i]
        probe_id = f"{source}-1"
        ts = BASE_TIMESTAMP + i * 9
        if cause == "corrupt":
            shape = corrupt_shapes[rng.randrange(3)]
            placeholder = allocator.destination(source)
            docs.append(_render_document(probe_id, ts, placeholder, [], corrupt_shape=shape))
            labels.append(TraceLabel(
                index=i, probe_id=probe_id, launched_at=ts, source_country=source,
                destination=placeholder, exit_country=None, country_path=(source,),
                hop_count=0, end_to_end_rtt_ms=0.0, rejection="corrupt"))
            continue
        kind = "clean" if cause == "__clean__" else cause
        exit_country = exit_for_slot[i]
        hops, destination, path = _build_hops(rng, world, allocator, source, exit_country, kind)
        docs.append(_render_document(probe_id, ts, destination, hops))
        last_rtt = next((rtt for ip, rtt, _ in reversed(hops) if ip is not None), 0.0)
        labels.append(TraceLabel(
            index=i, probe_id=probe_id, launched_at=ts, source_country=source,
            destination=destination,
            exit_country=exit_country if exit_country != source else None,
            country_path=tuple(path),
            hop_count=len(hops),
            end_to_end_rtt_ms=last_rtt,
            rejection=None if kind == "clean" else kind))
    return docs, labels


def write_corpus(world: SyntheticWorld, n: int, out_dir) -> dict[str, Path]:
    """Generate and materialize a full fixture bundle:

    corpus/<probe>.txt, labels.jsonl, geo_db.csv, centroids.csv,
    map_coords.csv. Returns the path of each artifact.
    """
    out = Path(out_dir)
    corpus_dir = out / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    docs, labels = generate_documents(world, n)

    by_probe: dict[str, list[RawTraceDocument]] = {}
    for doc in docs:
        by_probe.setdefault(doc.probe_id, []).append(doc)
    for probe_id in sorted(by_probe):
        write_corpus_file(by_probe[probe_id], corpus_dir / f"{probe_id}.txt")

    labels_path = out / "labels.jsonl"
    with open(labels_path, "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(json.dumps(label.to_dict(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")

    geo_db_path = out / "geo_db.csv"
    write_geo_csv(world.geo_entries(), geo_db_path)

    centroids_path = out / "centroids.csv"
    with open(centroids_path, "w", encoding="utf-8") as fh:
        fh.write("country,lat,lon\n")
        for c in sorted(world.countries, key=lambda c: c.code):
            fh.write(f"{c.code},{c.lat!r},{c.lon!r}\n")

    coords_path = out / "map_coords.csv"
    write_map_coords(derive_map_coords(world.centroids()), coords_path)

    return {
        "corpus": corpus_dir,
        "labels": labels_path,
        "geo_db": geo_db_path,
        "centroids": centroids_path,
        "map_coords": coords_path,
    }


def read_labels(path) -> list[TraceLabel]:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                labels.append(TraceLabel.from_dict(json.loads(line)))
    return labels


def load_world_toml(path) -> SyntheticWorld:
    """World spec from TOML: [[countries]], [sources.<CC>], [[edges]],
    [rejections], plus top-level seed / jitter_ms."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    countries = tuple(
        WorldCountry(code=c["code"], continent=c["continent"],
                     lat=float(c["lat"]), lon=float(c["lon"]))
        for c in data.get("countries", [])
    )
    sources = {
        code: SourceSpec(weight=float(spec.get("weight", 1.0)),
                         exits={k: float(v) for k, v in spec["exits"].items()})
        for code, spec in data.get("sources", {}).items()
    }
    edges = {
        (e["from_country"], e["to_country"]): float(e["latency_ms"])
        for e in data.get("edges", [])
    }
    rejections = {k: float(v) for k, v in data.get("rejections", {}).items()}
    return SyntheticWorld(
        countries=countries,
        sources=sources,
        edges=edges,
        rejections=rejections,
        jitter_ms=float(data.get("jitter_ms", 0.0)),
        seed=int(data.get("seed", 0)),
    )


def island_world(seed: int = 0, jitter_ms: float = 0.0,
                 rejections: Mapping[str, float] | None = None) -> SyntheticWorld:
    """Built-in five-island scenario: a single FR exit for YT, a
    GB-dominated mix for MG, an EU-placeholder-dominated mix for MU."""
    shares: dict[str, dict[str, float]] = {
        "YT": {"FR": 1.0},
        "MG": {"GB": 0.8379, "FR": 0.10, "US": 0.0439, "MU": 0.0182},
        "MU": {"EU": 0.50004, "IT": 0.32228, "MY": 0.13764, "KE": 0.01217,
               "FR": 0.01167, "ZA": 0.0162},
        "RE": {"FR": 0.554101, "GB": 0.390897, "US": 0.03542, "US-CO": 0.01263,
               "EU": 0.006952},
        "SC": {"GB": 0.944, "MU": 0.0441, "IE": 0.0104, "DE": 0.0015},
    }
    needed = set(shares) | {c for exits in shares.values() for c in exits}
    table = load_countries()
    countries = tuple(
        WorldCountry(code=code, continent=table[code][0],
                     lat=table[code][1], lon=table[code][2])
        for code in sorted(needed)
    )
    edges = {
        ("MG", "GB"): 190.0, ("MG", "FR"): 185.0, ("MG", "US"): 260.0,
        ("MG", "MU"): 35.0, ("MU", "EU"): 175.0, ("MU", "IT"): 170.0,
        ("MU", "MY"): 120.0, ("RE", "FR"): 180.0, ("RE", "GB"): 190.0,
        ("SC", "GB"): 200.0, ("SC", "MU"): 40.0, ("YT", "FR"): 195.0,
    }
    return SyntheticWorld(
        countries=countries,
        sources={code: SourceSpec(weight=1.0, exits=exits) for code, exits in shares.items()},
        edges=edges,
        rejections=dict(rejections or {}),
        jitter_ms=jitter_ms,
        seed=seed,
    )
