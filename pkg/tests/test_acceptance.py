"""Acceptance suite: one test per release criterion, each at its stated
tolerance, printing a pass line on success (run with `pytest -s` to see
them inline). Oracles live in tests/oracles.py and stay independent of
the code paths they check.
"""

from __future__ import annotations

import os
import random
import tempfile
import time
from collections import Counter
from ipaddress import IPv4Address, IPv4Network

import pytest

from conftest import make_geotrace, make_record, plain_hop, star_hop
from oracles import (
    brute_force_schedule,
    max_overlap,
    naive_binned_stats,
    sphere_distance_law_of_cosines,
)
from traceatlas.analyze import (
    distance_histogram,
    exit_point,
    exit_point_table,
    extract_country_links,
    geolocate_trace,
    relate,
    source_distance_km,
    write_binned_csv,
)
from traceatlas.cli import run_pipeline
from traceatlas.geo import (
    CacheStore,
    GeoDatabase,
    Geolocator,
    ProbeDelayVector,
    great_circle_distance,
    infer_continent,
)
from traceatlas.model import ContinentDistribution, HopAnnotation, UNKNOWN
from traceatlas.parsing import parse_corpus
from traceatlas.sampler import (
    TargetPool,
    largest_remainder_quotas,
    stratified_sample,
)
from traceatlas.sanitize import Mode, RejectionReason, sanitize, sanitize_corpus
from traceatlas.schedule import (
    CampaignConfig,
    constant_durations,
    plan_campaign,
    validate_plan,
)
from traceatlas.synth import (
    generate_documents,
    island_world,
    read_labels,
    write_corpus,
)

DEST = "203.0.113.9"


def _ok(cid: str, name: str) -> None:
    print(f"\n[acceptance] {cid} {name}: PASS", flush=True)


# -------------------------------------------------------------------------
# 1. sanitizer rule suite


class _AllKnownGeo:
    def lookup(self, ip):
        from traceatlas.model import GeoRecord, unknown_geo
        if str(ip).startswith("100.66."):
            return unknown_geo(ip)
        return GeoRecord(ip=ip, country="FR", continent="EU", latitude=46.2, longitude=2.2)


def test_c1_sanitizer_rule_suite():
    start = time.perf_counter()
    geo = _AllKnownGeo()

    fixtures = {
        RejectionReason.NOT_REACHED: make_record(
            hops=[plain_hop("198.51.100.1", 1.2), star_hop()]),
        RejectionReason.TRAILING_STARS: make_record(
            hops=[plain_hop("198.51.100.1", 1.2), plain_hop(DEST, 5.0),
                  star_hop(), star_hop(), star_hop()]),
        RejectionReason.UNREACHABLE_MARK: make_record(
            hops=[("198.51.100.7", 2.1, HopAnnotation.HOST_UNREACHABLE),
                  plain_hop(DEST, 5.0)]),
        RejectionReason.CORRUPT: make_record(hops=[], reached=True),
        RejectionReason.LOOP: make_record(
            hops=[plain_hop(f"198.51.100.{i % 250 + 1}", float(i + 1)) for i in range(200)]
            + [plain_hop(DEST, 300.0)]),
        RejectionReason.UNKNOWN_COUNTRY: make_record(
            hops=[plain_hop("198.51.100.1", 1.2), plain_hop("100.66.0.7", 3.0),
                  plain_hop(DEST, 5.0)]),
    }
    for reason, trace in fixtures.items():
        assert sanitize(trace, geo=geo, mode=Mode.GEOGRAPHIC) is reason, reason
    assert len(fixtures) == 6

    clean = make_record(hops=[plain_hop("198.51.100.1", 1.2), plain_hop(DEST, 5.0)])
    assert sanitize(clean, geo=geo, mode=Mode.GEOGRAPHIC) is None

    # mode monotonicity over 10,000 randomized synthetic traces
    rng = random.Random(1)
    traces = []
    for _ in range(10_000):
        hops = []
        for i in range(rng.randint(0, 9)):
            roll = rng.random()
            if roll < 0.18:
                hops.append(star_hop())
            elif roll < 0.28:
                hops.append((f"198.51.100.{i + 1}", rng.uniform(0, 90),
                             rng.choice((HopAnnotation.NETWORK_UNREACHABLE,
                                         HopAnnotation.HOST_UNREACHABLE))))
            elif roll < 0.43:
                hops.append((f"100.66.0.{i + 1}", rng.uniform(0, 90), HopAnnotation.NONE))
            else:
                hops.append((f"198.51.100.{i + 1}", rng.uniform(0, 90), HopAnnotation.NONE))
        if rng.random() < 0.55:
            hops.append(plain_hop(DEST, rng.uniform(1, 400)))
        if rng.random() < 0.25:
            hops.extend([star_hop()] * rng.randint(1, 3))
        traces.append(make_record(hops=hops))

    topo, _ = sanitize_corpus(traces, mode=Mode.TOPOLOGY)
    geo_mode, _ = sanitize_corpus(traces, mode=Mode.GEOGRAPHIC, geo=geo)
    topo_ids = {id(t) for t in topo}
    assert all(id(t) in topo_ids for t in geo_mode)

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"criterion 1 took {elapsed:.1f}s"
    _ok("C1", "sanitizer rule suite + mode monotonicity")


# -------------------------------------------------------------------------
# 2. bogon invariance


def test_c2_bogon_invariance():
    start = time.perf_counter()
    rng = random.Random(2)
    base_countries = ["RE", "FR", "FR", "GB", "US", "US"]
    base = make_geotrace(base_countries, source="RE")
    want_links = extract_country_links(base)
    want_exit = exit_point(base)
    for _ in range(1000):
        padded = list(base_countries)
        for _ in range(rng.randint(1, 8)):
            padded.insert(rng.randint(0, len(padded)), rng.choice([UNKNOWN, None]))
        trace = make_geotrace(padded, source="RE")
        assert extract_country_links(trace) == want_links
        assert exit_point(trace) == want_exit
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"criterion 2 took {elapsed:.1f}s"
    _ok("C2", "star/unknown hop insertions never change links or exits")


# -------------------------------------------------------------------------
# 3. exit-table oracle (single-exit YT and GB-dominated MG shapes)


def test_c3_exit_table_oracle():
    start = time.perf_counter()
    world = island_world(seed=3)
    docs, labels = generate_documents(world, 10_000)

    geo = Geolocator(GeoDatabase(
        (IPv4Network(p), c, k, lat, lon)
        for p, c, k, lat, lon in world.geo_entries()), cache=CacheStore())
    records = [o.record for o in parse_corpus(docs) if o.record is not None]
    accepted, report = sanitize_corpus(records, mode=Mode.GEOGRAPHIC, geo=geo)
    assert len(accepted) == 10_000 and not report
    geotraces = [geolocate_trace(r, geo) for r in accepted]

    by_source = Counter(l.source_country for l in labels)
    yt = exit_point_table(geotraces, "YT")
    assert [ (e.country, e.count) for e in yt.entries] == [("FR", by_source["YT"])]
    assert yt.entries[-1].share == 1.0

    mg = exit_point_table(geotraces, "MG")
    planted = largest_remainder_quotas(
        {"GB": 0.8379, "FR": 0.10, "US": 0.0439, "MU": 0.0182}, by_source["MG"])
    got = {e.country: e.count for e in mg.entries}
    for country, quota in planted.items():
        assert abs(got[country] - quota) <= 1, (country, got[country], quota)
    assert abs(mg.total_share() - 1.0) <= 1e-9
    assert abs(yt.total_share() - 1.0) <= 1e-9

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"criterion 3 took {elapsed:.1f}s"
    _ok("C3", "planted exit shares recovered within one trace count")


# -------------------------------------------------------------------------
# 4. haversine vs independent oracle


def test_c4_haversine_oracle():
    rng = random.Random(4)
    for _ in range(10_000):
        a = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        b = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        got = great_circle_distance(a, b)
        want = sphere_distance_law_of_cosines(a, b)
        assert abs(got - want) <= 0.5, (a, b, got, want)
        assert great_circle_distance(b, a) == got  # symmetry, exact
    assert great_circle_distance((0.0, 0.0), (0.0, 180.0)) == pytest.approx(20015.1, abs=0.1)
    pt = (12.34, -56.78)
    assert great_circle_distance(pt, pt) == 0.0  # zero, exact
    _ok("C4", "haversine agrees with the high-precision reference within 0.5 km")


# -------------------------------------------------------------------------
# 5. sampler quotas


def test_c5_sampler_quotas():
    weights = {"AF": 0.0259, "AS": 0.2334, "EU": 0.207,
               "NA": 0.4755, "OC": 0.0155, "SA": 0.0427}
    target = ContinentDistribution(weights)

    addrs = {}
    base = 1
    for continent in sorted(weights):
        for i in range(6000):
            addrs[IPv4Address((5 << 24) + (base << 16) + i)] = continent
        base += 1
    pool = TargetPool(candidates=frozenset(addrs), responsive=frozenset(addrs), geo=addrs)

    sample = stratified_sample(pool, target, 10_000, seed=5)
    assert sample.realized == {"AF": 259, "AS": 2334, "EU": 2070,
                               "NA": 4755, "OC": 155, "SA": 427}
    assert len(sample) == 10_000
    realized = {c: n / 10_000 for c, n in sample.realized.items()}
    l1 = sum(abs(realized[c] - weights[c]) for c in weights)
    assert l1 <= 2 * 6 / 10_000
    _ok("C5", "registry-mix quotas {259, 2334, 2070, 4755, 155, 427}, L1 in bound")


# -------------------------------------------------------------------------
# 6. scheduler arithmetic


def test_c6_scheduler_arithmetic():
    targets = tuple(IPv4Address((5 << 24) + i) for i in range(10_000))
    config = CampaignConfig(targets=targets)
    plan = plan_campaign(config, constant_durations(targets, 28.0))
    assert plan.events[-1].start_s == pytest.approx(86_391.36, abs=1e-6)
    assert plan.events[-1].start_s < 86_400  # one-day campaign
    assert validate_plan(plan, config) == []  # sweep line: overlap <= 4, spacing ok

    rng = random.Random(6)
    for trial in range(100):
        n = rng.randint(1, 30)
        config = CampaignConfig(
            targets=targets[:n],
            launch_interval_s=rng.choice((2.0, 8.64, 20.0)),
            max_concurrent=rng.randint(1, 5),
            shuffle_seed=trial,
        )
        durations = {t: rng.uniform(0.5, 120.0) for t in config.targets}
        plan = plan_campaign(config, durations)
        order = list(config.targets)
        random.Random(config.shuffle_seed).shuffle(order)
        expected = brute_force_schedule(order, config.launch_interval_s,
                                        config.max_concurrent, durations)
        assert [(e.start_s, e.end_s) for e in plan.events] == pytest.approx(expected)
        assert max_overlap([(e.start_s, e.end_s) for e in plan.events]) <= config.max_concurrent
    _ok("C6", "fixed-grid plan matches brute-force simulation; day fits; overlap <= 4")


# -------------------------------------------------------------------------
# 7. delay inference


def test_c7_delay_inference():
    rng = random.Random(7)
    continents = ["AF", "AS", "EU", "NA", "OC", "SA"]
    for trial in range(1000):
        ip = IPv4Address(rng.getrandbits(32))
        delays = {
            f"p{j:02d}": (rng.choice(continents), round(rng.uniform(0, 400), 3))
            for j in range(rng.randint(1, 12))
        }
        vector = ProbeDelayVector(ip=ip, delays=delays)
        got = infer_continent(vector)
        best = min(vector.delays.items(), key=lambda kv: (kv[1][1], kv[0]))
        assert got == best[1][0]
        # permutation invariance: reversed insertion order, same answer
        flipped = ProbeDelayVector(ip=ip, delays=dict(reversed(list(delays.items()))))
        assert infer_continent(flipped) == got

    tie = ProbeDelayVector(ip=IPv4Address("192.0.2.1"),
                           delays={"pB": ("AS", 30.0), "pA": ("EU", 30.0),
                                   "pC": ("NA", 30.0)})
    assert infer_continent(tie) == "EU"  # smallest probe id wins
    _ok("C7", "minimum-delay continent, permutation-invariant with fixed tie-break")


# -------------------------------------------------------------------------
# 8. aggregation equivalence


def _random_geotraces(n: int, seed: int):
    rng = random.Random(seed)
    dests = [("FR", 48.85, 2.35), ("US", 39.8, -98.6), ("JP", 36.2, 138.3),
             ("ZA", -29.0, 24.7), ("AU", -25.3, 133.8)]
    traces = []
    for _ in range(n):
        country, lat, lon = rng.choice(dests)
        hops = rng.randint(1, 14)
        traces.append(make_geotrace(
            ["RE"] * hops, source=rng.choice(["RE", "MG", "YT", "MU", "SC"]),
            rtt=rng.uniform(0.5, 500.0),
            dest_lat=lat + rng.uniform(-4, 4), dest_lon=lon + rng.uniform(-4, 4),
            dest_country=country))
    return traces


def _series_bytes(series) -> bytes:
    """Canonical serialization of a binned series (the figure CSV bytes)."""
    fd, path = tempfile.mkstemp()
    os.close(fd)
    try:
        write_binned_csv(series, path)
        with open(path, "rb") as fh:
            return fh.read()
    finally:
        os.unlink(path)


def test_c8_aggregation_equivalence():
    centroids = {"RE": (-21.1, 55.5), "MG": (-18.9, 47.5), "YT": (-12.8, 45.2),
                 "MU": (-20.3, 57.6), "SC": (-4.7, 55.5)}
    traces = _random_geotraces(10_000, seed=8)

    for x, y, width in (("distance_km", "rtt_ms", 500.0),
                        ("hop_count", "rtt_ms", 1.0),
                        ("distance_km", "hop_count", 500.0)):
        serial = relate(traces, x=x, y=y, bin_width=width, centroids=centroids, workers=1)
        parallel = relate(traces, x=x, y=y, bin_width=width, centroids=centroids, workers=8)
        assert set(serial) == set(parallel)
        for source in serial:
            assert _series_bytes(serial[source]) == _series_bytes(parallel[source])
            # against the naive single-pass reference, 1e-9
            def xv(t):
                return (float(t.hop_count) if x == "hop_count"
                        else source_distance_km(t, centroids))

            def yv(t):
                return float(t.hop_count) if y == "hop_count" else t.end_to_end_rtt_ms

            pairs = [(xv(t), yv(t)) for t in traces if t.source_country == source]
            expected = naive_binned_stats(pairs, width)
            for b in serial[source].bins:
                mean, count, stddev = expected[int(b.lo // width)]
                assert b.count == count
                assert abs(b.mean - mean) <= 1e-9
                assert abs(b.stddev - stddev) <= 1e-9

    h1 = distance_histogram(traces, 500.0, centroids, workers=1)
    h8 = distance_histogram(traces, 500.0, centroids, workers=8)
    assert _series_bytes(h1) == _series_bytes(h8)
    pairs = [(source_distance_km(t, centroids),) * 2 for t in traces]
    expected = naive_binned_stats(pairs, 500.0)
    for b in h1.bins:
        mean, count, stddev = expected[int(b.lo // 500.0)]
        assert b.count == count and abs(b.mean - mean) <= 1e-9
    _ok("C8", "binned stats equal the naive reference; 8-worker == serial bytes")


# -------------------------------------------------------------------------
# 9. parser throughput


def test_c9_parser_throughput():
    world = island_world(seed=9, rejections={"corrupt": 0.02})
    docs, _ = generate_documents(world, 100_000)

    start = time.perf_counter()
    outcomes_count = 0
    corrupt_count = 0
    for outcome in parse_corpus(docs, workers=8):
        outcomes_count += 1
        if outcome.error is not None:
            corrupt_count += 1
    elapsed = time.perf_counter() - start

    assert outcomes_count == 100_000  # count preservation, exact
    assert corrupt_count == 2000
    rate = outcomes_count / elapsed
    assert rate >= 1250, f"throughput {rate:.0f} docs/s below target"
    _ok("C9", f"parsed 100k docs at {rate:.0f} docs/s on 8 workers")


# -------------------------------------------------------------------------
# 10. end-to-end determinism


def test_c10_end_to_end_determinism(tmp_path):
    rejections = {"not_reached": 0.1, "trailing_stars": 0.04, "unreachable_mark": 0.04,
                  "corrupt": 0.06, "loop": 0.01, "unknown_country": 0.05}
    world = island_world(seed=10, rejections=rejections)
    paths = write_corpus(world, 2_000, tmp_path / "bundle")
    labels = read_labels(paths["labels"])

    config = tmp_path / "bundle" / "run.toml"
    config.write_text("""
[inputs]
corpus = "corpus"
geo_db = "geo_db.csv"
centroids = "centroids.csv"
map_coords = "map_coords.csv"

[pipeline]
mode = "geographic"
workers = 2

[outputs]
out_dir = "OUTDIR"
""".replace("OUTDIR", "run_a"), encoding="utf-8")
    code_a, manifest_a = run_pipeline(config)
    config.write_text(config.read_text(encoding="utf-8").replace("run_a", "run_b"),
                      encoding="utf-8")
    code_b, _ = run_pipeline(config)
    assert code_a == 0 and code_b == 0

    out_a = tmp_path / "bundle" / "run_a"
    out_b = tmp_path / "bundle" / "run_b"
    names_a = sorted(p.name for p in out_a.iterdir())
    assert names_a == sorted(p.name for p in out_b.iterdir())
    for name in names_a:
        if name == "manifest.json":  # timestamps differ by design
            continue
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    counts = manifest_a["counts"]
    by_cause = Counter(l.rejection for l in labels)
    assert counts["documents"] == 2_000
    assert counts["accepted"] == by_cause[None]
    assert counts["rejected"] == {c: n for c, n in by_cause.items() if c is not None}

    # exit tables reconcile with the generator's labels, per source
    import json
    for source in counts["sources"]:
        with open(out_a / f"exit_table_{source}.json", encoding="utf-8") as fh:
            table = json.load(fh)
        expected = Counter(l.exit_country for l in labels
                           if l.rejection is None and l.source_country == source
                           and l.exit_country)
        assert {e["country"]: e["count"] for e in table["entries"]} == dict(expected)
    _ok("C10", "rerun byte-identical; manifest and exit tables match labels exactly")
