from __future__ import annotations

import sys
from ipaddress import IPv4Address
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from traceatlas.analyze import GeoHop, GeoTrace
from traceatlas.model import (
    GeoRecord,
    HopAnnotation,
    HopObservation,
    TraceRecord,
    UNKNOWN,
)


def ip(text: str) -> IPv4Address:
    return IPv4Address(text)


def make_record(*, hops, destination="203.0.113.9",
                probe_id="RE-1", reached=None, launched_at=1490169600) -> TraceRecord:
    """Build a TraceRecord from (responder, rtt, annotation) tuples; None
    responder means a star. reached defaults to the parser rule."""
    observations = []
    for ttl, spec in enumerate(hops, start=1):
        responder, rtt, anno = spec
        observations.append(HopObservation(
            ttl=ttl,
            responder=None if responder is None else ip(responder),
            rtt_ms=rtt,
            annotation=anno,
        ))
    if reached is None:
        reached = False
        for hop in reversed(observations):
            if hop.responder is not None:
                reached = hop.responder == ip(destination)
                break
    return TraceRecord(
        probe_id=probe_id,
        source_country=probe_id.split("-")[0],
        destination=ip(destination),
        hops=tuple(observations),
        destination_reached=reached,
        launched_at=launched_at,
    )


def plain_hop(address: str, rtt: float = 1.0):
    return (address, rtt, HopAnnotation.NONE)


def star_hop():
    return (None, None, HopAnnotation.NONE)


def make_geotrace(countries, *, source="RE", rtt=100.0, dest_lat=48.85,
                  dest_lon=2.35, dest_country="FR") -> GeoTrace:
    """GeoTrace whose hop countries follow `countries` (UNKNOWN entries
    become unlocated hops, None entries become stars)."""
    hops = []
    for i, country in enumerate(countries):
        if country is None:
            hops.append(GeoHop(responder=None, country=UNKNOWN,
                               latitude=None, longitude=None, rtt_ms=None))
        else:
            located = country != UNKNOWN
            hops.append(GeoHop(
                responder=ip(f"192.0.2.{i + 1}"),
                country=country,
                latitude=10.0 if located else None,
                longitude=20.0 if located else None,
                rtt_ms=5.0 * (i + 1),
            ))
    destination = GeoRecord(ip=ip("198.51.100.9"), country=dest_country,
                            continent="EU", latitude=dest_lat, longitude=dest_lon)
    return GeoTrace(source_country=source, hops=tuple(hops),
                    destination_geo=destination, end_to_end_rtt_ms=rtt,
                    hop_count=len(hops))


@pytest.fixture
def tmp_out(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
