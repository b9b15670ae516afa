from __future__ import annotations

import random
from ipaddress import IPv4Address, IPv4Network

import pytest
from hypothesis import given, strategies as st

from traceatlas.model import (
    ContinentDistribution,
    CountryLink,
    ExitEntry,
    ExitPointTable,
    GeoRecord,
    HopAnnotation,
    HopObservation,
    MalformedAddressError,
    PrefixSet,
    TraceRecord,
    default_bogons,
    is_bogon,
    load_bogon_list,
    parse_ipv4,
)


class TestParseIPv4:
    def test_positional_encoding(self):
        assert int(parse_ipv4("192.0.2.1")) == 0xC0000201

    def test_zero(self):
        assert int(parse_ipv4("0.0.0.0")) == 0

    def test_octet_out_of_range(self):
        with pytest.raises(MalformedAddressError):
            parse_ipv4("256.1.1.1")

    @pytest.mark.parametrize("bad", ["", "1.2.3", "1.2.3.4.5", "a.b.c.d",
                                     "01.2.3.4", "1.2.3.4/8", " 1.2.3.4"])
    def test_rejects_garbage(self, bad):
        with pytest.raises(MalformedAddressError):
            parse_ipv4(bad)

    def test_render_round_trip_large_sample(self):
        # full round-trip property over a 10^5 random sample of the space
        rng = random.Random(20170322)
        for _ in range(100_000):
            value = rng.getrandbits(32)
            assert int(parse_ipv4(str(IPv4Address(value)))) == value

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_render_round_trip_property(self, value):
        assert int(parse_ipv4(str(IPv4Address(value)))) == value


class TestBogons:
    def test_private_range_is_bogon(self):
        assert is_bogon(parse_ipv4("10.1.2.3"), default_bogons())

    def test_public_unicast_is_not(self):
        assert not is_bogon(parse_ipv4("8.8.8.8"), default_bogons())

    def test_empty_list_identity(self):
        assert not is_bogon(parse_ipv4("192.168.0.1"), PrefixSet([]))

    def test_covered_count_merges_overlaps(self):
        ps = PrefixSet([IPv4Network("10.0.0.0/8"), IPv4Network("10.1.0.0/16")])
        assert ps.covered_count() == 2**24

    def test_default_file_matches_builtin(self, tmp_path):
        from traceatlas.datafiles import default_bogons_path

        from_file = load_bogon_list(default_bogons_path())
        builtin = default_bogons()
        rng = random.Random(5)
        for _ in range(10_000):
            v = rng.getrandbits(32)
            assert from_file.contains_int(v) == builtin.contains_int(v)

    @given(
        st.lists(st.integers(min_value=0, max_value=2**32 - 1), max_size=8),
        st.lists(st.integers(min_value=0, max_value=2**32 - 1), max_size=8),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_monotone_in_prefix_list(self, base, extra, probe):
        def nets(values):
            return [IPv4Network((v & 0xFFFFFF00, 24)) for v in values]

        ip = IPv4Address(probe)
        small = PrefixSet(nets(base))
        large = PrefixSet(nets(base) + nets(extra))
        if is_bogon(ip, small):
            assert is_bogon(ip, large)


class TestDomainTypes:
    def test_hop_star_cannot_carry_rtt(self):
        with pytest.raises(ValueError):
            HopObservation(ttl=1, responder=None, rtt_ms=3.0)

    def test_hop_annotation_values(self):
        hop = HopObservation(ttl=4, responder=parse_ipv4("198.51.100.7"),
                             rtt_ms=2.1, annotation=HopAnnotation.HOST_UNREACHABLE)
        assert hop.annotation.value == "!H"

    def test_trace_requires_increasing_ttls(self):
        hops = (HopObservation(ttl=2, responder=parse_ipv4("198.51.100.1"), rtt_ms=1.0),
                HopObservation(ttl=2, responder=parse_ipv4("198.51.100.2"), rtt_ms=2.0))
        with pytest.raises(ValueError):
            TraceRecord(probe_id="RE-1", source_country="RE",
                        destination=parse_ipv4("203.0.113.9"), hops=hops,
                        destination_reached=False, launched_at=0)

    def test_geo_record_needs_coordinates_when_located(self):
        with pytest.raises(ValueError):
            GeoRecord(ip=parse_ipv4("192.0.2.1"), country="FR", continent="EU",
                      latitude=None, longitude=None)

    def test_geo_record_bounds(self):
        with pytest.raises(ValueError):
            GeoRecord(ip=parse_ipv4("192.0.2.1"), country="FR", continent="EU",
                      latitude=91.0, longitude=0.0)

    def test_country_link_rejects_self_loop(self):
        with pytest.raises(ValueError):
            CountryLink(from_country="FR", to_country="FR")

    def test_exit_table_requires_ascending_shares(self):
        with pytest.raises(ValueError):
            ExitPointTable(source_country="MG", entries=(
                ExitEntry(country="GB", share=0.8, count=80),
                ExitEntry(country="FR", share=0.2, count=20),
            ))

    def test_exit_table_accepts_duplicate_codes_in_raw_input(self):
        # codes may repeat in raw table input; the analyzer merges them
        table = ExitPointTable(source_country="MG", entries=(
            ExitEntry(country="US", share=0.2, count=20),
            ExitEntry(country="US", share=0.8, count=80),
        ))
        assert len(table.entries) == 2

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(ValueError):
            ContinentDistribution({"AF": 0.5, "EU": 0.6})
        dist = ContinentDistribution({"AF": 0.0259, "AS": 0.2334, "EU": 0.207,
                                      "NA": 0.4755, "OC": 0.0155, "SA": 0.0427})
        assert abs(sum(w for _, w in dist.items()) - 1.0) <= 1e-9
