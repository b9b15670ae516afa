"""Measurement campaign planning under rate and concurrency constraints.

Planning is a pure simulation: launches sit on a fixed grid (one every
`launch_interval_s`), a launch is delayed when `max_concurrent`
measurements are already running, and later launches keep their original
grid slots (the grid is never re-anchored). Nothing here emits packets.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import random
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Iterable, Mapping

DEFAULT_LAUNCH_INTERVAL_S = 8.64
DEFAULT_MAX_CONCURRENT = 4
DEFAULT_MEAN_DURATION_S = 28.0

# Default per-measurement packet budget for the symbolic bit-rate check:
# 30 hops x 3 probes of 44-byte ICMP packets.
DEFAULT_PACKETS_PER_MEASUREMENT = 90
DEFAULT_PACKET_SIZE_BYTES = 44

_SPACING_EPS = 1e-9


@dataclass(frozen=True)
class CampaignConfig:
    targets: tuple[IPv4Address, ...]
    launch_interval_s: float = DEFAULT_LAUNCH_INTERVAL_S
    max_concurrent: int = DEFAULT_MAX_CONCURRENT
    mean_duration_s: float = DEFAULT_MEAN_DURATION_S
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.launch_interval_s <= 0:
            raise ValueError(f"launch interval must be positive, got {self.launch_interval_s}")
        if self.max_concurrent < 1:
            raise ValueError(f"max_concurrent must be >= 1, got {self.max_concurrent}")


@dataclass(frozen=True)
class PlannedEvent:
    start_s: float
    end_s: float
    target: IPv4Address
    delay_s: float = 0.0  # how far past its grid slot the launch slipped


@dataclass(frozen=True)
class Violation:
    kind: str  # "concurrency" | "spacing"
    start_s: float
    end_s: float
    detail: str


@dataclass(frozen=True)
class CampaignPlan:
    events: tuple[PlannedEvent, ...]
    violations: tuple[Violation, ...] = ()

    def makespan_s(self) -> float:
        return max((e.end_s for e in self.events), default=0.0)

    def delayed_count(self) -> int:
        return sum(1 for e in self.events if e.delay_s > 0)


def seed_for_probe(probe_id: str, base_seed: int = 0) -> int:
    """Stable per-probe shuffle seed, so every probe gets its own order."""
    digest = hashlib.blake2b(f"{base_seed}:{probe_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def plan_campaign(config: CampaignConfig,
                  durations: Mapping[IPv4Address, float]) -> CampaignPlan:
    """Simulate the per-probe launch timeline.

    Launch k nominally starts at k*interval; if `max_concurrent`
    measurements are still running it waits for the earliest end (a slot
    freed at t is reusable at t). Target order is shuffled by the config
    seed.
    """
    missing = [t for t in config.targets if t not in durations]
    if missing:
        raise ValueError(f"durations missing for {len(missing)} targets, e.g. {missing[0]}")

    order = list(config.targets)
    random.Random(config.shuffle_seed).shuffle(order)

    events = []
    running: list[float] = []  # min-heap of end times
    interval = config.launch_interval_s
    for k, target in enumerate(order):
        nominal = k * interval
        t = nominal
        while running and running[0] <= t:
            heapq.heappop(running)
        while len(running) >= config.max_concurrent:
            t = heapq.heappop(running)
            while running and running[0] <= t:
                heapq.heappop(running)
        end = t + durations[target]
        heapq.heappush(running, end)
        events.append(PlannedEvent(start_s=t, end_s=end, target=target,
                                   delay_s=t - nominal))
    return CampaignPlan(events=tuple(events))


def validate_plan(plan: CampaignPlan, config: CampaignConfig) -> list[Violation]:
    """Independent constraint check: concurrency windows and launch spacing.

    Spacing is only demanded of launches without a delay note; a delayed
    launch legitimately lands off-grid.
    """
    violations: list[Violation] = []

    # sweep line over [start, end) intervals; ends release before starts claim
    points: list[tuple[float, int]] = []
    for event in plan.events:
        points.append((event.start_s, 1))
        points.append((event.end_s, -1))
    points.sort(key=lambda p: (p[0], p[1]))
    count = 0
    window_start = None
    peak = 0
    for t, step in points:
        count += step
        if count > config.max_concurrent:
            if window_start is None:
                window_start = t
                peak = count
            else:
                peak = max(peak, count)
        elif window_start is not None:
            violations.append(Violation(kind="concurrency", start_s=window_start,
                                        end_s=t, detail=f"overlap {peak}"))
            window_start = None

    ordered = sorted(plan.events, key=lambda e: e.start_s)
    for prev, cur in zip(ordered, ordered[1:]):
        gap = cur.start_s - prev.start_s
        if gap < config.launch_interval_s - _SPACING_EPS and prev.delay_s == 0 and cur.delay_s == 0:
            violations.append(Violation(
                kind="spacing", start_s=prev.start_s, end_s=cur.start_s,
                detail=f"starts {gap:.6f}s apart, interval {config.launch_interval_s}s"))
    return violations


def estimated_peak_bitrate_kbps(
        config: CampaignConfig,
        packets_per_measurement: int = DEFAULT_PACKETS_PER_MEASUREMENT,
        packet_size_bytes: int = DEFAULT_PACKET_SIZE_BYTES) -> float:
    """Symbolic worst-case emission rate in Kb/s (1 Kb = 1000 bits).

    All `max_concurrent` slots busy, each measurement spreading its packet
    budget over the mean duration.
    """
    bits_per_measurement = packets_per_measurement * packet_size_bytes * 8
    per_measurement_rate = bits_per_measurement / config.mean_duration_s
    return config.max_concurrent * per_measurement_rate / 1000.0


def write_plan_csv(plan: CampaignPlan, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start_s", "end_s", "target"])
        for event in plan.events:
            writer.writerow([repr(event.start_s), repr(event.end_s), str(event.target)])


def constant_durations(targets: Iterable[IPv4Address], seconds: float) -> dict[IPv4Address, float]:
    return {t: seconds for t in targets}
