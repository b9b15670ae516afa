"""Trace rejection rules and per-rule statistics.

Six rejection classes, checked in a fixed order (first match wins) so that
per-rule counts are deterministic:

  1. destination never reached
  2. trace ends with three star hops
  3. a hop carries a `!N` / `!H` unreachable mark
  4. corrupt record (no hops at all)
  5. loop (more than 200 hops)
  6. a responding hop's country is unknown -- geographic mode only

Rejection is a result, not an error; nothing is ever repaired or silently
dropped.
"""

from __future__ import annotations

import csv
import enum
from collections import Counter
from typing import Iterable

from .model import HopAnnotation, TraceRecord, UNKNOWN

MAX_HOPS = 200
TRAILING_STAR_RUN = 3


class Mode(enum.Enum):
    TOPOLOGY = "topology"
    GEOGRAPHIC = "geographic"


class RejectionReason(enum.Enum):
    NOT_REACHED = "not_reached"
    TRAILING_STARS = "trailing_stars"
    UNREACHABLE_MARK = "unreachable_mark"
    CORRUPT = "corrupt"
    LOOP = "loop"
    UNKNOWN_COUNTRY = "unknown_country"


def sanitize(trace: TraceRecord, geo=None,
             mode: Mode = Mode.TOPOLOGY) -> RejectionReason | None:
    """Apply the rejection rules to one trace; None means accepted.

    `geo` must expose `lookup(ip) -> GeoRecord` and is required in
    geographic mode.
    """
    if mode is Mode.GEOGRAPHIC and geo is None:
        raise ValueError("geographic mode requires a geo resolver")

    if not trace.destination_reached:
        return RejectionReason.NOT_REACHED
    hops = trace.hops
    if len(hops) >= TRAILING_STAR_RUN and all(h.is_star for h in hops[-TRAILING_STAR_RUN:]):
        return RejectionReason.TRAILING_STARS
    if any(h.annotation is not HopAnnotation.NONE for h in hops):
        return RejectionReason.UNREACHABLE_MARK
    if not hops:
        return RejectionReason.CORRUPT
    if len(hops) > MAX_HOPS:
        return RejectionReason.LOOP
    if mode is Mode.GEOGRAPHIC:
        # stars carry no country; they are governed by the bogon-skip rule
        # downstream, not rejected here
        for hop in hops:
            if hop.responder is not None and geo.lookup(hop.responder).country == UNKNOWN:
                return RejectionReason.UNKNOWN_COUNTRY
    return None


def sanitize_corpus(traces: Iterable[TraceRecord], mode: Mode = Mode.TOPOLOGY,
                    geo=None) -> tuple[list[TraceRecord], Counter]:
    """Split traces into (accepted, per-reason rejection counts).

    len(accepted) + sum(report.values()) always equals the input count.
    """
    accepted: list[TraceRecord] = []
    report: Counter = Counter()
    for trace in traces:
        reason = sanitize(trace, geo=geo, mode=mode)
        if reason is None:
            accepted.append(trace)
        else:
            report[reason] += 1
    return accepted, report


def write_report_csv(report: Counter, path) -> None:
    """Emit the rejection report as `reason,count` rows in rule order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["reason", "count"])
        for reason in RejectionReason:
            if report.get(reason):
                writer.writerow([reason.value, report[reason]])
