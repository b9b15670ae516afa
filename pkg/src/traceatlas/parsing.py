"""Parse ICMP traceroute text into TraceRecord values.

Canonical document grammar (this repo's fixture contract):

    traceroute to 203.0.113.9 (203.0.113.9), 30 hops max, 60 byte packets
     1  198.51.100.1  1.20 ms
     2  *
     3  198.51.100.7  2.10 ms !H

The header's parenthesized address wins when present; otherwise the first
token after "traceroute to" must be a dotted quad. A hop line is a TTL
followed by either a star or `ip rtt ms` with an optional `!N`/`!H` mark.
Lenient extras tolerated: a `name (ip)` responder, several `rtt ms`
readings per line (first one kept), and extra trailing stars.

Corpora are directories of per-probe files; documents within a file are
separated by blank lines and each starts with an envelope line
`# probe=<id> ts=<unix-seconds>`.
"""

from __future__ import annotations

import json
import multiprocessing
import re
from dataclasses import dataclass
from functools import partial
from ipaddress import IPv4Address
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .model import (
    HopAnnotation,
    HopObservation,
    MalformedAddressError,
    TraceRecord,
    parse_ipv4,
)

_HEADER_RE = re.compile(r"^traceroute to (\S+?)(?: \((\d+\.\d+\.\d+\.\d+)\))?(?:,.*)?$")
_ENVELOPE_RE = re.compile(r"^# probe=(\S+) ts=(\d+)$")
_ANNOTATIONS = {"!N": HopAnnotation.NETWORK_UNREACHABLE, "!H": HopAnnotation.HOST_UNREACHABLE}


@dataclass(frozen=True)
class RawTraceDocument:
    """One trace document as pulled from a corpus file (envelope stripped)."""

    probe_id: str
    launched_at: int
    body: str


@dataclass(frozen=True)
class CorruptTrace:
    """Why a document failed to parse; line numbers are 1-based in the body."""

    probe_id: str
    line_no: int
    reason: str


class CorruptTraceError(ValueError):
    def __init__(self, detail: CorruptTrace):
        super().__init__(f"{detail.probe_id}: line {detail.line_no}: {detail.reason}")
        self.detail = detail


@dataclass(frozen=True)
class ParseOutcome:
    """Per-document result: exactly one of record / error is set."""

    index: int
    record: TraceRecord | None = None
    error: CorruptTrace | None = None


class CorpusFormatError(ValueError):
    """Container-level framing problem (bad envelope, unreadable file)."""


def probe_country(probe_id: str, probe_countries: Mapping[str, str] | None = None) -> str | None:
    """Source country for a probe: explicit mapping first, then the
    `CC-<n>` naming convention."""
    if probe_countries and probe_id in probe_countries:
        return probe_countries[probe_id]
    if len(probe_id) >= 2 and probe_id[:2].isalpha() and probe_id[:2].isupper():
        if len(probe_id) == 2 or probe_id[2] in "-_.":
            return probe_id[:2]
    return None


def _corrupt(doc: RawTraceDocument, line_no: int, reason: str) -> CorruptTraceError:
    return CorruptTraceError(CorruptTrace(probe_id=doc.probe_id, line_no=line_no, reason=reason))


def _parse_hop(doc: RawTraceDocument, line_no: int, tokens: list[str]) -> HopObservation:
    try:
        ttl = int(tokens[0])
    except ValueError:
        raise _corrupt(doc, line_no, f"bad TTL field {tokens[0]!r}") from None
    if ttl < 1:
        raise _corrupt(doc, line_no, f"bad TTL {ttl}")

    rest = tokens[1:]
    if not rest:
        raise _corrupt(doc, line_no, "hop line without observation")
    if all(t == "*" for t in rest):
        return HopObservation(ttl=ttl)

    # responder: either `ip` or `name (ip)`
    pos = 0
    candidate = rest[pos]
    if len(rest) > 1 and rest[1].startswith("(") and rest[1].endswith(")"):
        candidate = rest[1][1:-1]
        pos = 2
    else:
        pos = 1
    try:
        responder = parse_ipv4(candidate)
    except MalformedAddressError:
        raise _corrupt(doc, line_no, f"bad responder address {candidate!r}") from None

    rtt: float | None = None
    annotation = HopAnnotation.NONE
    while pos < len(rest):
        token = rest[pos]
        if token == "*":
            pos += 1
            continue
        if token in _ANNOTATIONS:
            if annotation is HopAnnotation.NONE:
                annotation = _ANNOTATIONS[token]
            pos += 1
            continue
        if pos + 1 < len(rest) and rest[pos + 1] == "ms":
            try:
                reading = float(token)
            except ValueError:
                raise _corrupt(doc, line_no, f"bad RTT reading {token!r}") from None
            if reading < 0:
                raise _corrupt(doc, line_no, f"negative RTT {reading}")
            if rtt is None:  # lenient mode: keep the first reading
                rtt = reading
            pos += 2
            continue
        raise _corrupt(doc, line_no, f"unexpected token {token!r}")
    if rtt is None:
        raise _corrupt(doc, line_no, "responder without RTT reading")
    return HopObservation(ttl=ttl, responder=responder, rtt_ms=rtt, annotation=annotation)


def parse_trace(doc: RawTraceDocument,
                probe_countries: Mapping[str, str] | None = None) -> TraceRecord:
    """Parse one document; raises CorruptTraceError with the offending line."""
    lines = doc.body.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise _corrupt(doc, 1, "empty body")

    source = probe_country(doc.probe_id, probe_countries)
    if source is None:
        raise _corrupt(doc, 0, f"no source country for probe {doc.probe_id!r}")

    header = _HEADER_RE.match(lines[0].strip())
    if header is None:
        raise _corrupt(doc, 1, f"unparseable header {lines[0]!r}")
    dest_text = header.group(2) or header.group(1)
    try:
        destination = parse_ipv4(dest_text)
    except MalformedAddressError:
        raise _corrupt(doc, 1, f"bad destination {dest_text!r}") from None

    hops: list[HopObservation] = []
    last_ttl = 0
    for line_no, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        hop = _parse_hop(doc, line_no, tokens)
        if hop.ttl <= last_ttl:
            raise _corrupt(doc, line_no, f"non-monotone TTL {hop.ttl} after {last_ttl}")
        last_ttl = hop.ttl
        hops.append(hop)

    reached = False
    for hop in reversed(hops):
        if hop.responder is not None:
            reached = hop.responder == destination
            break
    return TraceRecord(
        probe_id=doc.probe_id,
        source_country=source,
        destination=destination,
        hops=tuple(hops),
        destination_reached=reached,
        launched_at=doc.launched_at,
    )


def _parse_indexed(item: tuple[int, RawTraceDocument],
                   probe_countries: Mapping[str, str] | None = None) -> ParseOutcome:
    index, doc = item
    try:
        return ParseOutcome(index=index, record=parse_trace(doc, probe_countries))
    except CorruptTraceError as exc:
        return ParseOutcome(index=index, error=exc.detail)


def parse_corpus(docs: Iterable[RawTraceDocument], workers: int = 1,
                 probe_countries: Mapping[str, str] | None = None) -> Iterator[ParseOutcome]:
    """Parse a stream of documents, optionally fanning out to worker processes.

    Every input document yields exactly one outcome; corrupt documents are
    reported in-stream, never dropped. With workers > 1 the outcomes may
    arrive out of input order (each carries its input index).
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    indexed = enumerate(docs)
    if workers == 1:
        for item in indexed:
            yield _parse_indexed(item, probe_countries)
        return
    fn = partial(_parse_indexed, probe_countries=probe_countries)
    with multiprocessing.Pool(processes=workers) as pool:
        yield from pool.imap_unordered(fn, indexed, chunksize=256)


# ---------------------------------------------------------------------------
# corpus container


def iter_corpus_file(path: Path) -> Iterator[RawTraceDocument]:
    """Yield documents from one per-probe corpus file."""
    envelope: tuple[str, int] | None = None
    body_lines: list[str] = []

    def flush() -> Iterator[RawTraceDocument]:
        nonlocal envelope, body_lines
        if envelope is not None:
            yield RawTraceDocument(probe_id=envelope[0], launched_at=envelope[1],
                                   body="\n".join(body_lines))
        envelope = None
        body_lines = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                yield from flush()
                continue
            if line.startswith("#"):
                match = _ENVELOPE_RE.match(line)
                if match is None:
                    raise CorpusFormatError(f"{path}:{lineno}: bad envelope {line!r}")
                yield from flush()
                envelope = (match.group(1), int(match.group(2)))
                continue
            if envelope is None:
                raise CorpusFormatError(f"{path}:{lineno}: body line before envelope")
            body_lines.append(line)
    yield from flush()


def read_corpus_dir(path) -> Iterator[RawTraceDocument]:
    """Yield all documents under a corpus directory, in deterministic order."""
    root = Path(path)
    if not root.is_dir():
        raise CorpusFormatError(f"corpus directory not found: {root}")
    for file_path in sorted(p for p in root.iterdir() if p.is_file()):
        yield from iter_corpus_file(file_path)


def write_corpus_file(docs: Iterable[RawTraceDocument], path) -> int:
    """Write documents in the container format; returns how many were written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(f"# probe={doc.probe_id} ts={doc.launched_at}\n")
            if doc.body:
                fh.write(doc.body)
                if not doc.body.endswith("\n"):
                    fh.write("\n")
            fh.write("\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# record serialization (JSON lines), so pipeline stages can run independently


def record_to_dict(record: TraceRecord) -> dict:
    return {
        "probe_id": record.probe_id,
        "source_country": record.source_country,
        "destination": str(record.destination),
        "launched_at": record.launched_at,
        "destination_reached": record.destination_reached,
        "hops": [
            {
                "ttl": hop.ttl,
                "responder": None if hop.responder is None else str(hop.responder),
                "rtt_ms": hop.rtt_ms,
                "annotation": hop.annotation.value,
            }
            for hop in record.hops
        ],
    }


def record_from_dict(data: dict) -> TraceRecord:
    hops = tuple(
        HopObservation(
            ttl=h["ttl"],
            responder=None if h["responder"] is None else IPv4Address(h["responder"]),
            rtt_ms=h["rtt_ms"],
            annotation=HopAnnotation(h["annotation"]),
        )
        for h in data["hops"]
    )
    return TraceRecord(
        probe_id=data["probe_id"],
        source_country=data["source_country"],
        destination=IPv4Address(data["destination"]),
        hops=hops,
        destination_reached=data["destination_reached"],
        launched_at=data["launched_at"],
    )


def write_records_jsonl(records: Iterable[TraceRecord], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), sort_keys=True, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def read_records_jsonl(path) -> Iterator[TraceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield record_from_dict(json.loads(line))
