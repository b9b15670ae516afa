"""Command-line pipeline: sample-targets, plan, parse, sanitize, geolocate,
analyze, map, synth, and `run` (the full corpus-to-report pipeline).

Every stage reads and writes plain files so stages can run independently;
`run` wires them together and writes a manifest with per-stage counts.
Exit codes: 0 success, 1 configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from collections import Counter
from pathlib import Path

from . import __version__
from . import analyze as az
from . import datafiles
from . import sampler
from . import sanitize as sz
from . import schedule
from . import synth
from . import worldmap
from .geo import CacheStore, GeoDatabase, Geolocator, load_probe_delays
from .model import CountryLink, default_bogons, load_bogon_list, parse_ipv4
from .parsing import (
    parse_corpus,
    read_corpus_dir,
    read_records_jsonl,
    write_records_jsonl,
)


class ConfigError(Exception):
    """Bad configuration or missing input; nothing has been written."""


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# geotrace serialization (stage boundary between geolocate and analyze)


def _geotrace_to_dict(trace: az.GeoTrace) -> dict:
    dest = trace.destination_geo
    return {
        "source_country": trace.source_country,
        "end_to_end_rtt_ms": trace.end_to_end_rtt_ms,
        "hop_count": trace.hop_count,
        "destination_geo": {
            "ip": str(dest.ip),
            "country": dest.country,
            "continent": dest.continent,
            "lat": dest.latitude,
            "lon": dest.longitude,
            "provenance": dest.provenance.value,
        },
        "hops": [
            {"responder": None if h.responder is None else str(h.responder),
             "country": h.country, "lat": h.latitude, "lon": h.longitude,
             "rtt_ms": h.rtt_ms}
            for h in trace.hops
        ],
    }


def _geotrace_from_dict(data: dict) -> az.GeoTrace:
    from .model import GeoRecord, Provenance

    dest = data["destination_geo"]
    return az.GeoTrace(
        source_country=data["source_country"],
        hops=tuple(
            az.GeoHop(
                responder=None if h["responder"] is None else parse_ipv4(h["responder"]),
                country=h["country"], latitude=h["lat"], longitude=h["lon"],
                rtt_ms=h["rtt_ms"])
            for h in data["hops"]
        ),
        destination_geo=GeoRecord(
            ip=parse_ipv4(dest["ip"]), country=dest["country"],
            continent=dest["continent"], latitude=dest["lat"],
            longitude=dest["lon"], provenance=Provenance(dest["provenance"])),
        end_to_end_rtt_ms=data["end_to_end_rtt_ms"],
        hop_count=data["hop_count"],
    )


def write_geotraces_jsonl(traces, path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(_geotrace_to_dict(trace), sort_keys=True, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def read_geotraces_jsonl(path) -> list:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                traces.append(_geotrace_from_dict(json.loads(line)))
    return traces


def _build_geolocator(geo_db_path, cache_path=None, delays_path=None) -> Geolocator:
    db = GeoDatabase.load_csv(geo_db_path)
    cache = CacheStore(cache_path) if cache_path else None
    delays = load_probe_delays(delays_path) if delays_path else None
    return Geolocator(db, cache=cache, probe_delays=delays)


# ---------------------------------------------------------------------------
# full pipeline


def run_pipeline(config_path, workers_override: int | None = None) -> tuple[int, dict]:
    """Execute the whole pipeline per a TOML config. Returns (exit code,
    manifest dict); a partial manifest is still written on stage failure."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config not found: {config_path}")
    raw_bytes = config_path.read_bytes()
    config = _load_toml(config_path)

    inputs = config.get("inputs", {})
    pipeline = config.get("pipeline", {})
    outputs = config.get("outputs", {})

    # pre-flight: resolve and verify every input before touching the fs
    def resolve(key: str) -> Path | None:
        value = inputs.get(key)
        return (config_path.parent / value).resolve() if value else None

    corpus_dir = resolve("corpus")
    if corpus_dir is None:
        raise ConfigError("inputs.corpus is required")
    if not corpus_dir.is_dir():
        raise ConfigError(f"corpus directory not found: {corpus_dir}")
    geo_db_path = resolve("geo_db")
    if geo_db_path is None:
        raise ConfigError("inputs.geo_db is required")
    _require_file(geo_db_path, "geo database")
    centroids_path = resolve("centroids")
    if centroids_path is not None:
        _require_file(centroids_path, "centroid table")
    coords_path = resolve("map_coords")
    if coords_path is not None:
        _require_file(coords_path, "map coordinate table")
    delays_path = resolve("probe_delays")
    if delays_path is not None:
        _require_file(delays_path, "probe delay table")
    cache_path = resolve("geo_cache")

    mode_name = str(pipeline.get("mode", "geographic"))
    try:
        mode = sz.Mode(mode_name)
    except ValueError:
        raise ConfigError(f"unknown pipeline.mode {mode_name!r}") from None
    workers = int(workers_override or pipeline.get("workers", 1))
    distance_bin = float(pipeline.get("distance_bin_km", az.DEFAULT_DISTANCE_BIN_KM))
    hop_bin = float(pipeline.get("hop_bin", az.DEFAULT_HOP_BIN))
    min_share = float(pipeline.get("min_share", 0.01))

    out_dir = Path(outputs.get("out_dir", "out"))
    if not out_dir.is_absolute():
        out_dir = (config_path.parent / out_dir).resolve()

    manifest: dict = {
        "tool": "traceatlas",
        "version": __version__,
        "config": str(config_path),
        "config_sha256": hashlib.sha256(raw_bytes).hexdigest(),
        "inputs": {
            "corpus": str(corpus_dir),
            "geo_db": str(geo_db_path),
            "centroids": str(centroids_path) if centroids_path else "<builtin>",
            "map_coords": str(coords_path) if coords_path else "<builtin>",
        },
        "mode": mode.value,
        "workers": workers,
        "started_at": time.time(),
        "counts": {},
        "stages": [],
    }

    out_dir.mkdir(parents=True, exist_ok=True)

    def finish(code: int) -> tuple[int, dict]:
        manifest["finished_at"] = time.time()
        manifest["exit_code"] = code
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return code, manifest

    counts = manifest["counts"]
    stage = "parse"
    try:
        manifest["stages"].append(stage)
        outcomes = list(parse_corpus(read_corpus_dir(corpus_dir), workers=workers))
        records = [o.record for o in outcomes if o.record is not None]
        parse_errors = [o.error for o in outcomes if o.error is not None]
        counts["documents"] = len(outcomes)
        counts["parsed_records"] = len(records)
        counts["parse_errors"] = len(parse_errors)

        stage = "sanitize"
        manifest["stages"].append(stage)
        geolocator = _build_geolocator(geo_db_path, cache_path, delays_path)
        accepted, report = sz.sanitize_corpus(
            records, mode=mode, geo=geolocator if mode is sz.Mode.GEOGRAPHIC else None)
        # documents the parser could not read count as corrupt rejections
        full_report = Counter(report)
        if parse_errors:
            full_report[sz.RejectionReason.CORRUPT] += len(parse_errors)
        sz.write_report_csv(full_report, out_dir / "sanitize_report.csv")
        counts["rejected"] = {r.value: c for r, c in sorted(full_report.items(),
                                                            key=lambda kv: kv[0].value)}
        counts["accepted"] = len(accepted)

        stage = "geolocate"
        manifest["stages"].append(stage)
        geotraces = [az.geolocate_trace(r, geolocator) for r in accepted]
        counts["geolocated"] = len(geotraces)
        if geolocator.cache is not None:
            counts["geo_cache_hits"] = geolocator.cache.hits
            counts["geo_cache_misses"] = geolocator.cache.misses

        stage = "analyze"
        manifest["stages"].append(stage)
        centroids = (datafiles.load_centroids(centroids_path) if centroids_path
                     else datafiles.country_centroids())
        continents = datafiles.country_continents()
        sources = sorted(pipeline.get("sources") or {t.source_country for t in geotraces})
        counts["sources"] = sources

        histogram = az.distance_histogram(geotraces, distance_bin, centroids, workers=workers)
        az.write_binned_csv(histogram, out_dir / "fig2_distance_histogram.csv")
        az.write_gnuplot_data(histogram, out_dir / "fig2_distance_histogram.dat")
        relations = (
            ("fig3_hops_vs_distance", "distance_km", "hop_count", distance_bin),
            ("fig4_rtt_vs_hops", "hop_count", "rtt_ms", hop_bin),
            ("fig5_rtt_vs_distance", "distance_km", "rtt_ms", distance_bin),
        )
        for name, x, y, width in relations:
            per_source = az.relate(geotraces, x=x, y=y, bin_width=width,
                                   centroids=centroids, workers=workers)
            for source, series in per_source.items():
                az.write_binned_csv(series, out_dir / f"{name}_{source}.csv")
                az.write_gnuplot_data(series, out_dir / f"{name}_{source}.dat")

        all_links = []
        for trace in geotraces:
            all_links.extend(az.extract_country_links(trace))
        links = az.aggregate_links(all_links)
        az.write_links_csv(links, out_dir / "links.csv")

        exit_tables = {}
        for source in sources:
            table = az.exit_point_table(geotraces, source)
            exit_tables[source] = table
            az.write_exit_table_json(table, out_dir / f"exit_table_{source}.json")
            az.write_share_csv(table, out_dir / f"exit_shares_{source}.csv")
            if table.entries:
                rollup = az.continent_rollup(table, continents)
                az.write_exit_table_json(rollup, out_dir / f"exit_table_{source}_continent.json")
                az.write_share_csv(az.threshold_filter(table, min_share),
                                   out_dir / f"exit_shares_{source}_top.csv")
        asymmetry = az.asymmetry_report(links, watchlist=pipeline.get("watchlist", az.IOA_COUNTRIES))
        with open(out_dir / "asymmetry.json", "w", encoding="utf-8") as fh:
            json.dump([{"present": f"{a}->{b}", "missing": f"{b}->{a}"} for a, b in asymmetry],
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        counts["country_links"] = len(links)
        counts["exit_tables"] = {s: len(t.entries) for s, t in exit_tables.items()}

        stage = "map"
        manifest["stages"].append(stage)
        coords = (worldmap.load_map_coords(coords_path) if coords_path
                  else datafiles.default_map_coords())
        svg = worldmap.render_links(links, coords)
        (out_dir / "map_all_links.svg").write_text(svg, encoding="utf-8")
        for focus in pipeline.get("focus", sources):
            svg = worldmap.render_country_view(links, coords, focus)
            (out_dir / f"map_{focus}.svg").write_text(svg, encoding="utf-8")
    except Exception as exc:  # stage failure: partial manifest, exit 2
        manifest["failed_stage"] = stage
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        print(f"stage {stage} failed: {exc}", file=sys.stderr)
        return finish(2)

    return finish(0)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    if args.world:
        world = synth.load_world_toml(_require_file(Path(args.world), "world spec"))
        if args.seed is not None:  # flag overrides the file's seed
            world = synth.SyntheticWorld(
                countries=world.countries, sources=world.sources, edges=world.edges,
                rejections=world.rejections, jitter_ms=world.jitter_ms, seed=args.seed)
    else:
        world = synth.island_world(seed=args.seed or 0)
    paths = synth.write_corpus(world, args.n, args.out_dir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_parse(args) -> int:
    outcomes = list(parse_corpus(read_corpus_dir(args.corpus), workers=args.workers))
    records = sorted((o for o in outcomes if o.record is not None), key=lambda o: o.index)
    errors = sorted((o for o in outcomes if o.error is not None), key=lambda o: o.index)
    write_records_jsonl((o.record for o in records), args.out)
    if args.errors:
        with open(args.errors, "w", encoding="utf-8") as fh:
            fh.write("index,probe_id,line_no,reason\n")
            for o in errors:
                fh.write(f"{o.index},{o.error.probe_id},{o.error.line_no},{o.error.reason}\n")
    print(f"parsed {len(records)} records, {len(errors)} corrupt documents")
    return 0


def _cmd_sanitize(args) -> int:
    mode = sz.Mode(args.mode)
    geo = None
    if mode is sz.Mode.GEOGRAPHIC:
        if not args.geo_db:
            raise ConfigError("geographic mode requires --geo-db")
        geo = _build_geolocator(_require_file(Path(args.geo_db), "geo database"),
                                args.geo_cache, args.probe_delays)
    records = list(read_records_jsonl(_require_file(Path(args.records), "records file")))
    accepted, report = sz.sanitize_corpus(records, mode=mode, geo=geo)
    write_records_jsonl(accepted, args.out)
    sz.write_report_csv(report, args.report)
    print(f"accepted {len(accepted)} / {len(records)}")
    for reason in sz.RejectionReason:
        if report.get(reason):
            print(f"  {reason.value}: {report[reason]}")
    return 0


def _cmd_geolocate(args) -> int:
    geo = _build_geolocator(_require_file(Path(args.geo_db), "geo database"),
                            args.geo_cache, args.probe_delays)
    records = list(read_records_jsonl(_require_file(Path(args.records), "records file")))
    count = write_geotraces_jsonl((az.geolocate_trace(r, geo) for r in records), args.out)
    print(f"geolocated {count} traces"
          + (f" (cache hits {geo.cache.hits})" if geo.cache else ""))
    return 0


def _cmd_analyze(args) -> int:
    traces = read_geotraces_jsonl(_require_file(Path(args.geotraces), "geotraces file"))
    centroids = (datafiles.load_centroids(_require_file(Path(args.centroids), "centroids"))
                 if args.centroids else datafiles.country_centroids())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sources = sorted({t.source_country for t in traces})
    figure = args.figure

    if figure in ("2", "all"):
        series = az.distance_histogram(traces, args.bin_width_km, centroids, workers=args.workers)
        az.write_binned_csv(series, out_dir / "fig2_distance_histogram.csv")
    for fig, x, y, width in (("3", "distance_km", "hop_count", args.bin_width_km),
                             ("4", "hop_count", "rtt_ms", args.hop_bin),
                             ("5", "distance_km", "rtt_ms", args.bin_width_km)):
        if figure in (fig, "all"):
            names = {"3": "fig3_hops_vs_distance", "4": "fig4_rtt_vs_hops",
                     "5": "fig5_rtt_vs_distance"}
            for source, series in az.relate(traces, x=x, y=y, bin_width=width,
                                            centroids=centroids, workers=args.workers).items():
                az.write_binned_csv(series, out_dir / f"{names[fig]}_{source}.csv")
    if figure in ("exit", "all"):
        continents = datafiles.country_continents()
        for source in sources:
            table = az.exit_point_table(traces, source)
            az.write_exit_table_json(table, out_dir / f"exit_table_{source}.json")
            az.write_share_csv(table, out_dir / f"exit_shares_{source}.csv")
            if table.entries:
                az.write_exit_table_json(az.continent_rollup(table, continents),
                                         out_dir / f"exit_table_{source}_continent.json")
                az.write_share_csv(az.threshold_filter(table, args.min_share),
                                   out_dir / f"exit_shares_{source}_top.csv")
    if figure in ("links", "asymmetry", "all"):
        all_links = []
        for trace in traces:
            all_links.extend(az.extract_country_links(trace))
        links = az.aggregate_links(all_links)
        if figure in ("links", "all"):
            az.write_links_csv(links, out_dir / "links.csv")
        if figure in ("asymmetry", "all"):
            pairs = az.asymmetry_report(links)
            with open(out_dir / "asymmetry.json", "w", encoding="utf-8") as fh:
                json.dump([{"present": f"{a}->{b}", "missing": f"{b}->{a}"} for a, b in pairs],
                          fh, indent=2, sort_keys=True)
                fh.write("\n")
    print(f"analyzed {len(traces)} traces into {out_dir}")
    return 0


def _cmd_map(args) -> int:
    coords = (worldmap.load_map_coords(_require_file(Path(args.coords), "coordinate table"))
              if args.coords else datafiles.default_map_coords())
    links = []
    with open(_require_file(Path(args.links), "links file"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("from"):
                continue
            src, dst, count = line.split(",")
            links.append(CountryLink(from_country=src, to_country=dst, count=int(count)))
    if args.focus:
        svg = worldmap.render_country_view(links, coords, args.focus)
    else:
        svg = worldmap.render_links(links, coords)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out} ({worldmap.segment_count(svg)} segments)")
    return 0


def _cmd_sample_targets(args) -> int:
    bogons = (load_bogon_list(_require_file(Path(args.bogons), "bogon list"))
              if args.bogons else default_bogons())
    candidates = sampler.generate_pool(args.pool_size, args.seed, bogons)
    if args.responsive:
        responsive = sampler.load_ip_list(_require_file(Path(args.responsive), "responsive list"))
        responsive &= candidates
    else:
        responsive = set(candidates)
    geo = _build_geolocator(_require_file(Path(args.geo_db), "geo database"), args.geo_cache)
    continent_of = {ip: geo.lookup(ip).continent for ip in responsive}
    pool = sampler.TargetPool(candidates=frozenset(candidates),
                              responsive=frozenset(responsive), geo=continent_of)
    target = sampler.load_distribution(_require_file(Path(args.distribution), "distribution"))
    sample = sampler.stratified_sample(pool, target, args.n, args.seed)
    sampler.write_ip_list(sample.addresses, args.out)
    meta = {"quotas": sample.quotas, "realized": sample.realized,
            "shortfall": sample.shortfall, "unfilled": sample.unfilled}
    with open(args.meta, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sampled {len(sample)} targets -> {args.out}")
    if sample.shortfall:
        print(f"  shortfall: {sample.shortfall} (unfilled {sample.unfilled})")
    return 0


def _load_durations_csv(path, targets) -> dict:
    durations = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("target"):
                continue
            target, seconds = line.split(",")
            durations[parse_ipv4(target.strip())] = float(seconds)
    missing = [t for t in targets if t not in durations]
    if missing:
        raise ConfigError(f"durations file lacks {len(missing)} targets, e.g. {missing[0]}")
    return durations


def _cmd_plan(args) -> int:
    file_config = _load_toml(_require_file(Path(args.config), "campaign config")) \
        if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_config.get(key, default)

    targets_path = pick(args.targets, "targets", None)
    if targets_path is None:
        raise ConfigError("a target list is required (--targets or `targets` in the config)")
    targets = sorted(sampler.load_ip_list(_require_file(Path(targets_path), "target list")))

    seed = int(pick(args.seed, "shuffle_seed", 0))
    probe = pick(args.probe, "probe", None)
    if probe is not None:
        seed = schedule.seed_for_probe(probe, seed)
    mean_duration = float(pick(args.mean_duration, "mean_duration_s",
                               schedule.DEFAULT_MEAN_DURATION_S))
    config = schedule.CampaignConfig(
        targets=tuple(targets),
        launch_interval_s=float(pick(args.interval, "launch_interval_s",
                                     schedule.DEFAULT_LAUNCH_INTERVAL_S)),
        max_concurrent=int(pick(args.max_concurrent, "max_concurrent",
                                schedule.DEFAULT_MAX_CONCURRENT)),
        mean_duration_s=mean_duration,
        shuffle_seed=seed,
    )
    if args.durations:
        durations = _load_durations_csv(_require_file(Path(args.durations), "durations"),
                                        config.targets)
    else:
        durations = schedule.constant_durations(config.targets, mean_duration)
    plan = schedule.plan_campaign(config, durations)
    schedule.write_plan_csv(plan, args.out)
    violations = schedule.validate_plan(plan, config)
    rate = schedule.estimated_peak_bitrate_kbps(config)
    print(f"planned {len(plan.events)} launches: makespan {plan.makespan_s():.2f}s, "
          f"{plan.delayed_count()} delayed, {len(violations)} violations, "
          f"peak rate {rate:.2f} Kb/s")
    return 0


def _cmd_run(args) -> int:
    code, manifest = run_pipeline(args.config, workers_override=args.workers)
    counts = manifest.get("counts", {})
    print(f"pipeline exit {code}: {counts.get('documents', 0)} documents, "
          f"{counts.get('accepted', 0)} accepted")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad usage is a config error -> exit 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="traceatlas", description=__doc__)
    parser.add_argument("--version", action="version", version=f"traceatlas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus bundle")
    p.add_argument("--world", help="world spec TOML (default: built-in island scenario)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("parse", help="parse a corpus directory to records JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--errors", help="CSV of corrupt documents")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("sanitize", help="apply the rejection rules to records")
    p.add_argument("--records", required=True)
    p.add_argument("--mode", choices=[m.value for m in sz.Mode], default="topology")
    p.add_argument("--geo-db")
    p.add_argument("--geo-cache")
    p.add_argument("--probe-delays")
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=_cmd_sanitize)

    p = sub.add_parser("geolocate", help="resolve records into geotraces")
    p.add_argument("--records", required=True)
    p.add_argument("--geo-db", required=True)
    p.add_argument("--geo-cache")
    p.add_argument("--probe-delays")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_geolocate)

    p = sub.add_parser("analyze", help="compute figures / exit tables / links")
    p.add_argument("--geotraces", required=True)
    p.add_argument("--figure", choices=["2", "3", "4", "5", "exit", "links", "asymmetry", "all"],
                   default="all")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--centroids")
    p.add_argument("--bin-width-km", type=float, default=az.DEFAULT_DISTANCE_BIN_KM)
    p.add_argument("--hop-bin", type=float, default=az.DEFAULT_HOP_BIN)
    p.add_argument("--min-share", type=float, default=0.01)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("map", help="render country links onto the world map")
    p.add_argument("--links", required=True, help="links CSV (from,to,count)")
    p.add_argument("--coords", help="coordinate table CSV (default: built-in)")
    p.add_argument("--focus", help="only links touching this country")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_map)

    p = sub.add_parser("sample-targets", help="build a stratified target list")
    p.add_argument("--pool-size", type=int, default=1_000_000)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bogons")
    p.add_argument("--responsive", help="responsive addresses, one per line")
    p.add_argument("--geo-db", required=True)
    p.add_argument("--geo-cache")
    p.add_argument("--distribution", required=True, help="continent,weight CSV or TOML")
    p.add_argument("--out", required=True)
    p.add_argument("--meta", required=True, help="quota/shortfall JSON")
    p.set_defaults(fn=_cmd_sample_targets)

    p = sub.add_parser("plan", help="simulate a per-probe campaign timeline")
    p.add_argument("--config", help="campaign config TOML; flags override its values")
    p.add_argument("--targets")
    p.add_argument("--interval", type=float, default=None)
    p.add_argument("--max-concurrent", type=int, default=None)
    p.add_argument("--mean-duration", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--probe", help="derive the shuffle seed from this probe id")
    p.add_argument("--durations", help="per-target durations CSV (target,seconds)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("run", help="full pipeline from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort stage failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
