"""Command-line interface.

Subcommands:
  monitor   poll a live portal and monitor every new swarm
  simulate  run the full campaign against a generated world
  analyze   turn an event log into reports and figures
  query     print one publisher's profile

Exit codes: 0 success, 1 input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import geoip, pipeline, reports, store
from .feeds import FeedError, PortalProfile
from .sessions import DiscoveryModel
from .simnet import ConfigError, WorldConfig

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RUNTIME = 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are input errors
        raise InputError(message)


_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)(s|m|h|d)?$")
_DURATION_UNITS = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0, None: 1.0}


def parse_duration(text: str) -> float:
    match = _DURATION_RE.match(text.strip())
    if not match:
        raise InputError(f"bad duration {text!r} (use e.g. 18m, 4h, 600s)")
    return float(match.group(1)) * _DURATION_UNITS[match.group(2)]


def parse_model(text: str) -> DiscoveryModel:
    """--model N=165,W=50,P=0.99,dt=18m[,thr=4h]"""
    kwargs: dict = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise InputError(f"bad model component {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        try:
            if key == "N":
                kwargs["population"] = int(value)
            elif key == "W":
                kwargs["sample_size"] = int(value)
            elif key == "P":
                kwargs["target_probability"] = float(value)
            elif key == "dt":
                kwargs["inter_query_s"] = parse_duration(value)
            elif key == "thr":
                kwargs["threshold_override_s"] = parse_duration(value)
            else:
                raise InputError(f"unknown model key {key!r}")
        except ValueError as exc:
            raise InputError(f"bad model value {part!r}: {exc}") from exc
    try:
        return DiscoveryModel(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="swarmwatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_monitor = sub.add_parser("monitor", help="poll a live portal and monitor new swarms")
    p_monitor.add_argument("--portal", required=True, help="portal profile JSON")
    p_monitor.add_argument("--out", required=True, help="event log path (JSON lines)")
    p_monitor.add_argument("--run-for", default="0s", help="stop after this long (0 = forever)")
    p_monitor.add_argument("--vantages", type=int, default=2)
    p_monitor.add_argument("--min-interval", default="10m", help="per-swarm tracker query interval")
    p_monitor.add_argument("--state", help="ingest state file for restart-safe dedup")
    p_monitor.add_argument(
        "--id-retry-window", default="0s",
        help="keep retrying publisher identification this long while the tracker reports no seeder",
    )

    p_sim = sub.add_parser("simulate", help="run the campaign against a simulated world")
    p_sim.add_argument("--config", required=True, help="world config JSON")
    p_sim.add_argument("--out", required=True, help="event log path")
    p_sim.add_argument("--truth", help="ground truth export path (JSON lines)")

    p_analyze = sub.add_parser("analyze", help="build reports from an event log")
    p_analyze.add_argument("--log", required=True)
    p_analyze.add_argument("--report", required=True, help="report output directory")
    p_analyze.add_argument("--geoip", help="GeoIP CSV (cidr,isp_name,isp_type,country,city)")
    p_analyze.add_argument("--model", default="", help="N=165,W=50,P=0.99,dt=18m[,thr=4h]")
    p_analyze.add_argument("--classes", help="JSON file mapping username to business class")
    p_analyze.add_argument("--exclude-ip", action="append", default=[], help="vantage IPs to drop")
    p_analyze.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p_query = sub.add_parser("query", help="print one publisher's profile as JSON")
    p_query.add_argument("--log", required=True)
    p_query.add_argument("--username", required=True)
    p_query.add_argument("--geoip")
    return parser


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {path}")
    return p


def cmd_monitor(args) -> int:
    profile = PortalProfile.load(_require_file(args.portal, "portal profile"))
    picked = pipeline.run_live_monitor(
        profile,
        args.out,
        run_for_s=parse_duration(args.run_for),
        vantage_count=args.vantages,
        min_interval_s=parse_duration(args.min_interval),
        state_path=args.state,
        id_retry_window_s=parse_duration(args.id_retry_window),
    )
    print(f"monitored {picked} new torrents -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = WorldConfig.load(_require_file(args.config, "world config"))
    result = pipeline.run_simulation(config, args.out, args.truth)
    print(
        f"simulated {result.torrents_seen} torrents, "
        f"{result.snapshots} snapshots -> {result.log_path}"
        + (f", truth -> {result.truth_path}" if result.truth_path else "")
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    log_path = _require_file(args.log, "event log")
    geo = geoip.GeoIpTable.load(_require_file(args.geoip, "GeoIP CSV")) if args.geoip else geoip.EMPTY_TABLE
    model = parse_model(args.model) if args.model else DiscoveryModel()
    classes = None
    if args.classes:
        classes = json.loads(_require_file(args.classes, "classes file").read_text())
        if not isinstance(classes, dict):
            raise InputError("classes file must be a JSON object of username -> class")
    events = store.load_events(log_path)
    result = reports.analyze(
        events,
        args.report,
        geo=geo,
        model=model,
        classes=classes,
        vantage_ips=frozenset(args.exclude_ip),
        figures=not args.no_figures,
    )
    print(f"wrote {len(result.files)} report files to {result.report_dir}")
    for name in result.files:
        print(f"  {name}")
    return EXIT_OK


def cmd_query(args) -> int:
    log_path = _require_file(args.log, "event log")
    geo = geoip.GeoIpTable.load(_require_file(args.geoip, "GeoIP CSV")) if args.geoip else None
    events = store.load_events(log_path)
    try:
        profile = store.query_publisher(events, args.username, geo=geo)
    except store.NotFound as exc:
        raise InputError(str(exc)) from exc
    print(json.dumps(profile.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        handler = {
            "monitor": cmd_monitor,
            "simulate": cmd_simulate,
            "analyze": cmd_analyze,
            "query": cmd_query,
        }[args.command]
        return handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FeedError, ConfigError, store.StoreError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logging.getLogger(__name__).exception("runtime failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
