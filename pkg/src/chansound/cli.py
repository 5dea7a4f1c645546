"""Command line entry point: ``chansound {synth,process,stats,all}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .campaign import (
    CampaignConfig,
    ConfigError,
    DataError,
    FitFailure,
    cmd_all,
    cmd_process,
    cmd_stats,
    cmd_synth,
)
from .fileio import CorruptFile

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4

log = logging.getLogger("chansound")


def _parse_set(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_config(args) -> CampaignConfig:
    cfg = CampaignConfig.load(args.config) if args.config else CampaignConfig()
    for item in args.set or []:
        cfg = cfg.with_override(*_parse_set(item))
    if args.seed is not None:
        cfg = cfg.with_override("seed", args.seed)
    if args.outdir is not None:
        cfg = cfg.with_override("outdir", args.outdir)
    return cfg


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="campaign JSON config")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, dotted key, JSON value")
    common.add_argument("--outdir", help="output root (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chansound", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="synthesize snapshot files")
    sub.add_parser("process", parents=[common], help="snapshots -> PDP records")
    sub.add_parser("stats", parents=[common], help="PDP records -> reports")
    sub.add_parser("all", parents=[common], help="synth, process and stats")
    show = sub.add_parser("config", parents=[common], help="print the effective config")
    show.set_defaults(show=True)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        if args.command == "config":
            print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
            return EXIT_OK
        if args.command == "synth":
            out = cmd_synth(cfg, args.jobs)
        elif args.command == "process":
            out = cmd_process(cfg, args.jobs)
        elif args.command == "stats":
            out = cmd_stats(cfg)
        else:
            out = cmd_all(cfg, args.jobs)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, CorruptFile, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except FitFailure as exc:
        log.error("fit failure: %s", exc)
        return EXIT_FIT
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
