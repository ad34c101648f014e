"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError
from .harness import ReplicationError, build_scenario, power_curve, run_experiment
from .results import POWER_CURVE_COLUMNS, write_csv, write_records, write_summary

SUBCOMMANDS = {
    "coverage": "coverage",
    "bias-test": "bias_test",
    "ensemble-test": "ensemble_test",
    "universal": "universal",
}

log = logging.getLogger("biasaudit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (TOML)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--reps", type=int, help="override the replication count")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biasaudit", description="Bias tests, split estimators and universal inference by simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run a {SUBCOMMANDS[name]} experiment")
        _common(p)
        if name == "bias-test":
            p.add_argument(
                "--power-curve",
                metavar="RATIOS",
                help="comma-separated Bias_k/(delta*se) ratios; writes power_curve.csv",
            )
    v = sub.add_parser("validate-config", help="check a config and print it normalized")
    _common(v)
    return parser


def _load(args, expected_kind: str | None) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.reps is not None:
        changes["reps"] = args.reps
    if changes:
        cfg = cfgmod.validate(dataclasses.replace(cfg, **changes))
    if expected_kind is not None and cfg.kind != expected_kind:
        raise ConfigError(f"config kind is {cfg.kind!r} but the subcommand runs {expected_kind!r}")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    kind = SUBCOMMANDS.get(args.command)
    try:
        cfg = _load(args, kind)
        build_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate-config":
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = run_experiment(cfg, threads=args.threads)
        if args.format in ("csv", "both"):
            write_records(out / f"{kind}.csv", kind, result.records)
        if args.format in ("json", "both"):
            write_summary(out / "summary.json", {"config": cfg.to_dict(), **result.summary.to_dict()})
        if getattr(args, "power_curve", None):
            ratios = [float(r) for r in args.power_curve.split(",") if r.strip()]
            rows = power_curve(cfg, ratios, threads=args.threads)
            write_csv(out / "power_curve.csv", POWER_CURVE_COLUMNS, rows)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ReplicationError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1

    for name, metric in result.summary.metrics.items():
        print(f"{name:>22s}  mean={metric.mean:.6g}  mc_se={metric.mc_se:.3g}  n={metric.count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
