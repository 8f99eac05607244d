"""Command-line entry point.

Exit codes: 0 success, 1 a checked property failed, 2 usage error,
3 numerical blow-up.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

from . import __version__
from .config import SUBCOMMANDS, ConfigError, ExperimentSpec, dumps, from_dict, load
from .dynamics import BlowUpError
from .experiments import ResultBundle, run
from .montecarlo import WORKERS_ENV

log = logging.getLogger("stoburgers")

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3


def build_version() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                              text=True, cwd=Path(__file__).resolve().parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return __version__
    tag = desc.stdout.strip()
    return f"{__version__}+{tag}" if desc.returncode == 0 and tag else __version__


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_outputs(bundle: ResultBundle, spec: ExperimentSpec, out_dir: Path) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"version": build_version(), "spec_hash": spec.spec_hash(), "seed": spec.seed}
    written = []
    for name, table in bundle.tables.items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("".join(f"# {k}={v}\n" for k, v in meta.items()))
            w = csv.writer(fh)
            w.writerow(table.columns)
            for row in table.rows:
                w.writerow([_fmt(v) for v in row])
        written.append(path)
    summary = {"experiment": spec.name, "subcommand": spec.subcommand, **meta,
               "status": bundle.status, "checks": bundle.checks, "results": bundle.summary,
               "config": spec.echo()}
    path = out_dir / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    timing = out_dir / "timings.json"
    timing.write_text(json.dumps({**meta, **bundle.timings}, indent=2) + "\n")
    written.append(timing)
    (out_dir / "experiment.yaml").write_text(dumps(spec))
    return written


def make_parser():
    parser = argparse.ArgumentParser(prog="stoburgers", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="YAML experiment file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--workers", type=int,
                        help=f"worker processes (overrides ${WORKERS_ENV} and the config)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--quiet", action="store_true")
    return parser


def resolve_spec(args) -> ExperimentSpec:
    if args.config:
        spec = load(args.config)
        if spec.subcommand != args.subcommand:
            raise ConfigError("subcommand", f"config is for {spec.subcommand!r}, "
                                            f"not {args.subcommand!r}")
    else:
        spec = from_dict({"subcommand": args.subcommand})
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be nonnegative")
        spec.seed = args.seed
    env_workers = os.environ.get(WORKERS_ENV)
    if args.workers is not None:
        spec.workers = args.workers
    elif env_workers:
        try:
            spec.workers = int(env_workers)
        except ValueError:
            raise ConfigError(WORKERS_ENV, f"not an integer: {env_workers!r}") from None
    if spec.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if args.out:
        spec.out = args.out
    return spec


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    try:
        spec = resolve_spec(args)
        bundle = run(args.subcommand, spec)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlowUpError as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    out_dir = Path(spec.out) / spec.name
    for path in write_outputs(bundle, spec, out_dir):
        log.info("wrote %s", path)
    for name, ok in bundle.checks.items():
        log.info("%-28s %s", name, "PASS" if ok else "FAIL")
    log.info(json.dumps(bundle.summary, default=str))
    return bundle.status


if __name__ == "__main__":
    sys.exit(main())
