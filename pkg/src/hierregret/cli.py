"""Command-line entry point ``hierregret``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import load_config
from .exceptions import ConfigError, DomainError
from .harness import DEFAULT_PLOTS, PLOT_KINDS, emit_plot_data, load_records, run_experiment, write_plot_files

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="hierregret", description="Regret and risk bound experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML/JSON config")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None,
                     help="overrides HIERREGRET_OUTPUT_DIR and the config's output_dir")
    run.add_argument("--workers", type=int, default=None, help="overrides HIERREGRET_WORKERS (default 1)")

    val = sub.add_parser("validate", help="check a config and print its resolved form")
    val.add_argument("config")

    plots = sub.add_parser("emit-plots", help="write CSV plot data from a records file")
    plots.add_argument("records")
    plots.add_argument("--kind", choices=sorted(PLOT_KINDS), default=None,
                       help="plot kind (default: the natural plot for the record kind)")
    plots.add_argument("--out", default=".", help="output directory")
    return parser


def _run(args):
    cfg = load_config(args.config)
    doc, paths = run_experiment(cfg, output_dir=args.output_dir, workers=args.workers)
    for p in paths:
        print(p)
    return EXIT_OK


def _validate(args):
    cfg = load_config(args.config)
    print(json.dumps(cfg.echo(), indent=2, sort_keys=True))
    return EXIT_OK


def _emit(args):
    doc = load_records(args.records)
    kind = args.kind or DEFAULT_PLOTS.get(doc.get("kind"))
    if kind is None:
        raise DomainError(f"no plot kind for records of kind {doc.get('kind')!r}")
    for p in write_plot_files(emit_plot_data(doc, kind), args.out, kind):
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "validate": _validate, "emit-plots": _emit}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
