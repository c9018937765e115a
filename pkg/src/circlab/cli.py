"""Command-line driver: ``circlab run``, ``circlab summarize``, ``circlab selftest``.

Exit codes: 0 when everything passed, 1 when a hard check failed, 2 for
usage or configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("circlab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="circlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"circlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--output", type=Path, help="override the config's output directory")
    run.add_argument("--workers", type=int, help="worker processes (default: config, "
                                                  "then $CIRCLAB_WORKERS, then 1)")
    summ = sub.add_parser("summarize", help="aggregate a finished run")
    summ.add_argument("directory", type=Path)
    summ.add_argument("--csv", type=Path, help="also write the CSV twin here")
    st = sub.add_parser("selftest", help="run the built-in example checks")
    st.add_argument("--output", type=Path, default=Path("selftest_out"))
    return parser


def _cmd_run(args) -> int:
    from .runner import manifest_exit_code, run_experiment
    if args.workers is not None and args.workers < 1:
        print("circlab: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        workers = args.workers or cfg.resolved_workers()
    except ConfigError as exc:
        print(f"circlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = run_experiment(cfg, args.output, workers)
    bad = [t for t in manifest["tasks"] if t["status"] != "ok"]
    for t in bad:
        print(f"circlab: task {t['params']} seed={t['seed']} {t['status']}"
              + (f": {t['error']}" if t.get("error") else f": {t['checks']}"), file=sys.stderr)
    print(f"{len(manifest['tasks']) - len(bad)}/{len(manifest['tasks'])} tasks ok; "
          f"outputs in {args.output or cfg.output}")
    return manifest_exit_code(manifest)


def _cmd_summarize(args) -> int:
    from .runner import ManifestError, summarize_directory
    try:
        table, csv_text = summarize_directory(args.directory)
    except ManifestError as exc:
        print(f"circlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(table)
    target = args.csv or (args.directory / "summary.csv")
    Path(target).write_text(csv_text)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest
    ok, rows = run_selftest(args.output)
    for r in rows:
        print(f"{'PASS' if r['ok'] else 'FAIL'}  {r['check']}  {r['value']}")
    print(f"{sum(r['ok'] for r in rows)}/{len(rows)} checks passed; CSVs in {args.output}")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "summarize": _cmd_summarize, "selftest": _cmd_selftest}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
