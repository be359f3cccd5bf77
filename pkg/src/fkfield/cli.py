"""Command-line driver.

`fkfield run <config> [--jobs N] [--out DIR] [--seed S]` runs an experiment,
`fkfield oracle <config>` verifies a small lattice against enumeration, and
`fkfield schema` prints the config schema.  Exit codes: 0 success, 1 invalid
config, 2 runtime failure, 3 oracle-verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, parse_config, schema_text

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ORACLE_FAIL = 3


def _load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)
    try:
        return parse_config(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)


def _cmd_run(args) -> int:
    from .experiments import run_experiment
    cfg = _load_config(args.config)
    try:
        manifest, summary, paths = run_experiment(
            cfg, jobs=args.jobs, outdir=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, sort_keys=True, default=str))
    for path in paths:
        print(f"wrote {path}")
    if cfg.kind == "oracle" and not summary.get("passed", True):
        return EXIT_ORACLE_FAIL
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from .config import coupling_spec, oracle_graph, schedule
    from .experiments import verify_against_oracle
    cfg = _load_config(args.config)
    if cfg.kind != "oracle":
        print("error: config key 'kind': oracle subcommand needs kind = oracle",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        report = verify_against_oracle(oracle_graph(cfg), coupling_spec(cfg),
                                       schedule(cfg))
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(report.to_json(), sort_keys=True))
    return EXIT_OK if report.passed else EXIT_ORACLE_FAIL


def _cmd_schema(args) -> int:
    print(schema_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fkfield",
        description="Critical-cluster field construction and scaling checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel chains (default 1)")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.set_defaults(fn=_cmd_run)

    p_oracle = sub.add_parser("oracle",
                              help="verify a small lattice against enumeration")
    p_oracle.add_argument("config", help="path to a kind = oracle config file")
    p_oracle.set_defaults(fn=_cmd_oracle)

    p_schema = sub.add_parser("schema", help="print the config schema")
    p_schema.set_defaults(fn=_cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
