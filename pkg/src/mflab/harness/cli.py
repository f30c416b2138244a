"""Command line entry point: ``mflab run | list-experiments | validate``."""

from __future__ import annotations

import argparse
import sys
import time

from .config import EXPERIMENTS, ConfigError, config_hash, load_config
from .experiments import ArtifactMismatchError
from .runner import run_experiment
from ..quantum import ResourceCapError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mflab", description="Mean-field and semiclassical limit experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sub.add_parser("list-experiments", help="print the experiment names")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return p


def _load(path, seed=None):
    cfg = load_config(path)
    return cfg if seed is None else cfg.replace(seed=seed)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_PASS
    try:
        if args.command == "validate":
            cfg = _load(args.config)
            print(f"ok: {cfg.experiment} (config {config_hash(cfg)[:12]})")
            return EXIT_PASS
        cfg = _load(args.config, args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        start = time.perf_counter()
        report = run_experiment(cfg, args.out, jobs=args.jobs)
    except (ConfigError, ArtifactMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError as exc:
        kind = "resource cap" if isinstance(exc, ResourceCapError) else "out of memory"
        print(f"resource error ({kind}): {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    elapsed = time.perf_counter() - start
    for check, (n, v) in sorted(report.verdicts().items()):
        print(f"{'PASS' if v == 0 else 'FAIL'} {check}: {n - v}/{n}")
    for msg in report.failures:
        print(f"failure: {msg}", file=sys.stderr)
    for msg in report.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"{cfg.experiment}: {'PASS' if report.passed else 'FAIL'} in {elapsed:.1f} s "
          f"({args.out or cfg.output_dir})")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
