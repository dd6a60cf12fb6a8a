"""Command line: ``evflux {run,eps-sweep,delta-sweep,check,inspect}``.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration error,
3 runtime abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, StudyConfig, parse_config
from .spectral import set_workers

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="study configuration (INI)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (sweep points and FFTs)")
    common.add_argument("--seed", type=int, default=None, help="u64 seed for random initial modes")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="evflux", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single run with full ledger")
    sub.add_parser("eps-sweep", parents=[common], help="eps -> 0 study at fixed delta")
    sub.add_parser("delta-sweep", parents=[common], help="delta -> 0 study")
    sub.add_parser("check", parents=[common], help="invariant and property suite")
    ins = sub.add_parser("inspect", parents=[common], help="summarize a snapshot file")
    ins.add_argument("snapshot", type=Path)
    return ap


def _load(args, mode: str | None) -> StudyConfig:
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError([f"--seed must be a u64, got {args.seed}"])
        overrides["solver.seed"] = args.seed
    if mode is not None:
        overrides["study.mode"] = mode
    if args.config is None:
        from .config import parse_config_text

        return parse_config_text("", overrides)
    return parse_config(args.config, overrides)


def _inspect(path: Path) -> int:
    s, g = io.read_snapshot(path)
    items = [
        ("file", str(path)),
        ("N", g.ndim),
        ("dims", "x".join(str(d) for d in g.dims)),
        ("lengths", " ".join(io.fmt(x) for x in g.lengths)),
        ("t", s.t),
        ("mass", float(np.sum(s.rho) * g.cell_volume)),
        ("rho_min", float(s.rho.min())),
        ("rho_max", float(s.rho.max())),
        ("momentum_total", " ".join(io.fmt(float(np.sum(mi) * g.cell_volume)) for mi in s.m)),
        ("momentum_abs_max", float(np.abs(s.m).max())),
    ]
    sys.stdout.write(io.report_text(items))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    set_workers(args.threads)

    if args.command == "inspect":
        try:
            return _inspect(args.snapshot)
        except (OSError, io.SnapshotError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    if args.command == "check":
        from .checks import run_checks

        results = run_checks(seed=args.seed or 0)
        for r in results:
            print(r.line())
        ok = all(r.ok for r in results)
        print(f"overall={'pass' if ok else 'fail'}")
        return EXIT_OK if ok else EXIT_FAIL

    mode = {"run": "single", "eps-sweep": "eps-sweep", "delta-sweep": "delta-sweep"}[args.command]
    try:
        cfg = _load(args, mode)
        if mode == "eps-sweep" and not cfg.eps_list:
            raise ConfigError(["eps-sweep needs solver.eps_list"])
        if mode == "delta-sweep" and not cfg.delta_list:
            raise ConfigError(["delta-sweep needs solver.delta_list"])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .studies import run_study

    try:
        report = run_study(cfg, args.out, threads=args.threads, seed=args.seed)
    except Exception as exc:  # anything escaping the study is a runtime abort
        logging.getLogger("evflux").exception("runtime abort")
        print(f"error: runtime abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    sys.stdout.write(report.text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
