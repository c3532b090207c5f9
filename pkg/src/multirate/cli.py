"""Command-line front end for the convergence studies."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import StudyConfig, parse_config
from .errors import MultirateError
from .timegrid import MultirateMesh, uniform_mesh

log = logging.getLogger("multirate")

STUDY_COMMANDS = {"ode-study": "ode", "heat-study": "heat", "stokes-study": "stokes"}

__all__ = ["main", "StudyConfig", "parse_config"]


def _thread_cap():
    raw = os.environ.get("MULTIRATE_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise MultirateError(f"MULTIRATE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise MultirateError(f"MULTIRATE_THREADS must be a positive integer, got {raw!r}")
    return n


def _limit_threads(n):
    if n is None:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; MULTIRATE_THREADS only affects child processes")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)
        return None
    return threadpool_limits(limits=n)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multirate", description="Multirate time-stepping studies")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress per level")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STUDY_COMMANDS:
        s = sub.add_parser(name, help=f"run a {STUDY_COMMANDS[name]} convergence study")
        s.add_argument("--config", required=True, help="JSON study configuration")
        s.add_argument("--output", help="output directory (overrides the config)")
    m = sub.add_parser("mesh-info", help="print a time mesh as JSON")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="mesh JSON file")
    src.add_argument("--uniform", type=int, metavar="N", help="uniform single-rate mesh")
    m.add_argument("--horizon", type=float, default=1.0)
    return p


def _study(kind: str, args) -> int:
    from .study import run_study

    path = Path(args.config)
    if not path.is_file():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return 2
    config = parse_config(path.read_text(encoding="utf-8"))
    if config.kind != kind:
        raise MultirateError(f"config kind {config.kind!r} does not match command {args.command}")
    if args.output:
        config = config.replace(output=args.output)
    if not config.output:
        config = config.replace(output=".")
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    table = run_study(kind, config.schedule, config,
                      progress=lambda row: log.info("level %s: %s", row["level"], row))
    print(table.to_csv(), end="")
    print(f"wrote {out / 'study.csv'}", file=sys.stderr)
    return 0


def _mesh_info(args) -> int:
    if args.mesh:
        path = Path(args.mesh)
        if not path.is_file():
            print(f"error: mesh file not found: {path}", file=sys.stderr)
            return 2
        mesh = MultirateMesh.from_json(path.read_text(encoding="utf-8"))
    else:
        mesh = uniform_mesh(args.uniform, args.horizon)
    print(mesh.to_json())
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _limit_threads(_thread_cap())
        try:
            if args.command == "mesh-info":
                return _mesh_info(args)
            return _study(STUDY_COMMANDS[args.command], args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except (MultirateError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
