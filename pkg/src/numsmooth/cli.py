"""Command line: ``numsmooth run | list-presets | sweep``.

Exit status is 0 when every run converged, 2 on a usage error and 3 when a
run finished without meeting its tolerance.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .experiments import (
    PRESETS,
    UsageError,
    get_preset,
    parse_config,
    rows_to_csv,
    run_experiment,
    sweep,
)

OUTPUT_DIR_ENV = "NUMSMOOTH_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="numsmooth", description="Smoothed ASGQ / MLMC experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a preset or a key = value config file")
    r.add_argument("target")
    r.add_argument("--tol", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    sub.add_parser("list-presets", help="show the named experiments")
    s = sub.add_parser("sweep", help="run a preset over several tolerances")
    s.add_argument("preset")
    s.add_argument("--tols", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    return p


def _load(target: str):
    if target in PRESETS:
        return PRESETS[target]
    path = Path(target)
    if path.is_file():
        return parse_config(path.read_text())
    return get_preset(target)


def _overrides(cfg, args):
    kw = {k: getattr(args, k) for k in ("tol", "seed", "threads") if getattr(args, k, None) is not None}
    if kw.get("threads", 1) < 1:
        raise UsageError("--threads must be at least 1")
    return cfg.with_(**kw) if kw else cfg


def _out_path(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "results")) / f"{name}.csv"


def _write(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a") as fh:
        fh.write(rows_to_csv(rows, header=new))


def _summary(rows) -> None:
    for r in rows:
        ref = "" if r.reference != r.reference else f" ref={r.reference:g} rel_err={r.rel_error:.3%}"
        flag = "" if r.converged else "  [not converged]"
        print(f"{r.experiment} {r.param}: {r.estimate:.6g}{ref}{flag}")


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command == "list-presets":
            for name, cfg in PRESETS.items():
                print(f"{name:24s} {cfg.method:8s} {cfg.model}/{cfg.payoff}")
            return EXIT_OK
        if args.command == "run":
            cfg = _overrides(_load(args.target), args)
            rows = run_experiment(cfg)
        else:
            cfg = _overrides(get_preset(args.preset), args)
            try:
                tols = [float(t) for t in args.tols.split(",") if t.strip()]
            except ValueError as exc:
                raise UsageError(f"bad --tols: {exc}") from exc
            rows = sweep(cfg, tols)
    except UsageError as exc:
        print(f"numsmooth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = _out_path(args, cfg.name)
    _write(path, rows)
    _summary(rows)
    print(f"wrote {len(rows)} row(s) to {path}")
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
