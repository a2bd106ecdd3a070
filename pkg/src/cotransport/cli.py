"""Command line entry point: train, eval, verify, export.

Exit codes: 0 success, 1 usage, 2 validation (bad config, bad inputs,
failed verification), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .allocator import AllocatorError
from .config import ConfigError, default_config, parse_config
from .evalmetrics import EvalError, run_eval
from .kvfile import KvError
from .scenario import ScenarioError, load_scenario
from .selfcheck import format_table, run_selfcheck
from .trainer import REPORT_COLUMNS, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the tool reserves 2 for validation
    def error(self, message):
        raise UsageError(message)


MODE_ALIASES = {"full": "full", "uca": "uca", "penalty": "penalty_only",
                "shared": "shared_params", "macpo": "macpo_style"}

VALIDATION_ERRORS = (ConfigError, KvError, ScenarioError, EvalError,
                     AllocatorError, FileNotFoundError, NotADirectoryError)


def build_parser() -> _Parser:
    parser = _Parser(prog="cotransport",
                     description="Safe cooperative transport: training, "
                                 "evaluation and verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training job")
    p_train.add_argument("--config", type=Path, default=None,
                         help="experiment file; omitted means all defaults")
    p_train.add_argument("--seed", type=int, required=True)
    p_train.add_argument("--out", type=Path, required=True,
                         help="directory for checkpoint and logs")
    p_train.add_argument("--mode", choices=sorted(MODE_ALIASES),
                         default=None, help="override the configured variant")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--scenario", type=Path, required=True,
                        help="scenario key-value file")
    p_eval.add_argument("--n", type=int, default=30)
    p_eval.add_argument("--seed", type=int, required=True)
    p_eval.add_argument("--out", type=Path, default=Path("report.json"))
    p_eval.add_argument("--traces", type=Path, default=None,
                        help="also write one trace CSV per episode here")
    p_eval.add_argument("--time-cap", type=float, default=35.0)
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify",
                              help="run built-in oracle cross-checks")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)

    p_export = sub.add_parser("export",
                              help="emit plot-ready CSVs from a run directory")
    p_export.add_argument("--run", type=Path, required=True)
    p_export.add_argument("--out", type=Path, default=None,
                          help="defaults to <run>/export")
    p_export.add_argument("--what", choices=("curves", "allocation",
                                             "traces", "all"),
                          default="all")
    p_export.set_defaults(func=cmd_export)
    return parser


def cmd_train(args) -> int:
    config = parse_config(args.config) if args.config else default_config()
    mode = MODE_ALIASES[args.mode] if args.mode else None
    summary = train(config.scenario(), config.env_params(),
                    config.trainer_config(mode=mode),
                    config.allocator_config(), seed=args.seed,
                    out_dir=args.out)
    print(f"trained {summary['iterations']} iterations")
    print(f"checkpoint: {summary['checkpoint']}")
    print(f"report: {summary['report']}")
    return 0


def cmd_eval(args) -> int:
    spec, params = load_scenario(args.scenario)
    report = run_eval(args.checkpoint, spec, params, n=args.n,
                      seed=args.seed, time_cap_s=args.time_cap,
                      trace_dir=args.traces)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    straight = ("n/a" if report.mean_straightness is None
                else f"{report.mean_straightness:.3f}")
    print(f"episodes: {report.n_episodes}  "
          f"arrival: {report.arrival_rate:.2f}  "
          f"collision: {report.collision_rate:.2f}  "
          f"straightness: {straight}  "
          f"time: {report.mean_time_s:.1f}s")
    print(f"report: {args.out}")
    return 0


def cmd_verify(args) -> int:
    results = run_selfcheck(seed=args.seed)
    print(format_table(results))
    if all(r.passed for r in results):
        print("all checks passed")
        return 0
    print("verification FAILED", file=sys.stderr)
    return 2


def cmd_export(args) -> int:
    run_dir = args.run
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    out_dir = args.out if args.out is not None else run_dir / "export"
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []

    report = run_dir / "report.csv"
    if args.what in ("curves", "all"):
        if not report.exists():
            raise FileNotFoundError(f"{report} is missing; nothing to export")
        text = report.read_text()
        header = text.splitlines()[0] if text else ""
        if header != ",".join(REPORT_COLUMNS):
            raise ConfigError(f"{report} does not look like a training "
                              f"report (header {header!r})")
        (out_dir / "curves.csv").write_text(text)
        wrote.append(out_dir / "curves.csv")

    allocation = run_dir / "allocation.csv"
    if args.what == "allocation" and not allocation.exists():
        raise FileNotFoundError(f"{allocation} is missing; the run used no "
                                f"learned allocation")
    if allocation.exists() and args.what in ("allocation", "all"):
        (out_dir / "allocation.csv").write_text(allocation.read_text())
        wrote.append(out_dir / "allocation.csv")

    traces = sorted(run_dir.glob("traces/*.csv"))
    if args.what == "traces" and not traces:
        raise FileNotFoundError(f"no trace CSVs under {run_dir / 'traces'}")
    if traces and args.what in ("traces", "all"):
        trace_out = out_dir / "traces"
        trace_out.mkdir(exist_ok=True)
        for path in traces:
            shutil.copyfile(path, trace_out / path.name)
            wrote.append(trace_out / path.name)

    if not wrote:
        raise FileNotFoundError(f"nothing exportable in {run_dir}")
    for path in wrote:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract over traceback
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
