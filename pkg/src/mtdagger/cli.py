"""Command-line front end.

Subcommands:
  run            one (method, seed) experiment into a run directory
  compare        a method grid on one suite, with summary + figures
  suite describe print the resolved task table for a config
  replay         re-execute a run directory and verify byte-identical output
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ParseError, ValidationError, parse_config, with_method_and_seed
from .engine import DaggerAbortedError
from .harness import (
    compare_experiment,
    default_output_root,
    method_slug,
    replay_run,
    run_experiment,
)
from .suite import build_suite, describe_rows


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default=None, help="named preset (e.g. default-12)")
    p.add_argument("--config", default=None, help="TOML config file")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override a config key (repeatable), e.g. --set scheduler.temperature=0.5",
    )


def _load_config(args: argparse.Namespace):
    return parse_config(path=args.config, preset=args.preset, overrides=args.overrides)


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.method is not None:
        config = with_method_and_seed(config, args.method, config.master_seed)
    if args.seed is not None:
        config = with_method_and_seed(config, config.method, args.seed)
    out = Path(args.out) if args.out else (
        default_output_root() / f"{method_slug(config.method)}-seed{config.master_seed}"
    )
    result = run_experiment(config, out, figures=not args.no_figures)
    final = result.run.points[-1]
    print(f"run complete: {out}")
    print(
        f"  method={config.method} seed={config.master_seed} rounds={len(result.run.records) - 1}"
    )
    print(
        f"  final mean success {final.mean_success:.3f} "
        f"at {final.cumulative_demos_per_task:.1f} demos/task"
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    out = Path(args.out) if args.out else default_output_root() / "compare"
    result = compare_experiment(config, methods, seeds, thresholds, out,
                                figures=not args.no_figures)
    print(f"comparison complete: {out}")
    header = "method".ljust(20) + "final".rjust(8)
    header += "".join(f"  to {t:.0%}".rjust(10) for t in thresholds)
    print(header)
    for method, info in result.summary["methods"].items():
        line = method.ljust(20) + f"{info['final_success_mean']:.3f}".rjust(8)
        for t in thresholds:
            value = info["demos_to_threshold"][repr(float(t))]
            line += ("unreached" if value is None else f"{value:.1f}").rjust(10)
        print(line)
    hardest = result.summary["hardest_task"]
    print(f"hardest task: {hardest['task']} " + str(
        {m: round(v, 3) for m, v in hardest["final_success"].items()}
    ))
    return 0


def cmd_suite_describe(args: argparse.Namespace) -> int:
    config = _load_config(args)
    suite = build_suite(config.suite)
    rows = describe_rows(suite)
    cols = ["task", "tier", "dynamics_gain", "mean_ctrl_gain", "obs_noise_std",
            "horizon", "success_radius", "expert_success"]
    print("  ".join(c.rjust(14) for c in cols))
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append((f"{v:.4f}" if isinstance(v, float) else str(v)).rjust(14))
        print("  ".join(cells))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    ok, message = replay_run(args.run_dir)
    print(message)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtdagger", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment run")
    _add_config_args(p_run)
    p_run.add_argument("--method", default=None, help="override the configured method")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--out", default=None, help="run directory")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run a method grid and summarize")
    _add_config_args(p_cmp)
    p_cmp.add_argument("--methods", default="BC,UniformDAgger,MTDAgger-TN,MTDAgger-PG")
    p_cmp.add_argument("--seeds", default="0,1,2,3,4")
    p_cmp.add_argument("--thresholds", default="0.8")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--no-figures", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_suite = sub.add_parser("suite", help="suite utilities")
    suite_sub = p_suite.add_subparsers(dest="suite_command", required=True)
    p_desc = suite_sub.add_parser("describe", help="print the resolved task table")
    _add_config_args(p_desc)
    p_desc.set_defaults(func=cmd_suite_describe)

    p_replay = sub.add_parser("replay", help="verify a run directory reproduces")
    p_replay.add_argument("run_dir")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DaggerAbortedError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
