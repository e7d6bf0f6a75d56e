"""Command-line entry point.

Subcommands: ``run`` (execute a sweep, write CSV, render figures),
``list-scenarios``, and ``gen-code`` (emit the benchmark LDPC alist).
Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..decoding import gen_regular_code, write_alist
from .config import ConfigError, load_config
from .metrics import write_csv
from .scenarios import run_experiment, scenario_summaries


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmcrx",
        description="MCMC receiver benchmarks: seeded Monte Carlo SNR sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to the experiment config file")
    run_p.add_argument("--seed", type=int, default=None, help="override master_seed")
    run_p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    run_p.add_argument("--out", default=None, help="override output CSV path")
    run_p.add_argument(
        "--no-plot",
        action="store_true",
        help="skip rendering the per-metric PNG figures next to the CSV",
    )

    sub.add_parser("list-scenarios", help="list scenarios and their algorithms")

    gen_p = sub.add_parser("gen-code", help="generate the benchmark LDPC alist")
    gen_p.add_argument("--n", type=int, required=True, help="code length")
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", required=True, help="alist output path")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.out is not None:
        config.output_path = args.out
    rows, failures = run_experiment(config, n_workers=args.workers)
    if not rows:
        print("error: no metric rows produced (all trials failed)", file=sys.stderr)
        for algo, msgs in failures.items():
            print(f"  {algo}: {msgs[0]} (+{len(msgs) - 1} more)", file=sys.stderr)
        return 2
    out = Path(config.output_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, str(out))
    print(f"wrote {len(rows)} rows to {out}")
    for algo, msgs in failures.items():
        print(
            f"warning: {algo} failed {len(msgs)} trial(s); first: {msgs[0]}",
            file=sys.stderr,
        )
    if not args.no_plot:
        from .plotting import render_figures

        for fig in render_figures(rows, str(out)):
            print(f"wrote {fig}")
    return 0


def _cmd_gen_code(args) -> int:
    pc = gen_regular_code(args.n, 3, 6, seed=args.seed)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(write_alist(pc), encoding="utf-8")
    print(f"wrote ({pc.n},{pc.n - pc.m}) regular code to {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-scenarios":
            for line in scenario_summaries():
                print(line)
            return 0
        if args.command == "gen-code":
            return _cmd_gen_code(args)
        return 1
    except (ConfigError, ValueError) as exc:
        # ValueError here means bad user input (config fields, gen-code args);
        # per-trial algorithm failures are isolated inside run_experiment.
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
