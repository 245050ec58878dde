"""Command line: ``wecflow precompute|run|report``.

Exit codes: 0 success (converged), 2 budget exhausted, 3 input error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..flow import MODES, FlowError
from ..hydro import StateSolveError
from .config import ConfigError, RunConfig
from .report import format_table, make_report
from .run import InputError, execute, prepare_inputs, save_run

EXIT_OK, EXIT_BUDGET, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("wecflow")


def build_parser():
    parser = argparse.ArgumentParser(prog="wecflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_config=True):
        p.add_argument("--config", type=Path, required=need_config, help="YAML run config")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for synthetic coefficients and layout jitter")

    p = sub.add_parser("precompute", help="build wave, coefficient and field caches")
    common(p)
    p = sub.add_parser("run", help="optimize a park layout and its controls")
    common(p)
    p.add_argument("--preset", choices=MODES, default=None, help="time-stepping strategy")
    p = sub.add_parser("report", help="plots and summary table from run directories")
    common(p, need_config=False)
    p.add_argument("--runs", type=Path, default=None,
                   help="directory holding one run or several run subdirectories")
    return parser


def cmd_precompute(args):
    cfg = RunConfig.load(args.config)
    inputs = prepare_inputs(cfg, args.seed)
    for key, (state, path) in inputs.cache.items():
        print(f"{key:8s} {state:9s} {path}")
    return EXIT_OK


def cmd_run(args):
    cfg = RunConfig.load(args.config)
    settings = cfg.flow_settings(args.preset)
    out = args.out or cfg.resolve(cfg.paths["out_dir"]) / settings.mode

    def progress(rec, _w):
        log.info("t=%.4g dt=%.3g |psi|=%.3e |g|=%.2e f=%.5f cg=%d", rec.t, rec.dt,
                 rec.norm_psi, rec.norm_g, rec.cost, rec.cg_iters)

    result, ap, inputs = execute(cfg, args.preset, args.seed, callback=progress,
                                 name=out.name)
    save_run(result, ap, inputs, cfg, out, settings)
    print(format_table([result.summary_row()]), end="")
    print(f"results written to {out}")
    return {"converged": EXIT_OK, "budget": EXIT_BUDGET}.get(result.status, EXIT_NUMERIC)


def cmd_report(args):
    root = args.runs or args.out
    if root is None and args.config is not None:
        root = RunConfig.load(args.config).resolve("out")
    if root is None:
        raise InputError("report needs --runs or --out pointing at run output")
    try:
        paths = make_report(root, args.out or root)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"precompute": cmd_precompute, "run": cmd_run, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FlowError, StateSolveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
