"""Command line: ``kglab {groundstate,classify,evolve,sweep,audit}``.

Exit codes: 0 success, 2 configuration/domain error, 3 numerical
instability or non-convergence, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import sys

from . import lab
from .config import ENV_ROOT, load_config, output_dir
from .errors import KGLabError


def build_parser():
    p = argparse.ArgumentParser(prog="kglab", description="Radial nonlinear Klein-Gordon laboratory.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set state.lam=0.7 (repeatable)")
    common.add_argument("-o", "--output", help=f"output directory (relative to ${ENV_ROOT})")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("groundstate", parents=[common], help="ground state, threshold m and mass shift c")
    pc = sub.add_parser("classify", parents=[common], help="K+/K- membership of initial data")
    pc.add_argument("--state", help="CSV with r,u[,v] columns instead of the configured data")
    sub.add_parser("evolve", parents=[common], help="evolve the configured data")
    ps = sub.add_parser("sweep", parents=[common], help="classify and evolve along a parameter axis")
    ps.add_argument("--workers", type=int, help="concurrent points (default from config)")
    sub.add_parser("audit", parents=[common], help="assumption audit and invariant suites")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.output:
            cfg["output"] = args.output
        out = output_dir(cfg)
        plots = not args.no_plots
        if args.command == "groundstate":
            lab.run_groundstate(cfg, out, plots=plots)
        elif args.command == "classify":
            lab.run_classify(cfg, out, state_path=args.state)
        elif args.command == "evolve":
            lab.run_evolve(cfg, out, plots=plots)
        elif args.command == "sweep":
            lab.run_sweep(cfg, out, plots=plots, workers=args.workers)
        elif args.command == "audit":
            rep = lab.run_audit(cfg, out)
            if not rep["passed"]:
                print("audit failed", file=sys.stderr)
                return 4
    except KGLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.exit_code == 3:
            print("hint: reduce dt (CFL needs dt <= h / 2) or refine the grid", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
