"""Command-line entry point: ``fxinsure {solve,simulate,verify,compare,reproduce}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from . import closed_form as cf
from . import montecarlo as mc
from .market import ConfigError, OUParams, load_config, table_config

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


def _parse_ou(text: str | None) -> OUParams | None:
    if text is None:
        return None
    try:
        a, b, m0 = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--ou expects alpha,beta,m0; got {text!r}") from None
    return OUParams(a, b, m0)


def _load(args, market: str = "ou"):
    if args.config:
        return load_config(args.config, market)
    return table_config(1, market)


def cmd_solve(args) -> int:
    cfg = _load(args)
    table = cf.build_table(cfg, args.grid)
    x = cfg.params.x0 if args.x is None else args.x
    m = cfg.ou.m0 if args.m0 is None else args.m0
    t = table.grid
    h = table.K * m**2 + table.L * m + table.J
    cols = (t, table.K, table.L, table.J, h, cf.optimal_strategy(cfg, t, m), cf.value_function(cfg, t, x, m, table))
    out = Path(args.out) if args.out else None
    header = ("t", "K", "L", "J", "h", "pi_star", "V")
    if out:
        analysis.write_csv(out, header, cols)
    else:
        tmp = [",".join(header)] + [",".join(analysis.format_number(v) for v in row) for row in zip(*cols)]
        sys.stdout.write("\n".join(tmp) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args, args.market)
    try:
        strategy = mc.Strategy.parse(args.strategy)
        sim = mc.SimConfig(args.paths, args.steps, args.seed, strategy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = mc.estimate_utility(cfg, sim, workers=args.workers)
    payload = res.to_dict()
    payload["value_function"] = cf.value_function(cfg, 0.0, cfg.params.x0, cfg.ou.m0)
    print(json.dumps(payload))
    if args.dump_paths:
        k = min(args.dump_paths, sim.paths)
        tr = mc.simulate_paths(cfg, sim, range(k))
        rows = ["path,t,X,m,Q,Sf"]
        for i in range(k):
            for j, t in enumerate(tr["t"]):
                vals = (t, tr["X"][i, j], tr["m"][i, j], tr["Q"][i, j], tr["Sf"][i, j])
                rows.append(f"{i}," + ",".join(analysis.format_number(v) for v in vals))
        Path(args.dump_out).write_text("\n".join(rows) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    rep = analysis.run_verify_suite(cfg, grid=args.grid, mc_paths=args.paths, mc_steps=args.steps, seed=args.seed)
    print(rep.format())
    if not rep.passed:
        print("FAILED: " + ", ".join(c.name for c in rep.failures()))
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.bool_)):
        return obj.item()
    return obj


def cmd_compare(args) -> int:
    cfg = _load(args)
    rep = analysis.compare_markets(cfg, x0=args.x, ou=_parse_ou(args.ou))
    print(json.dumps(_jsonable(rep.summary()), indent=2))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    try:
        paths = analysis.reproduce_figures(args.table, args.out, ou=_parse_ou(args.ou))
    except OSError as exc:
        print(f"error: cannot write to {args.out}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat JSON parameter file (default: table 1)")
    common.add_argument("--grid", type=int, default=argparse.SUPPRESS, help="coefficient grid points")

    parser = argparse.ArgumentParser(prog="fxinsure", description=__doc__)
    parser.add_argument("--config", default=None, help="flat JSON parameter file (default: table 1)")
    parser.add_argument("--grid", type=int, default=cf.DEFAULT_GRID, help="coefficient grid points")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="coefficient table and value/strategy on the grid as CSV")
    p.add_argument("--x", type=float, default=None, help="surplus level (default x0)")
    p.add_argument("--m0", type=float, default=None, help="drift deviation (default from config)")
    p.add_argument("--out", default=None, help="CSV file (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate of expected terminal utility")
    p.add_argument("--market", choices=("ou", "gbm", "domestic"), default="ou")
    p.add_argument("--strategy", default="optimal", help="optimal | zero | scaled:<f> | constant:<v>")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-paths", type=int, default=0, metavar="K", help="write the first K trajectories")
    p.add_argument("--dump-out", default="paths.csv", help="trajectory CSV file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run the oracle and residual checks")
    p.add_argument("--paths", type=int, default=20000, help="Monte Carlo paths (0 skips simulation checks)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", parents=[common], help="foreign versus domestic market comparison")
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--ou", default=None, metavar="ALPHA,BETA,M0", help="use the OU exchange-rate drift")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", parents=[common], help="figure data for a parameter table")
    p.add_argument("--table", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ou", default=None, metavar="ALPHA,BETA,M0")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for failed verification here
        return EXIT_INVALID if exc.code == 2 else exc.code
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
