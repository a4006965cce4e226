"""Command line front-end: run experiments from a config file."""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

from .analysis import AnalysisError
from .config import ConfigError, load_config
from .expr import ExprError
from .fem import FemError
from .mesh import KINDS, MeshError, count_dofs
from .predictor import PredictorError, SuiteResult, run_suite
from .report import render_report, write_outputs
from .solver import SolverError

__all__ = ["main"]

RUNTIME_ERRORS = (PredictorError, SolverError, FemError, MeshError,
                  AnalysisError, ExprError, MemoryError, OSError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="femopt",
        description="Measure FE error branches and predict the optimal DoF count.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="path to a TOML experiment file")
    run.add_argument("--parallel", action="store_true",
                     help="run (variable, p) pipelines concurrently; "
                          "disables pct reporting")
    run.add_argument("--out", metavar="DIR", default=None,
                     help="output directory (overrides [output] directory)")
    run.set_defaults(func=cmd_run)

    dofs = sub.add_parser("dofs", help="print the DoF count for kind, R, p")
    dofs.add_argument("kind", choices=KINDS)
    dofs.add_argument("level", type=int, metavar="R")
    dofs.add_argument("degree", type=int, metavar="p")
    dofs.set_defaults(func=cmd_dofs)

    check = sub.add_parser("check", help="validate a config file and exit")
    check.add_argument("config", help="path to a TOML experiment file")
    check.set_defaults(func=cmd_check)
    return parser


def cmd_dofs(args) -> int:
    try:
        print(count_dofs(args.kind, args.level, args.degree))
    except MeshError as err:
        raise ConfigError(str(err)) from err
    return 0


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    prob = cfg.problem
    print(f"ok: {cfg.name} (dim {prob.dim}, {cfg.algo.kind} elements)")
    print(f"  mode {cfg.mode}, degrees {list(cfg.degrees)}, "
          f"variables {list(cfg.variables)}")
    print(f"  reference: {prob.reference_mode}, N_max {cfg.algo.n_max:g}, "
          f"output -> {cfg.out_dir}")
    return 0


def _run_parallel(cfg) -> SuiteResult:
    """One independent pipeline per (variable, p), each with its own context.

    Shared stages are redone per pipeline, so cross-pipeline timing sums are
    not comparable and pct stays disabled.
    """
    pairs = []
    skipped = []
    for p in cfg.degrees:
        for v in cfg.variables:
            if v == "hess" and p < 2:
                skipped.append((v, p, "hess needs p >= 2"))
            else:
                pairs.append((v, p))

    def one(pair):
        v, p = pair
        return run_suite(cfg.problem, cfg.algo, degrees=(p,), variables=(v,),
                         mode=cfg.mode, u_m=cfg.u_m)

    with ThreadPoolExecutor(max_workers=min(4, max(1, len(pairs)))) as pool:
        parts = list(pool.map(one, pairs))

    merged = SuiteResult(cfg.problem, cfg.algo, list(cfg.degrees),
                         list(cfg.variables), cfg.mode, [])
    merged.skipped = skipped
    for part in parts:
        merged.scenarios.extend(part.scenarios)
        merged.shared_seconds += part.shared_seconds
        merged.total_bf_seconds += part.total_bf_seconds
        merged.total_pred_seconds += part.total_pred_seconds
        if merged.norm_uO is None:
            merged.norm_uO = part.norm_uO
            merged.msplus = part.msplus
    merged.aggregate_pct = None
    return merged


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out if args.out is not None else cfg.out_dir
    if args.parallel:
        result = _run_parallel(cfg)
    else:
        result = run_suite(cfg.problem, cfg.algo, degrees=cfg.degrees,
                           variables=cfg.variables, mode=cfg.mode, u_m=cfg.u_m)
    written = write_outputs(result, out_dir, emit_plots=cfg.emit_plots,
                            parallel=args.parallel)
    print(render_report(result, parallel=args.parallel))
    print("written:")
    for path in written:
        print(f"  {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as err:
        print(f"{type(err).__module__}.{type(err).__name__}: {err}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
