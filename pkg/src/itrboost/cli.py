"""Command-line entry point: ``itrboost <subcommand> ...``.

Exit codes: 0 success, 1 runtime or model error, 2 usage error. Usage is
checked before any file is read or written.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from ._util import worker_count
from . import bench, data as data_mod, evaluate as eval_mod, sim, tune
from .boosting import HyperParams
from .itr import BOOSTING_METHODS, METHODS, ItrPolicy, dlearning_target, fit_method

# D-learning uses the l1 fit above this many covariates unless a penalty is given
LASSO_DIMENSION = 10
MODEL_FORMAT = "itrboost-policy/1"


class UsageError(Exception):
    pass


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32)


def _propensity_arg(text: str) -> data_mod.PropensitySpec:
    try:
        v = float(text)
    except ValueError:
        return data_mod.PropensitySpec.from_column(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"constant propensity must be in (0,1), got {v}")
    return data_mod.PropensitySpec.constant(v)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a number >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="itrboost", formatter_class=_formatter,
                                 description="Tree boosting for individualized treatment rules.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="draw a synthetic trial", formatter_class=_formatter)
    s.add_argument("--scenario", type=int, required=True, choices=sim.SCENARIOS)
    s.add_argument("--n", type=_positive_int, required=True, help="number of rows")
    s.add_argument("--p", type=_positive_int, required=True, help="number of covariates")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output CSV")

    def add_data(p, propensity=True):
        p.add_argument("--data", required=True, help="trial CSV (x_* columns, treatment, outcome)")
        if propensity:
            p.add_argument("--propensity", type=_propensity_arg, default="0.5",
                           help="constant in (0,1) or the name of a column")

    def add_fit_options(p):
        p.add_argument("--mu", choices=("linear", "null", "lasso"), default="linear",
                       help="common-effect model for direct-boosting-2")
        p.add_argument("--mu-lasso-penalty", type=_nonneg_float, default=None,
                       help="penalty for --mu lasso; None selects it by CV")
        p.add_argument("--lasso-penalty", type=_nonneg_float, default=None,
                       help=f"l1 penalty for d-linear; None means CV when p > {LASSO_DIMENSION}, "
                            "else unpenalized")

    t = sub.add_parser("train", help="fit a treatment rule", formatter_class=_formatter)
    t.add_argument("--method", required=True, choices=METHODS)
    add_data(t)
    g = t.add_mutually_exclusive_group()
    g.add_argument("--params", help="JSON file of boosting hyperparameters")
    g.add_argument("--cv", action="store_true", help="select hyperparameters by cross validation")
    t.add_argument("--grid", help="JSON grid for --cv; None uses the built-in grid")
    t.add_argument("--k", type=int, default=10, help="folds for --cv")
    t.add_argument("--seed", type=int, default=0, help="fold seed for --cv")
    add_fit_options(t)
    t.add_argument("--model-out", required=True, help="output model JSON")

    pr = sub.add_parser("predict", help="apply a rule to covariates", formatter_class=_formatter)
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True, help="CSV with x_* columns")
    pr.add_argument("--out", required=True, help="output CSV with one decision per row")

    e = sub.add_parser("evaluate", help="value and misclassification of a rule",
                       formatter_class=_formatter)
    e.add_argument("--model", required=True)
    add_data(e)
    e.add_argument("--oracle-col", default=None, help="column holding the optimal decisions")
    e.add_argument("--report", default=None, help="also write the JSON report here")

    c = sub.add_parser("cv", help="cross-validate a grid", formatter_class=_formatter)
    c.add_argument("--method", required=True, choices=METHODS)
    add_data(c)
    c.add_argument("--grid", help="JSON grid; None uses the built-in grid")
    c.add_argument("--k", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mu", choices=("linear", "null", "lasso"), default="linear")
    c.add_argument("--mu-lasso-penalty", type=_nonneg_float, default=None)
    c.add_argument("--table", default=None, help="write the per-candidate table as CSV")

    b = sub.add_parser("benchmark", help="run the simulation study", formatter_class=_formatter)
    b.add_argument("--config", default=None, help="JSON BenchConfig; None uses the built-in config")
    b.add_argument("--out", default="bench_out", help="output directory")
    b.add_argument("--replications", type=_positive_int, default=None,
                   help="override the configured replication count")
    b.add_argument("--full-replications", action="store_true",
                   help="run 100 replications per cell (slow)")
    b.add_argument("--tune-every-rep", action="store_true",
                   help="re-tune on every replication instead of once per cell")
    b.add_argument("--seed", type=int, default=None, help="override the master seed")
    return ap


def _check_usage(args) -> None:
    """Cross-flag checks that need no file access."""
    if args.command == "simulate":
        try:
            sim.ScenarioSpec(args.scenario, args.n, args.p, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.command in ("train", "cv"):
        if args.command == "cv" or args.cv:
            if args.k < 2:
                raise UsageError(f"--k must be >= 2, got {args.k}")
        if args.command == "train":
            if args.params and args.method not in BOOSTING_METHODS:
                raise UsageError(f"--params applies to boosting methods, not {args.method}")
            if args.lasso_penalty is not None and args.method != "d-linear":
                raise UsageError("--lasso-penalty applies to d-linear only")
        if args.mu_lasso_penalty is not None and args.mu != "lasso":
            raise UsageError("--mu-lasso-penalty requires --mu lasso")
    if args.command == "benchmark":
        if args.full_replications and args.replications is not None:
            raise UsageError("--full-replications and --replications are exclusive")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_grid(path):
    return tune.Grid.from_dict(_read_json(path)) if path else tune.DEFAULT_GRID


def _mu_penalty(args, ds, seed):
    if args.mu != "lasso" or args.mu_lasso_penalty is not None:
        return args.mu_lasso_penalty
    lam = tune.select_lasso_penalty(ds.covariates, ds.outcomes, 1.0 / ds.propensities,
                                    seed=seed)
    print(f"common-effect lasso penalty: {lam!r}")
    return lam


def cmd_simulate(args) -> int:
    trial = sim.generate(sim.ScenarioSpec(args.scenario, args.n, args.p, args.seed))
    data_mod.write_csv(trial.data, args.out, extra={"oracle": trial.oracle_decisions.tolist()})
    frac = float(np.mean(trial.oracle_decisions == 1))
    print(f"n={trial.data.n} p={trial.data.p} oracle_plus_fraction={frac!r}")
    return 0


def cmd_train(args) -> int:
    ds = data_mod.load_csv(args.data, args.propensity)
    mu_pen = _mu_penalty(args, ds, args.seed)
    fit_kw = {"mu": args.mu, "mu_lasso_penalty": mu_pen}
    params, lasso = None, args.lasso_penalty
    method = args.method

    if method in BOOSTING_METHODS:
        if args.params:
            params = HyperParams(**_read_json(args.params))
        elif args.cv:
            res = tune.cross_validate(method, ds, _load_grid(args.grid), args.k, args.seed,
                                      **fit_kw)
            params = res.best
        else:
            params = HyperParams()
    elif method == "d-linear" and lasso is None and ds.p > LASSO_DIMENSION:
        grid = tune.Grid(lasso_penalties=tune.lasso_grid(ds.covariates, *dlearning_target(ds)))
        lasso = tune.cross_validate(method, ds, grid, max(args.k, 2), args.seed).best

    policy = fit_method(method, ds, params, lasso_penalty=lasso, **fit_kw)
    selected = params.to_dict() if params is not None else {"lasso_penalty": lasso}
    _write_json(args.model_out, {"format": MODEL_FORMAT, "method": method,
                                 "selected": selected, "policy": policy.to_dict()})
    print(f"{method}: {json.dumps(selected, sort_keys=True)}")
    return 0


def _load_policy(path) -> ItrPolicy:
    doc = _read_json(path)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a model file (format {doc.get('format')!r})")
    return ItrPolicy.from_dict(doc["policy"])


def cmd_predict(args) -> int:
    policy = _load_policy(args.model)
    X = data_mod.load_covariates(args.data)
    d = policy.decide(X)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("decision\n")
        fh.writelines(f"{int(v)}\n" for v in d)
    return 0


def cmd_evaluate(args) -> int:
    policy = _load_policy(args.model)
    ds = data_mod.load_csv(args.data, args.propensity)
    d = policy.decide(ds.covariates)
    oracle = None
    if args.oracle_col:
        oracle = data_mod.column(args.data, args.oracle_col).astype(np.int8)
    text = eval_mod.evaluate(d, ds, oracle).to_json() + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_cv(args) -> int:
    ds = data_mod.load_csv(args.data, args.propensity)
    grid = _load_grid(args.grid)
    fit_kw = {}
    if args.method in BOOSTING_METHODS:
        fit_kw = {"mu": args.mu, "mu_lasso_penalty": _mu_penalty(args, ds, args.seed)}
    res = tune.cross_validate(args.method, ds, grid, args.k, args.seed,
                              workers=worker_count(), **fit_kw)
    if args.table:
        res.to_csv(args.table)
    best = res.best_row()
    sel = best.candidate.to_dict() if isinstance(best.candidate, HyperParams) \
        else {"lasso_penalty": best.candidate}
    print(json.dumps({"method": args.method, "best": sel, "mean_value": best.mean,
                      "se": best.se}, sort_keys=True))
    return 0


def cmd_benchmark(args) -> int:
    cfg = bench.BenchConfig.from_dict(_read_json(args.config)) if args.config \
        else bench.BenchConfig()
    changes = {}
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.full_replications:
        changes["replications"] = 100
    if args.tune_every_rep:
        changes["tune_every_rep"] = True
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if changes:
        cfg = bench.BenchConfig.from_dict({**cfg.to_dict(), **changes})
    summary = bench.run(cfg, args.out)
    failed = sum(r["failed"] for r in summary.rows)
    print(f"wrote {len(summary.rows)} summary rows to {Path(args.out) / 'summary.csv'}"
          + (f" ({failed} failed cells)" if failed else ""))
    return 0


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "cv": cmd_cv, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_usage(args)
    except UsageError as exc:
        parser.error(str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, ArithmeticError, RuntimeError, KeyError) as exc:
        print(f"itrboost {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
