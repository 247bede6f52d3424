"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``dimension``, ``simulate`` and the
application workflows ``flea-workflow``, ``bigmac-workflow`` and
``fishing-workflow``.  Options may also come from a ``key = value`` file
given with ``--config``; command-line flags take precedence.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .dimsel import cv_dimension, sequential_dimension
from .expfam import DomainError, Family, SupportError
from .io import (DataError, fit_from_dict, ingest_csv, load_document, numeric_columns,
                 read_config, read_table, save_fit, standardize, write_rows)
from .made import Dataset, MadeConfig, MadeFit, fit
from .predict import predict
from .simbench import (DEFAULT_C, DESIGN_FAMILY, DESIGNS, manifest, run_distance_experiment,
                       run_prediction_experiment)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

FLEA_PREDICTORS = ("tars1", "tars2", "head", "aede1", "aede2", "aede3")
FLEA_SPECIES = ("concinna", "heptapotamica", "heikertingeri")
BIGMAC_PREDICTORS = ("Bread", "BusFare", "EngSal", "EngTax", "Service", "TeachSal",
                     "TeachTax", "VacDays", "WorkHrs")


class UsageError(ValueError):
    pass


# -- argument handling ----------------------------------------------------------

def _csv_list(text):
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _int_list(text):
    return [int(s) for s in _csv_list(text)]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_model_args(p, d_default=True):
    p.add_argument("--family", help="exponential family (default gaussian)")
    p.add_argument("--shape", type=float, help="known shape: kappa, or sigma^2 for gaussian")
    if d_default:
        p.add_argument("--d", type=int, help="reduction dimension (default 1)")
    p.add_argument("--bandwidth-c", dest="bandwidth_c", type=float,
                   help="multiplier c in h = c n^(-1/(d+4)) (default 1)")
    p.add_argument("--bandwidth-h", dest="bandwidth_h", type=float, help="fixed bandwidth h")
    p.add_argument("--weight-mode", dest="weight_mode", choices=("raw", "refined"))
    p.add_argument("--init", choices=("pfc", "random"))
    p.add_argument("--dispersion", choices=("known", "estimate"))
    p.add_argument("--outer-tol", dest="outer_tol", type=float)
    p.add_argument("--outer-max-iter", dest="outer_max_iter", type=int)
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--threads", type=int, help="worker processes (fallback: MADE_THREADS)")
    p.add_argument("--config", help="key=value file; flags override its entries")


def _add_data_args(p, response_default=None):
    p.add_argument("--data", help="input CSV with a header row")
    p.add_argument("--response", help="response column" + (
        f" (default {response_default})" if response_default else ""))
    p.add_argument("--predictors", type=_csv_list, help="comma-separated predictor columns")
    p.add_argument("--exclude", type=_csv_list, help="columns to ignore")
    p.add_argument("--trials", help="binomial trial-count column")
    p.add_argument("--offset", help="offset column")
    p.add_argument("--standardize", type=_bool, help="center and scale predictors (true/false)")


DEFAULTS = {
    "family": "gaussian", "d": 1, "weight_mode": "refined", "init": "pfc",
    "dispersion": "known", "outer_tol": 1e-4, "outer_max_iter": 100, "seed": 0,
    "standardize": False, "method": "permutation", "level": 0.05, "replicates": 100,
    "folds": 5, "loss": "squared", "predictor": "NW", "summary": "mean", "kind": "distance",
    "n": [25, 50, 100, 200, 400], "n_e": 200, "reps": 20, "species_column": "species",
    "success": "concinna",
}

# Per-command entries that take precedence over DEFAULTS.
COMMAND_DEFAULTS = {"predict": {"method": "NW"}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="made", description="Minimum average deviance "
                                     "estimation for sufficient dimension reduction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate B and the local fits")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", help="fit JSON path (default fit.json)")
    p.add_argument("--trace", help="write the objective trace as CSV")

    p = sub.add_parser("predict", help="predict from a saved fit")
    p.add_argument("--fit", dest="fit_path", required=True, help="fit JSON")
    p.add_argument("--data", help="CSV with the fit's predictor columns")
    p.add_argument("--offset", help="offset column")
    p.add_argument("--method", choices=("NW", "LL1", "LL2"), help="predictor (default NW)")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--config", help="key=value file")

    p = sub.add_parser("dimension", help="choose the reduction dimension")
    _add_data_args(p)
    _add_model_args(p, d_default=False)
    p.add_argument("--method", choices=("permutation", "bootstrap", "cv"))
    p.add_argument("--level", type=float)
    p.add_argument("--replicates", type=int, help="permutations or bootstrap draws")
    p.add_argument("--summary", choices=("mean", "mean-abs", "median"))
    p.add_argument("--folds", type=int, help="K for cross-validation")
    p.add_argument("--loss", choices=("squared", "absolute", "misclass"))
    p.add_argument("--predictor", choices=("NW", "LL1", "LL2"))
    p.add_argument("--budget", type=float, help="wall-clock budget in seconds")
    p.add_argument("--out-csv", dest="out_csv", help="per-d0 records")
    p.add_argument("--out-json", dest="out_json", help="selected dimension")

    p = sub.add_parser("simulate", help="run a simulation experiment")
    p.add_argument("--design", required=True, help=f"one of {', '.join(DESIGNS)}")
    p.add_argument("--kind", choices=("distance", "prediction"))
    p.add_argument("--n", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--n-e", dest="n_e", type=int, help="test-set size (prediction)")
    p.add_argument("--reps", type=int, help="replicates per sample size")
    p.add_argument("--bandwidth-c", dest="bandwidth_c", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--manifest", help="write a JSON run manifest")
    p.add_argument("--config", help="key=value file")

    p = sub.add_parser("flea-workflow", help="two binomial fits on the flea beetle data")
    p.add_argument("--data", required=True)
    p.add_argument("--species-column", dest="species_column")
    p.add_argument("--success", help="success class (default concinna)")
    p.add_argument("--standardize", type=_bool)
    p.add_argument("--bandwidth-c", dest="bandwidth_c", type=float)
    p.add_argument("--out-dir", dest="out_dir", help="directory for fits and the reduction CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value file")

    p = sub.add_parser("bigmac-workflow", help="Gaussian single-index fit and dimension tests")
    _add_data_args(p, response_default="BigMac")
    p.add_argument("--bandwidth-h", dest="bandwidth_h", type=float, help="default 0.47")
    p.add_argument("--replicates", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--skip-tests", dest="skip_tests", action="store_true")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="key=value file")

    p = sub.add_parser("fishing-workflow", help="Poisson single-index fit with an offset")
    _add_data_args(p, response_default="totabund")
    p.add_argument("--log", type=_csv_list, help="columns replaced by their natural log")
    p.add_argument("--offset-log", dest="offset_log", type=_bool,
                   help="take the log of the offset column (default true)")
    p.add_argument("--bandwidth-h", dest="bandwidth_h", type=float, help="default 169")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value file")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def resolve_options(parser, args) -> argparse.Namespace:
    """Fill unset flags from the config file, then from :data:`DEFAULTS`."""
    sp = _subparser(parser, args.command)
    actions = {a.dest: a for a in sp._actions}
    if getattr(args, "config", None):
        try:
            entries = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        for key, raw in entries.items():
            if key not in actions or key in ("help", "config"):
                raise UsageError(f"unknown config key {key!r} for '{args.command}'")
            if getattr(args, key, None) is not None:
                continue
            act = actions[key]
            try:
                if isinstance(act, argparse._StoreTrueAction):
                    value = _bool(raw)
                else:
                    value = act.type(raw) if act.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if act.choices is not None and value not in act.choices:
                raise UsageError(f"config key {key!r}: {value!r} not in {list(act.choices)}")
            setattr(args, key, value)
    for key, value in {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}.items():
        if key in actions and getattr(args, key, None) is None:
            setattr(args, key, value)
    for key in ("data", "fit_path"):
        path = getattr(args, key, None)
        if path is not None and not Path(path).is_file():
            raise UsageError(f"no such file: {path}")
    return args


# -- shared pieces --------------------------------------------------------------

def _family(args) -> Family:
    try:
        return Family(args.family, getattr(args, "shape", None))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config(args, d: Optional[int] = None) -> MadeConfig:
    c, h = getattr(args, "bandwidth_c", None), getattr(args, "bandwidth_h", None)
    if c is not None and h is not None:
        raise UsageError("give either --bandwidth-c or --bandwidth-h, not both")
    try:
        return MadeConfig(
            d=args.d if d is None else d, c=1.0 if c is None else c, h=h,
            weight_mode=args.weight_mode, init=args.init, dispersion_mode=args.dispersion,
            outer_tol=args.outer_tol, outer_max_iter=args.outer_max_iter, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_data(args):
    if not args.data:
        raise UsageError("--data is required")
    if not args.response:
        raise UsageError("--response is required")
    return ingest_csv(args.data, args.response, args.predictors, args.trials, args.offset,
                      standardize_x=bool(args.standardize), exclude=args.exclude or ())


def _names(fit: MadeFit):
    return list(fit.names) if fit.names is not None else [f"x{k + 1}" for k in range(fit.B.shape[0])]


def format_basis(B, names, labels=None) -> str:
    """B-hat with one row per direction and one column per predictor."""
    B = np.asarray(B).reshape(len(names), -1)
    labels = labels or [f"B{k + 1}" for k in range(B.shape[1])]
    width = max(8, *(len(n) + 1 for n in names))
    lab = max(len(s) for s in labels) if labels else 2
    head = " " * lab + "".join(f"{n:>{width}}" for n in names)
    rows = [f"{labels[k]:<{lab}}" + "".join(f"{v:>{width}.3f}" for v in B[:, k])
            for k in range(B.shape[1])]
    return "\n".join([head, "-" * len(head), *rows])


def _summary(fit: MadeFit, out) -> str:
    lines = [f"family {fit.family.name}, d={fit.d}, n={len(fit.y_train)}, h={fit.bandwidth.h:.4g}",
             f"converged: {fit.converged} after {fit.outer_iterations} outer iteration(s); "
             f"objective {fit.objective:.6g}"]
    if fit.d:
        lines.append(format_basis(fit.B, _names(fit)))
    lines.append(f"fit written to {out}")
    return "\n".join(lines)


def _fit_quietly(data, family, cfg):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(data, family, cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return res


# -- subcommands ------------------------------------------------------------------

def cmd_fit(args) -> int:
    data, prep = _load_data(args)
    family = _family(args)
    res = _fit_quietly(data, family, _config(args))
    out = args.out or "fit.json"
    save_fit(res, out, prep)
    if args.trace:
        write_rows(args.trace, [{"outer_iteration": k + 1, "objective": float(v)}
                                for k, v in enumerate(res.trace)])
    print(_summary(res, out))
    if args.trace:
        print(f"objective trace written to {args.trace}")
    return EXIT_OK


def cmd_predict(args) -> int:
    doc = load_document(args.fit_path)
    res = fit_from_dict(doc)
    if not args.data:
        raise UsageError("--data is required")
    table = read_table(args.data)
    X = numeric_columns(table, _names(res))
    prep = doc.get("preprocessing")
    if prep:
        X, _, _ = standardize(X, prep["center"], prep["scale"])
    offset = numeric_columns(table, [args.offset])[:, 0] if args.offset else None
    method = args.method
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yhat = predict(res, X, method, offset)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = [{"row": i + 1, "prediction": float(v)} for i, v in enumerate(yhat)]
    if args.out:
        write_rows(args.out, rows)
    else:
        print("row,prediction")
        for r in rows:
            print(f"{r['row']},{r['prediction']!r}")
    return EXIT_OK


def cmd_dimension(args) -> int:
    data, _ = _load_data(args)
    family = _family(args)
    cfg = _config(args, d=1)
    if args.method == "cv":
        res = cv_dimension(data, family, cfg, K=args.folds, loss=args.loss,
                           predictor=args.predictor, seed=args.seed, threads=args.threads)
    else:
        res = sequential_dimension(data, family, cfg, method=args.method, level=args.level,
                                   R=args.replicates, seed=args.seed, budget=args.budget,
                                   summary=args.summary, threads=args.threads)
    rows = res.rows()
    if args.out_csv:
        write_rows(args.out_csv, rows, ["method", "d0", "statistic", "p_value"])
    doc = res.to_dict()
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    for r in rows:
        stat = "loss" if args.method == "cv" else "p"
        val = r["statistic"] if args.method == "cv" else r["p_value"]
        print(f"{args.method} d0={r['d0']}: statistic={r['statistic']:.6g} {stat}={val:.4g}")
    print(f"d_hat = {res.d_hat}" + (" (partial: budget exhausted)" if res.partial else ""))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.design not in DESIGNS:
        raise UsageError(f"unknown design {args.design!r}; expected one of {', '.join(DESIGNS)}")
    cfg = None
    if args.bandwidth_c is not None:
        cfg = MadeConfig(d=1, c=args.bandwidth_c)
    if args.kind == "distance":
        rows = run_distance_experiment(args.design, args.n, args.reps, cfg, args.seed,
                                       args.threads)
        cols = ["design", "n", "replicate", "seed", "rho", "converged", "error"]
    else:
        rows = run_prediction_experiment(args.design, args.n, args.n_e, args.reps, cfg,
                                         args.seed, args.threads)
        cols = ["design", "n", "replicate", "seed", "predictor", "metric", "error", "failure"]
    if args.out:
        write_rows(args.out, rows, cols)
    else:
        print(",".join(cols))
        for r in rows:
            print(",".join(repr(float(r[c])) if isinstance(r[c], float) else str(r[c])
                           for c in cols))
    if args.manifest:
        effective = cfg or MadeConfig(d=1, c=DEFAULT_C[DESIGN_FAMILY[args.design]])
        doc = manifest(args.kind, args.design, args.seed, effective, n=args.n, reps=args.reps,
                       n_e=args.n_e if args.kind == "prediction" else 0,
                       family=DESIGN_FAMILY[args.design])
        with open(args.manifest, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
    return EXIT_OK


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _species_key(label: str) -> Optional[str]:
    t = label.strip().lower()
    for s in FLEA_SPECIES:
        if t[:4] == s[:4]:
            return s
    return None


def flea_workflow(path, species_column="species", success="concinna", standardize_x=True,
                  c=1.0, seed=0):
    """Two binomial fits separating ``success`` from each of the other species.

    Returns ``(fit1, fit2, rows, names)`` where ``rows`` holds
    (B1^T x, B2^T x, species) for every observation.
    """
    table = read_table(path)
    names = [n for n in FLEA_PREDICTORS if n in table.header]
    if len(names) != len(FLEA_PREDICTORS):
        missing = sorted(set(FLEA_PREDICTORS) - set(names))
        raise DataError(f"flea data lacks predictor column(s): {', '.join(missing)}")
    labels = [_species_key(s) for s in table.column(species_column)]
    unknown = sorted({s for s, k in zip(table.column(species_column), labels) if k is None})
    if unknown:
        raise DataError(f"unrecognised species label(s): {', '.join(unknown)}")
    counts = {s: labels.count(s) for s in FLEA_SPECIES}
    if any(v == 0 for v in counts.values()):
        raise DataError(f"flea data must contain all three species, got counts {counts}")
    succ = _species_key(success)
    if succ is None:
        raise UsageError(f"unknown success class {success!r}")
    X = numeric_columns(table, names)
    if standardize_x:
        X, _, _ = standardize(X)
    labels = np.array(labels)
    others = [s for s in FLEA_SPECIES if s != succ]
    fits = []
    for other in others:
        idx = np.flatnonzero((labels == succ) | (labels == other))
        y = (labels[idx] == succ).astype(float)
        data = Dataset(y, X[idx], names=names)
        fits.append(_fit_quietly(data, Family("binomial"), MadeConfig(d=1, c=c, seed=seed)))
    P1, P2 = X @ fits[0].B[:, 0], X @ fits[1].B[:, 0]
    rows = [{"B1x": float(a), "B2x": float(b), "species": s} for a, b, s in zip(P1, P2, labels)]
    return fits[0], fits[1], rows, names


def cmd_flea(args) -> int:
    f1, f2, rows, names = flea_workflow(args.data, args.species_column, args.success,
                                        True if args.standardize is None else args.standardize,
                                        args.bandwidth_c or 1.0, args.seed)
    out = _out_dir(args)
    save_fit(f1, out / "flea_fit1.json")
    save_fit(f2, out / "flea_fit2.json")
    write_rows(out / "flea_reductions.csv", rows, ["B1x", "B2x", "species"])
    print(f"fit 1: n={len(f1.y_train)}, h={f1.bandwidth.h:.4g}, converged={f1.converged}")
    print(f"fit 2: n={len(f2.y_train)}, h={f2.bandwidth.h:.4g}, converged={f2.converged}")
    print(format_basis(np.column_stack([f1.B, f2.B]), names, ["B1", "B2"]))
    print(f"reductions written to {out / 'flea_reductions.csv'}")
    return EXIT_OK


def bigmac_workflow(path, response="BigMac", predictors=None, h=0.47, standardize_x=True,
                    replicates=100, level=0.05, seed=0, run_tests=True, threads=None):
    """Gaussian single-index fit plus permutation and bootstrap dimension selection."""
    predictors = list(predictors or BIGMAC_PREDICTORS)
    data, _ = ingest_csv(path, response, predictors, standardize_x=standardize_x)
    family = Family("gaussian")
    cfg = MadeConfig(d=1, h=h, seed=seed)
    res = _fit_quietly(data, family, cfg)
    tests = {}
    if run_tests:
        for method in ("permutation", "bootstrap"):
            tests[method] = sequential_dimension(data, family, cfg, method=method, level=level,
                                                 R=replicates, seed=seed, threads=threads)
    return res, tests


def cmd_bigmac(args) -> int:
    res, tests = bigmac_workflow(args.data, args.response or "BigMac", args.predictors,
                                 args.bandwidth_h or 0.47,
                                 True if args.standardize is None else args.standardize,
                                 args.replicates, args.level, args.seed, not args.skip_tests,
                                 args.threads)
    out = _out_dir(args)
    save_fit(res, out / "bigmac_fit.json")
    print(_summary(res, out / "bigmac_fit.json"))
    for method, t in tests.items():
        write_rows(out / f"bigmac_{method}.csv", t.rows(), ["method", "d0", "statistic", "p_value"])
        ps = ", ".join(f"d0={r.d0}: p={r.p_value:.3f}" for r in t.records)
        print(f"{method}: {ps}; d_hat = {t.d_hat}")
    return EXIT_OK


def fishing_workflow(path, response="totabund", predictors=None, offset=None, log_columns=None,
                     h=169.0, standardize_x=False, seed=0, offset_log=True):
    """Poisson single-index fit with an optional offset.

    ``log_columns`` (default: meandepth and sweptarea when present) are
    replaced by their natural logarithm; the offset column is logged too
    unless ``offset_log`` is False.  Returns ``(fit, r2)`` with
    r2 = corr(Y, Yhat)^2 on the training data.
    """
    table = read_table(path)
    if predictors is None:
        predictors = [c for c in ("density", "meandepth", "sweptarea") if c in table.header]
    predictors = list(predictors)
    if log_columns is None:
        log_columns = [c for c in ("meandepth", "sweptarea") if c in predictors]
    X = numeric_columns(table, predictors)
    for k, name in enumerate(predictors):
        if name in log_columns:
            if np.any(X[:, k] <= 0):
                raise DataError(f"column {name!r} must be positive to take logs")
            X[:, k] = np.log(X[:, k])
    names = [f"log({n})" if n in log_columns else n for n in predictors]
    o = None
    if offset:
        o = numeric_columns(table, [offset])[:, 0]
        if offset_log:
            if np.any(o <= 0):
                raise DataError(f"offset column {offset!r} must be positive to take logs")
            o = np.log(o)
    y = numeric_columns(table, [response])[:, 0]
    if standardize_x:
        X, _, _ = standardize(X)
    data = Dataset(y, X, offset=o, names=names)
    res = _fit_quietly(data, Family("poisson"), MadeConfig(d=1, h=h, seed=seed))
    r2 = float(np.corrcoef(y, res.fitted)[0, 1] ** 2)
    return res, r2


def cmd_fishing(args) -> int:
    res, r2 = fishing_workflow(args.data, args.response or "totabund", args.predictors,
                               args.offset, args.log, args.bandwidth_h or 169.0,
                               bool(args.standardize), args.seed,
                               True if args.offset_log is None else args.offset_log)
    out = _out_dir(args)
    save_fit(res, out / "fishing_fit.json")
    print(_summary(res, out / "fishing_fit.json"))
    print(f"R^2 = Cov^2(Y, Yhat) / (Var Y Var Yhat) = {r2:.4f}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit, "predict": cmd_predict, "dimension": cmd_dimension,
    "simulate": cmd_simulate, "flea-workflow": cmd_flea, "bigmac-workflow": cmd_bigmac,
    "fishing-workflow": cmd_fishing,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        args = resolve_options(parser, args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SupportError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
