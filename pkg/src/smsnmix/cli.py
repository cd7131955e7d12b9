"""Command-line interface: ``smsnmix fit | impute | simulate``.

Exit status: 0 when the fit converged, 2 when it stopped at ``--max-iter``,
1 on any error.  Artifacts are deterministic given input, flags and seed;
wall-clock timings are only written with ``--record-timings``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bench import ExperimentGrid, ari_table, metric_table, run_grid
from .conditioning import ObservationSet, estep
from .dataio import (SCHEMA_VERSION, dump_json, file_digest, load_csv, load_json,
                     model_from_dict, model_to_dict, write_imputed_csv)
from .ecm import FitConfig, fit
from .exceptions import EmptyComponent, SmsnMixError
from .family import FAMILY_LABELS, smsn_moments

log = logging.getLogger("smsnmix")

FAMILY_CHOICES = ("skew-normal", "skew-t", "skew-slash", "skew-vgamma")


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("SMSNMIX_THREADS")
    return max(1, int(env)) if env else 1


def _echo(args):
    skip = {"func", "record_timings"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(command, args, inputs, timings=None):
    m = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": _echo(args),
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "tool_version": __version__,
    }
    if timings is not None:
        m["timings"] = timings
    return m


def _add_fit_flags(p, required=True):
    p.add_argument("--family", choices=FAMILY_CHOICES, default="skew-normal" if not required else None,
                   required=required)
    p.add_argument("--clusters", type=int, default=2 if not required else None, required=required)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--init", choices=("kmeans", "random"), default="kmeans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-skewness", choices=("moments", "zero"), default="moments",
                   help="start skewness from cluster skewness or at zero (zero keeps a "
                        "skew-normal fit symmetric)")


def _fit_config(args):
    return FitConfig(n_components=args.clusters, family=args.family, tol=args.tol,
                     max_iter=args.max_iter, init=args.init, seed=args.seed,
                     init_skewness=args.init_skewness)


def _mixture_mean(model):
    return sum(w * smsn_moments(c, law)[0] for w, c, law in zip(model.weights, model.components, model.laws))


def _report_dict(rep, ds, args):
    trace = rep.loglik_trace
    return {
        "schema_version": SCHEMA_VERSION,
        "columns": ds.columns,
        "log_transform": bool(ds.log_transformed),
        "model": model_to_dict(rep.model),
        "clusters": rep.model.G,
        "family": FAMILY_LABELS[rep.model.kind],
        "loglik": float(trace[-1]),
        "loglik_trace": [float(v) for v in trace],
        "loglik_nondecreasing": bool(np.all(np.diff(trace) >= -1e-8 * max(1.0, abs(trace[-1])))),
        "paper_bic": float(rep.bic),
        "n_params": int(rep.n_params),
        "n_obs": int(rep.n_obs),
        "converged": bool(rep.converged),
        "n_iter": int(rep.n_iter),
        "row_index": [int(i) for i in ds.row_index],
        "dropped_rows": [int(i) for i in ds.dropped_rows],
        "responsibilities": rep.responsibilities.tolist(),
        "labels": [int(v) for v in rep.labels],
        "notes": list(rep.notes),
    }


def cmd_fit(args):
    t0 = time.perf_counter()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_csv(args.input, header=not args.no_header, log_transform=args.log_transform)
    rep = fit(ds.X, _fit_config(args))
    t1 = time.perf_counter()
    dump_json(_report_dict(rep, ds, args), out / "report.json")
    write_imputed_csv(out / "imputed.csv", ds, rep.imputed, _mixture_mean(rep.model))
    timings = {"fit_seconds": t1 - t0, "total_seconds": time.perf_counter() - t0} if args.record_timings else None
    dump_json(_manifest("fit", args, [args.input], timings), out / "manifest.json")
    if not rep.converged:
        print(f"stopped after {rep.n_iter} iterations without meeting tol={args.tol}", file=sys.stderr)
        return 2
    return 0


def cmd_impute(args):
    t0 = time.perf_counter()
    status = 0
    if args.model:
        report = load_json(args.model)
        model = model_from_dict(report["model"])
        log_tf = bool(report.get("log_transform", False)) if args.log_transform is None else args.log_transform
        ds = load_csv(args.input, header=not args.no_header, log_transform=log_tf)
        if ds.p != model.p:
            raise SmsnMixError(f"model has dimension {model.p} but data have {ds.p} columns")
        data = ObservationSet(ds.X)
        imputed = np.where(data.observed, data.X, estep(model, data).imputed)
    else:
        if args.family is None or args.clusters is None:
            raise SmsnMixError("impute needs --model or both --family and --clusters")
        ds = load_csv(args.input, header=not args.no_header, log_transform=bool(args.log_transform))
        rep = fit(ds.X, _fit_config(args))
        model, imputed = rep.model, rep.imputed
        status = 0 if rep.converged else 2
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_imputed_csv(out, ds, imputed, _mixture_mean(model))
    inputs = [args.input] + ([args.model] if args.model else [])
    timings = {"total_seconds": time.perf_counter() - t0} if args.record_timings else None
    dump_json(_manifest("impute", args, inputs, timings), Path(str(out) + ".manifest.json"))
    return status


def _write_table(path, header, body):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version"] + header)
        for row in body:
            # shortest round-trip repr: exact, and 0.4 stays 0.4
            w.writerow([SCHEMA_VERSION] + [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _grid_from_args(args):
    common = dict(replicates=args.replicates, ns=tuple(args.n), max_iter=args.max_iter, tol=args.tol)
    if args.rates:
        common["rates"] = tuple(args.rates)
    if args.grid == "paper":
        return ExperimentGrid.paper(**common), []
    if args.grid == "own":
        return ExperimentGrid(**common), []
    spec = load_json(args.grid)
    for k in ("rates", "overlaps", "ns", "pairs"):
        if k in spec:
            common[k] = tuple(tuple(v) if isinstance(v, list) else v for v in spec[k])
    for k in ("replicates", "max_iter", "tol"):
        if k in spec:
            common[k] = spec[k]
    try:
        return ExperimentGrid(**common), [args.grid]
    except (TypeError, ValueError) as exc:
        raise SmsnMixError(f"bad grid manifest {args.grid}: {exc}") from None


def cmd_simulate(args):
    t0 = time.perf_counter()
    grid, inputs = _grid_from_args(args)
    out = Path(args.output)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    rows = run_grid(grid, seed=args.seed, workers=_threads(args))
    _write_table(out / "metrics" / "ari.csv", *ari_table(rows))
    _write_table(out / "metrics" / "ab.csv", *metric_table(rows, "ab"))
    _write_table(out / "metrics" / "rmse.csv", *metric_table(rows, "rmse"))
    timings = {"total_seconds": time.perf_counter() - t0} if args.record_timings else None
    m = _manifest("simulate", args, inputs, timings)
    m["grid"] = grid.to_dict()
    dump_json(m, out / "manifest.json")
    flagged = [r.key for r in rows if r.flagged]
    if flagged:
        print(f"{len(flagged)} cells had more than 20% failed replicates", file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="smsnmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"smsnmix {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default: $SMSNMIX_THREADS or 1)")
        p.add_argument("--record-timings", action="store_true",
                       help="add wall-clock timings to the manifest (breaks byte-identity)")

    f = sub.add_parser("fit", help="fit a mixture and write report, imputations and manifest")
    f.add_argument("--input", required=True)
    _add_fit_flags(f)
    f.add_argument("--log-transform", action="store_true")
    f.add_argument("--no-header", action="store_true")
    f.add_argument("--output", required=True, help="output directory")
    common(f)
    f.set_defaults(func=cmd_fit)

    i = sub.add_parser("impute", help="fill missing cells from a saved or freshly fitted model")
    i.add_argument("--input", required=True)
    i.add_argument("--model", help="report.json from a previous fit")
    i.add_argument("--family", choices=FAMILY_CHOICES)
    i.add_argument("--clusters", type=int)
    i.add_argument("--tol", type=float, default=1e-5)
    i.add_argument("--max-iter", type=int, default=500)
    i.add_argument("--init", choices=("kmeans", "random"), default="kmeans")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--init-skewness", choices=("moments", "zero"), default="moments")
    i.add_argument("--log-transform", action="store_true", default=None)
    i.add_argument("--no-header", action="store_true")
    i.add_argument("--output", required=True, help="output CSV path")
    common(i)
    i.set_defaults(func=cmd_impute)

    s = sub.add_parser("simulate", help="run the simulation grid and write metric tables")
    s.add_argument("--grid", default="own",
                   help="'paper' (all 16 family pairs), 'own' (each family on its own data) "
                        "or a JSON grid manifest")
    s.add_argument("--replicates", type=int, default=20)
    s.add_argument("--n", type=int, nargs="+", default=[200])
    s.add_argument("--rates", type=float, nargs="+")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--output", required=True, help="output directory")
    common(s)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except EmptyComponent as exc:
        print(f"error: component {exc.component} emptied: {exc}", file=sys.stderr)
        return 1
    except (SmsnMixError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
