"""Command line entry point: simulate, analytic, estimate, trees, verify.

Type indices on the command line and in files are 1-based.  Errors map to
the ``exit_code`` of their class; outputs are written only after the whole
computation succeeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .cumulants import integrated_cumulant, motif_series, tree_contributions
from .density import (DensityContext, covariance_density_grid, cumulant_density, third_density_grid)
from .errors import ConfigError, HawkesError
from .estimate import (covariance_density_estimate, empirical_integrated_cumulant, same_cluster_coincidence)
from .model import build_summary, default_grid, load_model, renewal_density
from .simulate import EventStream, simulate_clusters, simulate_thinning
from .trees import count_trees, enumerate_trees
from .verify import VerifyConfig, run_verify


def _positive(kind=float):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return value

    return parse


def _existing(text):
    if not Path(text).is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return text


def _types(text):
    try:
        out = tuple(int(t) - 1 for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"types must be comma-separated integers: {text!r}")
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError("types are 1-based")
    return out


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}")


def _burn_in(text):
    if text == "auto":
        return "auto"
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("burn-in must be non-negative")
    return value


def _write_text(path, text: str) -> None:
    """Write atomically, so a failure never leaves a partial file."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _load(args):
    return load_model(args.model, stability_margin=args.stability_margin)


def _renewal(args, model):
    dt, horizon = default_grid(model)
    dt = args.dt or dt
    horizon = args.horizon or horizon
    horizon = math.ceil(horizon / dt - 1e-9) * dt
    return renewal_density(model, dt, horizon, tol=args.tol)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    model = _load(args)
    if args.sampler == "clusters":
        stream = simulate_clusters(model, args.T, burn_in=args.burn_in, seed=args.seed,
                                   max_cluster_events=args.max_cluster_events)
    else:
        stream = simulate_thinning(model, args.T, burn_in=args.burn_in, seed=args.seed)
    out = Path(args.out)
    with tempfile.TemporaryDirectory(dir=out.parent or ".") as tmp:
        tmp_path = Path(tmp) / out.name
        stream.to_csv(tmp_path)
        os.replace(str(tmp_path) + ".meta.json", str(out) + ".meta.json")
        os.replace(tmp_path, out)
    print(f"{len(stream)} events written to {out}", file=sys.stderr)
    return 0


def _atoms_json(atoms: dict) -> list:
    return [{"groups": [[p + 1 for p in g] for g in key], "coefficient": float(v)} for key, v in atoms.items()]


def cmd_analytic(args) -> int:
    model = _load(args)
    summary = build_summary(model, tol=args.tol)
    types = args.types
    for t in types:
        if t >= model.d:
            raise ConfigError(f"type {t + 1} out of range for d={model.d}")
    result = {"types": [t + 1 for t in types]}
    csv_text = None
    if args.density:
        n = len(types)
        renewal = _renewal(args, model)
        ctx = DensityContext(model, renewal, summary)
        result.update({"mode": "density", "dt": renewal.dt, "horizon": renewal.horizon})
        if args.lags is not None or not args.csv:
            lags = args.lags or ()
            if len(lags) != n - 1:
                raise ConfigError(f"--lags needs {n - 1} values for order {n}")
            value = cumulant_density(model, renewal, types, (0.0,) + tuple(lags), summary,
                                     allow_order4=args.allow_order4, ctx=ctx)
            result.update({"lags": list(lags), "value": value.continuous, "atoms": _atoms_json(value.atoms)})
        if args.csv:
            if args.lag_max is None:
                raise ConfigError("--csv with --density needs --lag-max")
            step = args.lag_step or renewal.dt
            grid = np.round(np.arange(-round(args.lag_max / step), round(args.lag_max / step) + 1) * step, 12)
            if n == 2:
                vals = covariance_density_grid(ctx, types[0], types[1], grid)
                csv_text = _csv(["lag", "density"], zip(grid, vals))
            elif n == 3:
                vals = third_density_grid(ctx, types, grid, grid)
                rows = ((a, b, vals[x, y]) for x, a in enumerate(grid) for y, b in enumerate(grid))
                csv_text = _csv(["lag2", "lag3", "density"], rows)
            else:
                raise ConfigError("density grids are available for orders 2 and 3")
    else:
        result.update({"mode": "integrated", "value": integrated_cumulant(summary, types, n_max=args.n_max)})
        if args.per_tree:
            result["per_tree_terms"] = [{"tree": t.encode(), "value": v}
                                        for t, v in tree_contributions(summary, types, n_max=args.n_max)]
    if args.motif_max_power is not None:
        result["partial_sums"] = motif_series(summary, types, args.motif_max_power, n_max=args.n_max).tolist()
    text = _json(result)
    if csv_text is not None:
        _write_text(args.csv, csv_text)
    _write_text(args.out, text)
    return 0


def _lag_edges(args):
    if args.lag_max is None or args.lag_step is None:
        raise ConfigError("density and coincidence modes need --lag-max and --lag-step")
    k = int(round(args.lag_max / args.lag_step))
    if k < 1:
        raise ConfigError("--lag-max must be at least one --lag-step")
    return np.arange(-k, k + 1) * args.lag_step


def cmd_estimate(args) -> int:
    stream = EventStream.from_csv(args.events, T_obs=args.T)
    model = _load(args) if args.model else None
    types = args.types
    for t in types:
        if t >= stream.d:
            raise ConfigError(f"type {t + 1} out of range for d={stream.d}")
    n = len(types)
    if args.mode == "integrated":
        if args.bin_width is None:
            raise ConfigError("integrated mode needs --bin-width")
        e = empirical_integrated_cumulant(stream, types, args.bin_width, margin=args.margin or 0.0,
                                          model=model)
        result = {"mode": "integrated", "types": [t + 1 for t in types], "bin_width": args.bin_width,
                  "value": e.value, "se": e.se, "n_samples": e.n_samples, "method": e.method}
        text = _json(result) if not str(args.out).endswith(".csv") else _csv(
            ["value", "se", "n_samples", "method"], [(e.value, e.se, e.n_samples, e.method)])
        _write_text(args.out, text)
        return 0
    edges = _lag_edges(args)
    if args.mode == "density":
        if n != 2:
            raise ConfigError("density mode takes exactly two types")
        est = covariance_density_estimate(stream, types[0], types[1], edges, margin=args.margin,
                                          n_batches=args.batches)
    else:
        if n not in (2, 3):
            raise ConfigError("coincidence mode takes two or three types")
        est = same_cluster_coincidence(stream, types, edges if n == 2 else (edges, edges),
                                       margin=args.margin, n_batches=args.batches)
    if n == 2:
        header = ["lag_lo", "lag_hi", "value", "se", "n_samples"]
        rows = [(edges[b], edges[b + 1], est.value[b], est.se[b], int(est.n_samples[b])) for b in range(len(edges) - 1)]
    else:
        header = ["lag2_lo", "lag2_hi", "lag3_lo", "lag3_hi", "value", "se", "n_samples"]
        rows = [(edges[a], edges[a + 1], edges[b], edges[b + 1], est.value[a, b], est.se[a, b], int(est.n_samples[a, b]))
                for a in range(len(edges) - 1) for b in range(len(edges) - 1)]
    if str(args.out).endswith(".csv"):
        text = _csv(header, rows)
    else:
        text = _json({"mode": args.mode, "types": [t + 1 for t in types], "method": est.method,
                      "bins": [dict(zip(header, map(lambda x: x if isinstance(x, int) else float(x), r))) for r in rows]})
    _write_text(args.out, text)
    return 0


def cmd_trees(args) -> int:
    lines = [str(count_trees(args.n))]
    if not args.count_only:
        lines += [t.encode() for t in enumerate_trees(args.n, n_max=args.n_max)]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_verify(args) -> int:
    model = _load(args)
    config = VerifyConfig(model, seed=args.seed, T_obs=args.T, burn_in=args.burn_in, bin_width=args.bin_width,
                          lag_step=args.lag_step, n_batches=args.batches, third_order=not args.no_third_order)
    report = run_verify(config)
    _write_text(args.out, _json(report.to_dict()))
    failed = [c.name for c in report.checks if not c.passed]
    print(f"{len(report.checks) - len(failed)}/{len(report.checks)} checks passed", file=sys.stderr)
    return 0 if not failed else 1


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkes-cumulants",
                                description="Cumulants of multivariate linear Hawkes processes.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def model_opts(sp, required=True):
        sp.add_argument("--model", type=_existing, required=required, help="JSON model file")
        sp.add_argument("--stability-margin", type=_positive(), default=1e-6)

    def grid_opts(sp):
        sp.add_argument("--dt", type=_positive(), help="renewal grid step (default: from kernel timescales)")
        sp.add_argument("--horizon", type=_positive(), help="renewal horizon (default: tail mass below 1e-6)")
        sp.add_argument("--tol", type=_positive(), default=1e-8, help="renewal iteration tolerance")

    s = sub.add_parser("simulate", help="simulate an event stream")
    model_opts(s)
    s.add_argument("--T", type=_positive(), required=True, help="observation horizon")
    s.add_argument("--burn-in", type=_burn_in, default="auto")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--sampler", choices=("clusters", "thinning"), default="clusters")
    s.add_argument("--max-cluster-events", type=_positive(int), default=1_000_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analytic", help="integrated cumulants, densities and motif series")
    model_opts(a)
    grid_opts(a)
    a.add_argument("--types", type=_types, required=True, help="1-based types, e.g. 1,2,3")
    mode = a.add_mutually_exclusive_group()
    mode.add_argument("--integrated", action="store_true", help="integrated cumulant (default)")
    mode.add_argument("--density", action="store_true", help="cumulant density at given lags")
    a.add_argument("--lags", type=_floats, help="lags of events 2..n relative to event 1")
    a.add_argument("--motif-max-power", type=int)
    a.add_argument("--per-tree", action="store_true", help="include per-tree terms")
    a.add_argument("--n-max", type=_positive(int), default=8)
    a.add_argument("--allow-order4", action="store_true")
    a.add_argument("--csv", help="write the density over a lag grid to this CSV file")
    a.add_argument("--lag-max", type=_positive())
    a.add_argument("--lag-step", type=_positive())
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_analytic)

    e = sub.add_parser("estimate", help="estimate cumulants from an event CSV")
    e.add_argument("--events", type=_existing, required=True)
    model_opts(e, required=False)
    e.add_argument("--types", type=_types, required=True)
    e.add_argument("--mode", choices=("integrated", "density", "coincidence"), default="integrated")
    e.add_argument("--bin-width", type=_positive())
    e.add_argument("--lag-max", type=_positive())
    e.add_argument("--lag-step", type=_positive())
    e.add_argument("--margin", type=float, help="interior-window margin (default: largest lag)")
    e.add_argument("--batches", type=_positive(int), default=50)
    e.add_argument("--T", type=_positive(), help="observation horizon if the metadata sidecar is missing")
    e.add_argument("--out", default="-", help="output path; .csv for CSV, otherwise JSON")
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("trees", help="count or list leaf-labeled trees")
    t.add_argument("--n", type=_positive(int), required=True)
    t.add_argument("--count-only", action="store_true")
    t.add_argument("--n-max", type=_positive(int), default=8)
    t.add_argument("--out", default="-")
    t.set_defaults(func=cmd_trees)

    v = sub.add_parser("verify", help="simulate and compare estimates against analytic values")
    model_opts(v)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--T", type=_positive(), default=1e5)
    v.add_argument("--burn-in", type=_burn_in, default="auto")
    v.add_argument("--bin-width", type=_positive())
    v.add_argument("--lag-step", type=_positive())
    v.add_argument("--batches", type=_positive(int), default=50)
    v.add_argument("--no-third-order", action="store_true")
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HawkesError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
