"""Command-line front end: solve | verify | sweep | figures."""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from .errors import InvalidParameterError, NumericalError
from .experiments import (
    BOUNDARY_COLUMNS,
    CURVE_COLUMNS,
    FIGURES,
    SWEEP_COLUMNS,
    SweepSpec,
    boundary_rows,
    checks_report,
    curve_rows,
    make_params,
    manifest,
    params_record,
    run_sweep,
    run_verification,
    write_csv,
    write_json,
)
from .model import b1_closed_form
from .montecarlo import McConfig
from .pde import PdeConfig, PiGrid
from .solver import solve_sequence

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
MODEL_KEYS = ("mu0", "mu1", "sigma", "r", "N")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def read_config(path):
    """Flat key=value file; '#' starts a comment. Keys mirror long flag names."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def default_outdir():
    return os.environ.get("STOPGRID_OUTDIR", "stopgrid_out")


def _model_flags(ap):
    ap.add_argument("--mu0", type=float)
    ap.add_argument("--mu1", type=float)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--r", type=float)
    ap.add_argument("--N", type=int)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--total-learning", type=float)
    _numeric_flags(ap)


def _numeric_flags(ap):
    ap.add_argument("--grid", type=int, default=2001, help="number of belief grid nodes")
    ap.add_argument("--dt-target", type=float, help="PDE step; default 64 steps per eps")
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--out", help="output directory (default $STOPGRID_OUTDIR or ./stopgrid_out)")
    ap.add_argument("--config", help="key=value file; flags override it")


def _mc_flags(ap):
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--start-pi", type=float, default=0.3)
    ap.add_argument("--t-max", type=float)


def build_parser():
    ap = _Parser(prog="stopgrid", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve the boundary sequence and write CSVs")
    _model_flags(s)

    v = sub.add_parser("verify", help="diagnostics plus Monte Carlo cross-checks")
    _model_flags(v)
    _mc_flags(v)
    v.add_argument("--boundaries", help="CSV with columns n,b_n to evaluate instead of the solved ones")

    w = sub.add_parser("sweep", help="one solve per value of a parameter axis")
    _model_flags(w)
    w.add_argument("--axis", choices=("sigma", "r", "eps_total", "N", "mu_pair"))
    w.add_argument("--values", help="comma list; mu_pair entries are mu0:mu1")

    f = sub.add_parser("figures", help="data series behind the figures")
    group = f.add_mutually_exclusive_group()
    group.add_argument("--figure", type=int, choices=sorted(FIGURES))
    group.add_argument("--all", action="store_true")
    f.add_argument("--outdir")
    f.add_argument("--grid", type=int, default=2001)
    f.add_argument("--dt-target", type=float)
    f.add_argument("--config")
    return ap


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(conf) - known - {"config"})
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**conf)
        args = ap.parse_args(argv)
        for a in sub._actions:
            # values coming from the config file arrive as strings
            val = getattr(args, a.dest, None)
            if isinstance(val, str) and a.type is not None and a.dest in conf:
                try:
                    setattr(args, a.dest, a.type(val))
                except ValueError:
                    raise InputError(f"config key {a.dest}: bad value {val!r}") from None
            elif a.dest == "all" and isinstance(val, str):
                args.all = val.strip().lower() in ("1", "true", "yes")
    return args


def resolve_params(args):
    missing = [k for k in MODEL_KEYS if getattr(args, k) is None]
    if missing:
        raise InputError("missing model parameters: " + ", ".join("--" + m for m in missing))
    return make_params(args.mu0, args.mu1, args.sigma, args.r, args.N,
                       total_learning=args.total_learning, eps=args.eps)


def _numerics(args):
    if args.grid < 3:
        raise InvalidParameterError("grid needs at least 3 nodes")
    if args.dt_target is not None and not args.dt_target > 0:
        raise InvalidParameterError("dt-target must be positive")
    if not 0.0 <= args.theta <= 1.0:
        raise InvalidParameterError("theta must lie in [0, 1]")
    return PiGrid(args.grid), PdeConfig(theta=args.theta, dt_target=args.dt_target)


def _outdir(path):
    out = path or default_outdir()
    os.makedirs(out, exist_ok=True)
    return out


def _resolved(args):
    skip = {"command", "config", "out", "outdir"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_solve(args):
    p = resolve_params(args)
    grid, pde = _numerics(args)
    res = solve_sequence(p, grid, pde)
    out = _outdir(args.out)
    write_csv(os.path.join(out, "boundaries.csv"), BOUNDARY_COLUMNS, boundary_rows(res, "run000"))
    write_csv(os.path.join(out, "curves.csv"), CURVE_COLUMNS, curve_rows(res, "run000"))
    write_json(os.path.join(out, "manifest.json"),
               manifest("solve", [("run000", p)], grid, pde,
                        {"arguments": _resolved(args), "b1_numeric": res.b1_numeric}))
    for lv in res.levels:
        print(f"n={lv.n:4d}  b_n={lv.b_n:.10f}")
    return EXIT_OK


def read_boundary_file(path, n_rights):
    import csv
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read boundaries {path}: {exc}") from None
    try:
        pairs = sorted((int(r["n"]), float(r["b_n"])) for r in rows)
    except (KeyError, ValueError):
        raise InputError(f"{path}: need numeric columns n and b_n") from None
    if [n for n, _ in pairs] != list(range(1, n_rights + 1)):
        raise InputError(f"{path}: expected rows n=1..{n_rights}")
    b = np.array([x for _, x in pairs])
    if not np.all((b > 0) & (b < 1)):
        raise InputError(f"{path}: boundaries must lie in (0, 1)")
    return b


def cmd_verify(args):
    p = resolve_params(args)
    grid, pde = _numerics(args)
    if not 0.0 < args.start_pi < 1.0:
        raise InvalidParameterError("start-pi must lie in (0, 1)")
    mc = McConfig(n_paths=args.paths, dt=args.dt, t_max=args.t_max, seed=args.seed)
    supplied = read_boundary_file(args.boundaries, p.n_rights) if args.boundaries else None
    out = _outdir(args.out)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        checks = run_verification(p, grid, pde, mc, args.start_pi, supplied)
    report = checks_report(checks)
    report["parameters"] = params_record(p)
    report["arguments"] = _resolved(args)
    write_json(os.path.join(out, "verify_report.json"), report)
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{status}  {c.name}: value={c.value:.6g} reference={c.reference:.6g} "
                     f"tol={c.tolerance:.3g} {c.detail}".rstrip())
    with open(os.path.join(out, "verify_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def parse_values(axis, text):
    if not text:
        raise InputError("--values is required")
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        if axis == "mu_pair":
            pairs = [tuple(float(x) for x in t.split(":")) for t in items]
            if any(len(pr) != 2 for pr in pairs):
                raise ValueError
            return pairs
        if axis == "N":
            return [int(t) for t in items]
        return [float(t) for t in items]
    except ValueError:
        raise InputError(f"cannot parse values {text!r} for axis {axis}") from None


def cmd_sweep(args):
    if args.axis is None:
        raise InputError("--axis is required")
    base = resolve_params(args)
    if args.dt_target is not None and not args.dt_target > 0:
        raise InvalidParameterError("dt-target must be positive")
    spec = SweepSpec(base, args.axis, parse_values(args.axis, args.values),
                     grid_m=args.grid, dt_target=args.dt_target)
    result = run_sweep(spec)
    out = _outdir(args.out)
    write_csv(os.path.join(out, "sweep.csv"), SWEEP_COLUMNS, result.rows)
    write_json(os.path.join(out, "sweep_summary.json"), {
        "axis": spec.axis,
        "failed_runs": result.failed,
        "summaries": result.summaries,
        "runs": [dict(run_id=rid, **params_record(p)) for rid, _, p in spec.runs()],
        "arguments": _resolved(args),
    })
    for s in result.summaries:
        print(f"{'PASS' if s['passed'] else 'FAIL'}  {s['name']}")
    if result.failed:
        print(f"{result.failed} run(s) failed", file=sys.stderr)
    return EXIT_VERIFY if result.failed else EXIT_OK


def cmd_figures(args):
    if not args.all and args.figure is None:
        raise InputError("give --figure N or --all")
    figs = sorted(FIGURES) if args.all else [args.figure]
    grid = PiGrid(args.grid)
    pde = PdeConfig(dt_target=args.dt_target)
    out = _outdir(args.outdir)
    for fig in figs:
        spec = FIGURES[fig]
        rows = []
        for run_id, p in spec["runs"]:
            res = solve_sequence(p, grid, pde)
            d = res.derived
            if spec["kind"] == "curves":
                rows.extend(curve_rows(res, run_id, spec["levels"]))
            else:
                for row in boundary_rows(res, run_id):
                    rows.append(row + [d.k, d.rho, d.gamma, b1_closed_form(d)])
        header = CURVE_COLUMNS if spec["kind"] == "curves" else \
            BOUNDARY_COLUMNS + ["k", "rho", "gamma", "b1_closed_form"]
        write_csv(os.path.join(out, f"figure{fig}.csv"), header, rows)
        write_json(os.path.join(out, f"figure{fig}_manifest.json"),
                   manifest("figures", spec["runs"], grid, pde, {"figure": fig}))
        print(f"figure {fig}: {len(spec['runs'])} run(s) -> figure{fig}.csv")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep, "figures": cmd_figures}


def main(argv=None):
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except (InputError, InvalidParameterError) as exc:
        print(f"stopgrid: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"stopgrid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
