"""Figure presets, parameter sweeps, verification runs and their CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import InvalidParameterError, NumericalError
from .model import ModelParams, b1_closed_form, v1_eval
from .montecarlo import McConfig, compare_strategies, estimate_f, estimate_single_stops
from .pde import GridFunction, PdeConfig, PiGrid
from .solver import SolveResult, diagnostics, solve_sequence

BOUNDARY_COLUMNS = ["run_id", "n", "u_n", "b_n", "pi0_n", "a_n", "smooth_fit_residual"]
CURVE_COLUMNS = ["run_id", "n", "pi", "V_n", "F_n", "g_n", "lower_bound", "upper_bound"]
SWEEP_COLUMNS = ["run_id", "axis", "value", "k", "rho", "n", "b_n", "pi0_n",
                 "smooth_fit_residual", "status"]
AXES = ("sigma", "r", "eps_total", "N", "mu_pair")


def fmt(x):
    """12 significant digits; integers and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return "" if x is None else str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError("ragged CSV row")
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(header, rows))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- figure presets -----------------------------------------------------------

BASE = dict(mu0=-1.0, mu1=1.0, sigma=4.0, r=0.1, n_rights=10, total_learning=1.0)


def make_params(mu0, mu1, sigma, r, n_rights, total_learning=None, eps=None) -> ModelParams:
    if (total_learning is None) == (eps is None):
        raise InvalidParameterError("give exactly one of eps and total_learning")
    if eps is None:
        return ModelParams.from_total_learning(mu0, mu1, sigma, r, n_rights, total_learning)
    return ModelParams(mu0, mu1, sigma, r, n_rights, eps)


def _variant(**changes):
    kw = dict(BASE)
    kw.update(changes)
    return make_params(**kw)


FIGURES: Dict[int, dict] = {
    1: {"kind": "curves", "levels": (1,), "runs": [("base", _variant())]},
    2: {"kind": "curves", "levels": (1, 2, 3), "runs": [("base", _variant())]},
    3: {"kind": "boundaries", "runs": [("base", _variant())]},
    4: {"kind": "boundaries", "runs": [
        ("total_learning=1", _variant(total_learning=1.0)),
        ("total_learning=10", _variant(total_learning=10.0))]},
    5: {"kind": "boundaries", "runs": [
        (f"sigma={s:g}", _variant(sigma=s)) for s in (1.0, 4.0, 10.0)]},
    6: {"kind": "boundaries", "runs": [
        (f"r={r:g}", _variant(r=r)) for r in (0.01, 0.1, 0.5)]},
    7: {"kind": "boundaries", "runs": [
        (f"mu0={a:g}_mu1={b:g}", _variant(mu0=a, mu1=b))
        for a, b in ((-5.0, 1.0), (-2.0, 1.0), (-1.0, 1.0), (-1.0, 2.0), (-1.0, 5.0))]},
    8: {"kind": "boundaries", "runs": [
        (f"N={n}", _variant(n_rights=n)) for n in (10, 20, 100)]},
}


def figure_presets(fig) -> List[Tuple[str, ModelParams]]:
    if fig not in FIGURES:
        raise InvalidParameterError(f"unknown figure {fig}; choose from 1-8")
    return list(FIGURES[fig]["runs"])


# -- tables -------------------------------------------------------------------

def boundary_rows(res: SolveResult, run_id):
    p = res.params
    return [[run_id, lv.n, p.u(lv.n), lv.b_n, lv.pi0_n, lv.a_n, lv.smooth_fit_residual]
            for lv in res.levels]


def curve_rows(res: SolveResult, run_id, levels=None):
    d = res.derived
    x = res.grid.nodes
    rows = []
    for n in levels or range(1, res.params.n_rights + 1):
        lv = res.level(n)
        lower = n * np.maximum(x - d.k, 0.0)
        upper = n * (1.0 - d.k) * x
        for i in range(x.size):
            rows.append([run_id, n, x[i], lv.v_n.values[i], lv.f_n.values[i],
                         lv.g_n.values[i], lower[i], upper[i]])
    return rows


def _fraction(x):
    return str(Fraction(x).limit_denominator(1000))


def params_record(p: ModelParams):
    d = p.derived()
    return {
        "mu0": p.mu0, "mu1": p.mu1, "sigma": p.sigma, "r": p.r,
        "N": p.n_rights, "eps": p.eps, "total_learning": p.total_learning,
        "k": d.k, "rho": d.rho, "gamma": d.gamma,
        "k_fraction": _fraction(d.k), "rho_fraction": _fraction(d.rho),
        "b1_closed_form": b1_closed_form(d),
    }


def manifest(command, runs: Sequence[Tuple[str, ModelParams]], grid: PiGrid, pde: PdeConfig,
             extra=None):
    out = {
        "command": command,
        "version": __version__,
        "grid": {"m": grid.m},
        "pde": asdict(pde),
        "runs": [dict(run_id=run_id, **params_record(p)) for run_id, p in runs],
    }
    if extra:
        out.update(extra)
    return out


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepSpec:
    base: ModelParams
    axis: str
    values: list
    grid_m: int = 2001
    dt_target: float = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise InvalidParameterError("sweep needs at least one value")
        self.runs()  # validates every resulting parameter set

    def runs(self) -> List[Tuple[str, object, ModelParams]]:
        b = self.base
        out = []
        for i, v in enumerate(self.values):
            if self.axis == "sigma":
                p = ModelParams(b.mu0, b.mu1, float(v), b.r, b.n_rights, b.eps)
            elif self.axis == "r":
                p = ModelParams(b.mu0, b.mu1, b.sigma, float(v), b.n_rights, b.eps)
            elif self.axis == "eps_total":
                p = ModelParams.from_total_learning(b.mu0, b.mu1, b.sigma, b.r, b.n_rights, float(v))
            elif self.axis == "N":
                p = ModelParams.from_total_learning(b.mu0, b.mu1, b.sigma, b.r, int(v), b.total_learning)
            else:
                mu0, mu1 = v
                p = ModelParams(float(mu0), float(mu1), b.sigma, b.r, b.n_rights, b.eps)
            out.append((f"run{i:03d}", v, p))
        return out


@dataclass
class SweepResult:
    rows: list
    summaries: list = field(default_factory=list)
    failed: int = 0
    results: dict = field(default_factory=dict)


def _value_label(v):
    if isinstance(v, (tuple, list)):
        return ":".join(fmt(float(x)) for x in v)
    return v


def run_sweep(spec: SweepSpec) -> SweepResult:
    grid = PiGrid(spec.grid_m)
    pde = PdeConfig(dt_target=spec.dt_target)
    out = SweepResult(rows=[])
    for run_id, value, p in spec.runs():
        d = p.derived()
        try:
            res = solve_sequence(p, grid, pde)
        except NumericalError as exc:
            out.failed += 1
            out.rows.append([run_id, spec.axis, _value_label(value), d.k, d.rho,
                             None, None, None, None, f"numerical_failure: {exc}"])
            continue
        out.results[run_id] = (value, res)
        for lv in res.levels:
            out.rows.append([run_id, spec.axis, _value_label(value), d.k, d.rho, lv.n,
                             lv.b_n, lv.pi0_n, lv.smooth_fit_residual, "ok"])
    out.summaries = sweep_summaries(spec.axis, out.results)
    return out


def sweep_summaries(axis, results) -> List[dict]:
    """Directional checks across the solved runs of a sweep."""
    items = sorted(results.values(), key=lambda vr: vr[0] if axis != "mu_pair" else 0)
    if len(items) < 2:
        return []
    summaries = []
    if axis in ("sigma", "r"):
        worst = -math.inf
        shared = min(len(res.levels) for _, res in items)
        for n in range(1, shared + 1):
            b = np.array([res.level(n).b_n for _, res in items])
            worst = max(worst, float(np.max(np.diff(b))))
        summaries.append({
            "name": f"b_n nonincreasing in {axis} for every n",
            "passed": bool(worst <= 1e-12),
            "max_increase": worst,
        })
    elif axis == "N":
        first = np.array([res.boundaries[-1] for _, res in items])
        b1 = np.array([res.boundaries[0] for _, res in items])
        summaries.append({
            "name": "first-investment boundary b_N nonincreasing in N",
            "passed": bool(np.all(np.diff(first) <= 1e-12)),
            "values": first.tolist(),
        })
        summaries.append({
            "name": "b_1 independent of N",
            "passed": bool(np.ptp(b1) < 1e-6),
            "spread": float(np.ptp(b1)),
        })
    return summaries


# -- verification -------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    value: float
    reference: float
    tolerance: float
    detail: str = ""


def _perturbations(b, size=0.05):
    out = []
    for i in range(b.size):
        for s in (-size, size):
            bb = b.copy()
            bb[i] = min(max(bb[i] + s, 1e-6), 1.0 - 1e-6)
            out.append((f"b_{i + 1}{'+' if s > 0 else '-'}{size:g}", bb))
    return out


def run_verification(p: ModelParams, grid: PiGrid, pde: PdeConfig, mc: McConfig,
                     start_pi=0.3, boundaries=None) -> List[Check]:
    """Invariant diagnostics plus the Monte Carlo cross-checks."""
    res = solve_sequence(p, grid, pde)
    d = res.derived
    b1 = b1_closed_form(d)
    checks = []
    diag = diagnostics(res)
    lv = diag["levels"]
    worst_chain = max(row["chain_violation"] for row in lv)
    checks.append(Check("bound chain n(pi-k)+ <= V_n <= F_n <= n(1-k)pi", worst_chain < 1e-3,
                        worst_chain, 0.0, 1e-3))
    worst_conv = min(min(row["min_second_diff_v"], row["min_second_diff_f"]) for row in lv)
    checks.append(Check("convexity of V_n and F_n", worst_conv >= -1e-6, worst_conv, 0.0, 1e-6))
    band = all(row["b_gt_pi0"] and row["b_le_b1"] for row in lv)
    checks.append(Check("boundary band pi0_n < b_n <= b_1 + h", band, float(band), 1.0, 0.0))
    worst_fit = max(row["smooth_fit_residual"] for row in lv)
    checks.append(Check("smooth-fit residual", worst_fit < 1e-3, worst_fit, 0.0, 1e-3))
    checks.append(Check("numerical b_1 vs closed form", abs(res.b1_numeric - b1) < 1e-4,
                        res.b1_numeric, b1, 1e-4))

    payoff = GridFunction(grid, grid.nodes - d.k)
    est = estimate_single_stops(start_pi, [b1], payoff, d, mc)[0]
    ref = float(v1_eval(start_pi, d))
    tol = 3.0 * est.std_error + est.truncation_bound
    checks.append(Check(f"single stop at b_1 from pi={start_pi:g} vs closed form",
                        abs(est.mean - ref) <= tol, est.mean, ref, tol))

    f1 = res.level(1).f_n
    for x in (0.2, 0.5, 0.8):
        e = estimate_f(x, res.level(1).v_n, p.eps, d, mc)
        tol = max(3.0 * e.std_error, 1e-3)
        checks.append(Check(f"F_1({x:g}) PDE vs Monte Carlo", abs(e.mean - float(f1(x))) <= tol,
                            e.mean, float(f1(x)), tol))

    solved = res.boundaries
    evaluated = solved if boundaries is None else np.asarray(boundaries, dtype=float)
    challengers = _perturbations(solved)
    if boundaries is not None:
        challengers.append(("supplied boundaries", evaluated))
    sets = [evaluated, solved] + [bb for _, bb in challengers]
    cmp = compare_strategies(start_pi, sets, p, mc)
    vn = float(res.level(p.n_rights).v_n(start_pi))
    e0 = cmp.estimates[0]
    tol = 3.0 * e0.std_error + 1e-2 + e0.truncation_bound
    checks.append(Check(f"strategy value from pi={start_pi:g} matches V_N", abs(e0.mean - vn) <= tol,
                        e0.mean, vn, tol))
    base = cmp.estimates[1]
    worst_name, worst_gap = "", -math.inf
    for idx, (name, _) in enumerate(challengers, start=2):
        gap = (cmp.estimates[idx].mean - base.mean) / cmp.joint_se(1, idx)
        if gap > worst_gap:
            worst_name, worst_gap = name, gap
    checks.append(Check("policy dominance of solved boundaries", worst_gap <= 3.0, worst_gap, 0.0,
                        3.0, f"closest challenger: {worst_name}"))

    if p.eps == 0.0:
        spread = float(np.max(np.abs(solved - b1)))
        checks.append(Check("no-learning boundaries equal b_1", spread < 1e-6, spread, 0.0, 1e-6))
        v1 = res.level(1).v_n.values
        gap = max(float(np.max(np.abs(l.v_n.values - l.n * v1))) for l in res.levels)
        checks.append(Check("no-learning V_n = n V_1", gap < 1e-6, gap, 0.0, 1e-6))
    return checks


def checks_report(checks: List[Check]):
    return {
        "passed": all(c.passed for c in checks),
        "checks": [asdict(c) for c in checks],
    }
