"""Backward recursion for the investment boundaries ``b_1, ..., b_N``.

At level ``n`` the exercise payoff is ``g_n = pi - k + F_{n-1}`` with
``F_{n-1}(pi) = E_pi[V_{n-1}(Pi_eps)]`` and ``F_0 = 0``. The boundary is the
root of ``h_n = G' g_n - G g_n'`` and the value function is pasted as
``A_n G`` below ``b_n`` and ``g_n`` above it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import MultipleSignChangeError, NoSignChangeError, NumericalError
from .model import DerivedParams, G, G_prime, ModelParams, b1_closed_form
from .pde import GridFunction, PdeConfig, PiGrid, diffuse_expectation

__all__ = [
    "LevelResult",
    "SolveResult",
    "build_g",
    "eval_h",
    "find_boundary",
    "paste_candidate",
    "solve_sequence",
    "diagnostics",
    "discrete_generator",
]


# -- continuous views of the level functions ---------------------------------
#
# Grid samples are enough for F when eps > 0 (it is smooth), but the smooth-fit
# root is refined off-grid, so every level keeps an evaluator for value and
# slope at arbitrary beliefs.

class _Zero:
    def value(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def slope(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class _Interpolated:
    """Linear interpolation of grid values and of their central differences."""

    def __init__(self, f: GridFunction):
        self._f = f
        self._df = f.slopes()

    def value(self, x):
        return self._f(x)

    def slope(self, x):
        return np.interp(x, self._f.grid.nodes, self._df)


class _Payoff:
    def __init__(self, k, prev):
        self.k = k
        self.prev = prev

    def value(self, x):
        return np.asarray(x, dtype=float) - self.k + self.prev.value(x)

    def slope(self, x):
        return 1.0 + self.prev.slope(x)


class _Pasted:
    """``A G`` below the boundary, the payoff above it."""

    def __init__(self, a, b, gamma, payoff):
        self.a, self.b, self.gamma, self.payoff = a, b, gamma, payoff

    def value(self, x):
        x = np.asarray(x, dtype=float)
        below = x < self.b
        out = np.where(below, 0.0, self.payoff.value(np.where(below, self.b, x)))
        out[below] = self.a * G(x[below], self.gamma)
        return out

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        below = x < self.b
        out = np.where(below, 0.0, self.payoff.slope(np.where(below, self.b, x)))
        inner = below & (x > 0.0)
        out[inner] = self.a * G_prime(x[inner], self.gamma)
        return out


# -- results -----------------------------------------------------------------

@dataclass(frozen=True)
class LevelResult:
    n: int
    b_n: float
    a_n: float
    v_n: GridFunction
    f_n: GridFunction
    g_n: GridFunction
    pi0_n: float
    smooth_fit_residual: float


@dataclass(frozen=True)
class SolveResult:
    params: ModelParams
    derived: DerivedParams
    levels: List[LevelResult]
    grid: PiGrid
    pde: PdeConfig
    b1_numeric: float

    @property
    def boundaries(self):
        """``b_1, ..., b_N`` (index ``n - 1`` holds ``b_n``)."""
        return np.array([lv.b_n for lv in self.levels])

    def level(self, n) -> LevelResult:
        return self.levels[n - 1]


# -- level operations --------------------------------------------------------

def build_g(f_prev: Optional[GridFunction], d: DerivedParams,
            grid: PiGrid = None) -> GridFunction:
    """Payoff ``g_n = pi - k + F_{n-1}``; ``f_prev=None`` is the base case ``F_0 = 0``."""
    if f_prev is None:
        if grid is None:
            raise ValueError("build_g needs a grid when f_prev is None")
        return GridFunction(grid, grid.nodes - d.k)
    return GridFunction(f_prev.grid, f_prev.grid.nodes - d.k + f_prev.values)


def eval_h(g: GridFunction, d: DerivedParams, slope=None) -> np.ndarray:
    """``h = G' g - G g'`` at the interior nodes.

    ``slope`` gives ``g'`` at the interior nodes; by default it comes from
    central differences of ``g``.
    """
    x = g.grid.interior
    dg = g.slopes()[1:-1] if slope is None else np.asarray(slope, dtype=float)
    return G_prime(x, d.gamma) * g.values[1:-1] - G(x, d.gamma) * dg


def _bisect(fn, lo, hi, tol=1e-12):
    flo = fn(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if (fmid >= 0.0) == (flo >= 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_boundary(h, grid: PiGrid, b1, h_func=None) -> float:
    """Root of ``h`` where it turns from negative to nonnegative.

    ``h`` holds values at the interior nodes. The bracketing pair of nodes is
    located on the grid; the root is then taken from the linear interpolant,
    or refined by bisection on ``h_func`` when a continuous evaluator is
    supplied. Leading nodes where ``h`` underflows to exactly zero are
    skipped.
    """
    h = np.asarray(h, dtype=float)
    x = grid.interior
    if h.shape != x.shape:
        raise ValueError("h must be sampled at the interior nodes")
    nz = np.flatnonzero(h != 0.0)
    if nz.size == 0:
        raise NoSignChangeError("h vanishes identically")
    start = nz[0]
    nonneg = h[start:] >= 0.0
    flips = np.flatnonzero(nonneg[1:] != nonneg[:-1]) + start
    if flips.size == 0 or nonneg[0]:
        raise NoSignChangeError(
            "h has no negative-to-nonnegative sign change on the grid")
    if flips.size > 1:
        raise MultipleSignChangeError(
            f"h changes sign {flips.size} times (at beliefs {x[flips + 1][:5]})")
    i = flips[0]  # h[i] < 0 <= h[i + 1]
    if x[i] > b1 + grid.h:
        raise NoSignChangeError(
            f"sign change at {x[i]:.6f} lies above b1={b1:.6f}")
    if h[i + 1] == 0.0:
        if h_func is None:
            return float(x[i + 1])
        hi = x[i + 2] if i + 2 < x.size else x[i + 1]
        return float(_bisect(h_func, x[i], hi))
    if h_func is None:
        return float(x[i] - h[i] * (x[i + 1] - x[i]) / (h[i + 1] - h[i]))
    return float(_bisect(h_func, x[i], x[i + 1]))


def paste_candidate(g: GridFunction, b_n, d: DerivedParams, g_at_b=None) -> GridFunction:
    """Value function samples: ``(g(b)/G(b)) G`` below ``b_n``, ``g`` from ``b_n`` up.

    ``g_at_b`` defaults to linear interpolation of the samples at ``b_n``.
    """
    if not 0.0 < b_n < 1.0:
        raise ValueError(f"boundary must be interior, got {b_n}")
    gb = float(g(b_n)) if g_at_b is None else float(g_at_b)
    if not gb > 0.0:
        raise NumericalError(f"payoff at the boundary must be positive, got {gb}")
    x = g.grid.nodes
    below = x < b_n
    vals = np.array(g.values)
    vals[below] = gb / G(b_n, d.gamma) * G(x[below], d.gamma)
    return GridFunction(g.grid, vals)


def discrete_generator(f: GridFunction, d: DerivedParams) -> np.ndarray:
    """``(L f)`` at the interior nodes using central second differences."""
    x = f.grid.interior
    a = 0.5 * d.rho ** 2 * x ** 2 * (1.0 - x) ** 2
    return a * f.second_differences() / f.grid.h ** 2 - d.r * f.values[1:-1]


def _payoff_root(payoff, grid):
    vals = payoff.value(grid.nodes)
    pos = np.flatnonzero(vals >= 0.0)
    if pos.size == 0 or pos[0] == 0:
        raise NumericalError("payoff has no root in (0, 1)")
    i = pos[0]
    return _bisect(payoff.value, grid.nodes[i - 1], grid.nodes[i])


def solve_sequence(p: ModelParams, grid: PiGrid = None, cfg: PdeConfig = None) -> SolveResult:
    """Solve levels ``n = 1..N`` of the recursion."""
    grid = grid or PiGrid()
    cfg = cfg or PdeConfig()
    d = p.derived()
    b1 = b1_closed_form(d)
    levels = []
    prev_value = _Zero()
    f_prev = None
    b1_numeric = float("nan")
    for n in range(1, p.n_rights + 1):
        payoff = _Payoff(d.k, prev_value)
        g = build_g(f_prev, d, grid)

        def h_func(x, payoff=payoff):
            return G_prime(x, d.gamma) * payoff.value(x) - G(x, d.gamma) * payoff.slope(x)

        h = eval_h(g, d, slope=payoff.slope(grid.interior))
        try:
            b_root = find_boundary(h, grid, b1, h_func=h_func)
        except NumericalError as exc:
            raise type(exc)(f"level n={n}: {exc}") from exc
        if n == 1:
            b1_numeric = b_root
            b_n = b1
        else:
            b_n = b_root
        g_b = float(payoff.value(b_n))
        v = paste_candidate(g, b_n, d, g_at_b=g_b)
        a_n = g_b / G(b_n, d.gamma)
        residual = abs(a_n * G_prime(b_n, d.gamma) - float(payoff.slope(b_n)))
        f = diffuse_expectation(v, p.eps, d, cfg, 0.0, n * (1.0 - d.k))
        levels.append(LevelResult(
            n=n, b_n=float(b_n), a_n=float(a_n), v_n=v, f_n=f, g_n=g,
            pi0_n=float(_payoff_root(payoff, grid)),
            smooth_fit_residual=float(residual)))
        pasted = _Pasted(a_n, b_n, d.gamma, payoff)
        # with no learning F_n is V_n itself, kink included
        prev_value = _Interpolated(f) if p.eps > 0.0 else pasted
        f_prev = f
    return SolveResult(params=p, derived=d, levels=levels, grid=grid, pde=cfg,
                       b1_numeric=float(b1_numeric))


def _pi_star(f_prev: Optional[GridFunction], g: GridFunction, d: DerivedParams):
    # root of L g_n; L g_n = a F''_{n-1} - r g_n, noisy near the old kink
    x = g.grid.interior
    if f_prev is None:
        return float(d.k)
    a = 0.5 * d.rho ** 2 * x ** 2 * (1.0 - x) ** 2
    lg = a * f_prev.second_differences() / g.grid.h ** 2 - d.r * g.values[1:-1]
    neg = np.flatnonzero(lg <= 0.0)
    return float(x[neg[0]]) if neg.size else None


def diagnostics(res: SolveResult) -> dict:
    """Per-level invariant report; nothing here raises."""
    d = res.derived
    x = res.grid.nodes
    b1 = b1_closed_form(d)
    rows = []
    f_prev = None
    for lv in res.levels:
        n = lv.n
        lower = n * np.maximum(x - d.k, 0.0)
        upper = n * (1.0 - d.k) * x
        v, f, g = lv.v_n.values, lv.f_n.values, lv.g_n.values
        chain = max(
            float(np.max(lower - v)),
            float(np.max(np.maximum(g, 0.0) - v)),
            float(np.max(v - f)),
            float(np.max(f - upper)),
        )
        rows.append({
            "n": n,
            "b_n": lv.b_n,
            "pi0_n": lv.pi0_n,
            "pi_star_n": _pi_star(f_prev, lv.g_n, d),
            "chain_violation": max(chain, 0.0),
            "min_second_diff_v": float(np.min(lv.v_n.second_differences())),
            "min_second_diff_f": float(np.min(lv.f_n.second_differences())),
            "smooth_fit_residual": lv.smooth_fit_residual,
            "b_le_b1": bool(lv.b_n <= b1 + res.grid.h),
            "b_gt_pi0": bool(lv.b_n > lv.pi0_n),
            "v_at_1_error": abs(float(v[-1]) - n * (1.0 - d.k)),
        })
        f_prev = lv.f_n
    b = res.boundaries
    return {
        "b1_closed_form": b1,
        "b1_numeric": res.b1_numeric,
        "levels": rows,
        # reported only: no monotonicity in n is claimed
        "boundaries_nonincreasing_in_n": bool(np.all(np.diff(b) <= 1e-12)),
    }
