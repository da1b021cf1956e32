"""Finite-difference expectation operator for the belief diffusion.

``diffuse_expectation`` maps grid samples of ``v`` to grid samples of
``pi -> E_pi[v(Pi_eps)]`` by solving ``u_t = a(pi) u_pipi`` with
``a(pi) = rho**2 pi**2 (1 - pi)**2 / 2`` forward in (information) time.
The coefficient vanishes at both ends, so the endpoints are absorbing and
are pinned to their initial values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import InstabilityError, InvalidParameterError, SingularSystemError
from .model import DerivedParams

__all__ = [
    "PiGrid",
    "GridFunction",
    "PdeConfig",
    "solve_tridiagonal",
    "diffuse_expectation",
    "second_moment_check",
]


@dataclass(frozen=True)
class PiGrid:
    """Uniform grid on ``[0, 1]`` with ``m`` nodes."""

    m: int = 2001
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 3:
            raise InvalidParameterError(f"grid needs an integer m >= 3, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        nodes = np.arange(self.m, dtype=float) / (self.m - 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self):
        return 1.0 / (self.m - 1)

    @property
    def interior(self):
        return self.nodes[1:-1]

    def nearest(self, x):
        return int(round(x * (self.m - 1)))


class GridFunction:
    """Immutable samples of a function on a :class:`PiGrid`."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: PiGrid, values):
        vals = np.array(values, dtype=float)
        if vals.shape != (grid.m,):
            raise InvalidParameterError(
                f"expected {grid.m} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("grid function values must be finite")
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals

    def __call__(self, x):
        """Linear interpolation between nodes."""
        return np.interp(x, self.grid.nodes, self.values)

    def slopes(self):
        """Nodal first derivative: central differences, one-sided at the ends."""
        return np.gradient(self.values, self.grid.h, edge_order=2)

    def second_differences(self):
        v = self.values
        return v[:-2] - 2.0 * v[1:-1] + v[2:]

    def __len__(self):
        return self.grid.m

    def __repr__(self):
        return f"GridFunction(m={self.grid.m})"


@dataclass(frozen=True)
class PdeConfig:
    """Time stepping for :func:`diffuse_expectation`.

    ``dt_target=None`` means 64 steps per horizon. The realised step is
    ``eps / ceil(eps / dt_target)``. When ``0.5 <= theta < 1`` the first
    ``rannacher_steps`` steps are fully implicit to damp the kink in the
    pasted value functions.
    """

    theta: float = 0.5
    dt_target: Optional[float] = None
    rannacher_steps: int = 4

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidParameterError(f"theta must lie in [0, 1], got {self.theta}")
        if self.dt_target is not None and not self.dt_target > 0.0:
            raise InvalidParameterError(f"dt_target must be > 0, got {self.dt_target}")
        if self.rannacher_steps < 0:
            raise InvalidParameterError("rannacher_steps must be >= 0")

    def n_steps(self, eps):
        if eps <= 0.0:
            return 0
        if self.dt_target is None:
            return 64
        return max(1, math.ceil(eps / self.dt_target - 1e-12))


@numba.njit(cache=True)
def _thomas(lower, diag, upper, rhs, tiny):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    piv = diag[0]
    if abs(piv) <= tiny:
        return dp, False
    cp[0] = upper[0] / piv if n > 1 else 0.0
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i - 1] * cp[i - 1]
        if abs(piv) <= tiny:
            return dp, False
        if i < n - 1:
            cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp, True


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a tridiagonal system by forward elimination and back substitution.

    ``lower`` and ``upper`` have one entry fewer than ``diag``. No pivoting is
    done, so the matrix should be diagonally dominant.
    """
    lower = np.ascontiguousarray(lower, dtype=float)
    diag = np.ascontiguousarray(diag, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    n = diag.shape[0]
    if lower.shape != (n - 1,) or upper.shape != (n - 1,) or rhs.shape != (n,):
        raise InvalidParameterError("inconsistent tridiagonal system shapes")
    scale = float(np.max(np.abs(diag))) if n else 0.0
    x, ok = _thomas(lower, diag, upper, rhs, 1e-13 * max(scale, 1e-300))
    if not ok:
        raise SingularSystemError("tridiagonal system is (numerically) singular")
    return x


def _check_stability(grid, d, dt, theta):
    if theta >= 0.5:
        return
    x = grid.nodes
    amax = float(np.max(d.rho ** 2 * x ** 2 * (1.0 - x) ** 2))
    limit = grid.h ** 2 / amax
    if dt > limit:
        raise InstabilityError(
            f"theta={theta} needs dt <= {limit:.3e} on this grid, got dt={dt:.3e}")


def diffuse_expectation(v: GridFunction, eps, d: DerivedParams, cfg: PdeConfig = None,
                        boundary_left=None, boundary_right=None) -> GridFunction:
    """Grid samples of ``pi -> E_pi[v(Pi_eps)]``.

    Parameters
    ----------
    v : GridFunction
        Initial data.
    eps : float
        Information-time horizon.
    d : DerivedParams
        Supplies ``rho``.
    cfg : PdeConfig, optional
    boundary_left, boundary_right : float, optional
        Endpoint values held fixed for all time; default to the endpoint
        values of ``v`` and must agree with them.
    """
    cfg = cfg or PdeConfig()
    if not eps >= 0.0:
        raise InvalidParameterError(f"eps must be >= 0, got {eps}")
    grid = v.grid
    u = np.array(v.values)
    scale = max(1.0, float(np.max(np.abs(u))))
    for idx, bval in ((0, boundary_left), (-1, boundary_right)):
        if bval is not None and abs(bval - u[idx]) > 1e-9 * scale:
            raise InvalidParameterError(
                f"boundary value {bval} disagrees with endpoint sample {u[idx]}")
    left = u[0] if boundary_left is None else float(boundary_left)
    right = u[-1] if boundary_right is None else float(boundary_right)
    u[0], u[-1] = left, right
    steps = cfg.n_steps(eps)
    if steps == 0:
        return GridFunction(grid, u)
    dt = eps / steps
    _check_stability(grid, d, dt, cfg.theta)

    x = grid.interior
    lam = 0.5 * d.rho ** 2 * x ** 2 * (1.0 - x) ** 2 * dt / grid.h ** 2
    ones = np.ones_like(x)

    def advance(u, theta):
        # explicit half: u + (1 - theta) * lam * delta2(u)
        d2 = u[:-2] - 2.0 * u[1:-1] + u[2:]
        rhs = u[1:-1] + (1.0 - theta) * lam * d2
        if theta == 0.0:
            out = u.copy()
            out[1:-1] = rhs
            return out
        tl = theta * lam
        rhs[0] += tl[0] * left
        rhs[-1] += tl[-1] * right
        inner = solve_tridiagonal(-tl[1:], ones + 2.0 * tl, -tl[:-1], rhs)
        out = np.empty_like(u)
        out[0], out[-1] = left, right
        out[1:-1] = inner
        return out

    smooth = cfg.rannacher_steps if 0.5 <= cfg.theta < 1.0 else 0
    for step in range(steps):
        u = advance(u, 1.0 if step < smooth else cfg.theta)
    return GridFunction(grid, u)


def second_moment_check(pi, eps, d: DerivedParams, grid: PiGrid = None,
                        cfg: PdeConfig = None) -> float:
    """``E_pi[(Pi_eps - pi)**2]`` through :func:`diffuse_expectation`.

    For small ``eps`` this is ``rho**2 pi**2 (1 - pi)**2 eps`` to leading order.
    """
    grid = grid or PiGrid()
    if not 0.0 <= pi <= 1.0:
        raise InvalidParameterError(f"pi must lie in [0, 1], got {pi}")
    v = GridFunction(grid, (grid.nodes - pi) ** 2)
    return float(diffuse_expectation(v, eps, d, cfg)(pi))
