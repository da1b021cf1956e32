"""Euler-Maruyama simulation of the belief process and policy valuation.

Each path draws from its own counter-based stream keyed by ``(seed, path)``
(splitmix64 + polar method), so results do not depend on batching and a
fixed seed reproduces every estimate bit for bit.

Discounting defaults to ``"kill"``: every path carries an independent
exponential clock of rate ``r`` and a payoff counts only if it is realised
before the clock rings. Since ``P(T > t) = exp(-r t)`` this is an unbiased
estimator of the discounted value, and paths drifting towards zero stop
after ``~1/r`` time units instead of running to the horizon. ``"weight"``
multiplies each payoff by ``exp(-r t)`` literally and prunes paths whose
remaining contribution is provably below ``prune_tol``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numba
import numpy as np

from .errors import InvalidParameterError
from .model import DerivedParams, ModelParams
from .pde import GridFunction, PiGrid

__all__ = [
    "McConfig",
    "Estimate",
    "StrategyOutcome",
    "StrategyComparison",
    "TruncationWarning",
    "step_belief",
    "simulate_belief",
    "estimate_single_stop",
    "estimate_single_stops",
    "estimate_f",
    "simulate_full_strategy",
    "compare_strategies",
]


class TruncationWarning(UserWarning):
    """The horizon/pruning bias bound exceeds the standard error."""


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    dt: float = 1e-3
    t_max: Optional[float] = None  # None -> 50 / r
    seed: int = 0
    clamp_delta: float = 1e-9
    discounting: str = "kill"
    prune_tol: float = 1e-8

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidParameterError(f"n_paths must be a positive integer, got {self.n_paths}")
        if not self.dt > 0.0:
            raise InvalidParameterError(f"dt must be > 0, got {self.dt}")
        if self.t_max is not None and not self.t_max > 0.0:
            raise InvalidParameterError(f"t_max must be > 0, got {self.t_max}")
        if not 0.0 <= self.clamp_delta <= 1e-6:
            raise InvalidParameterError(f"clamp_delta must lie in [0, 1e-6], got {self.clamp_delta}")
        if self.discounting not in ("kill", "weight"):
            raise InvalidParameterError(f"discounting must be 'kill' or 'weight', got {self.discounting!r}")
        if self.prune_tol < 0.0:
            raise InvalidParameterError("prune_tol must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidParameterError(f"seed must be a nonnegative integer, got {self.seed}")

    def horizon(self, r):
        return 50.0 / r if self.t_max is None else self.t_max


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    truncation_bound: float = 0.0

    def agrees_with(self, value, n_se=3.0, slack=0.0):
        return abs(self.mean - value) <= n_se * self.std_error + slack + self.truncation_bound


@dataclass(frozen=True)
class StrategyOutcome:
    """One simulated path of a threshold strategy.

    ``investment_times[n - 1]`` is the physical time of the investment made
    with ``n`` rights remaining (NaN if it never happened before the horizon),
    and ``beliefs_at_exercise[n - 1]`` the belief at that investment, which
    already includes the ``(N - n) eps`` of earlier learning.
    """

    investment_times: np.ndarray
    beliefs_at_exercise: np.ndarray
    discounted_total: float


@dataclass(frozen=True)
class StrategyComparison:
    """Several strategies valued on common paths."""

    estimates: List[Estimate]
    values: np.ndarray = field(repr=False)  # (n_paths, n_strategies)

    def joint_se(self, i, j):
        a, b = self.estimates[i], self.estimates[j]
        return math.hypot(a.std_error, b.std_error)

    def paired_se(self, i, j):
        diff = self.values[:, i] - self.values[:, j]
        return float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0


# -- random streams ------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_TWO53 = 1.0 / 9007199254740992.0


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _stream(seed, path):
    return _mix(_mix(np.uint64(seed) + _GOLDEN) ^ (np.uint64(path) * _GOLDEN + np.uint64(1)))


@numba.njit(inline="always")
def _uniform_open(state):
    # uniform on (0, 1]
    state = state + _GOLDEN
    return state, ((_mix(state) >> np.uint64(11)) + np.uint64(1)) * _TWO53


@numba.njit(inline="always")
def _normal_pair(state):
    # Marsaglia polar method
    while True:
        state = state + _GOLDEN
        a = (_mix(state) >> np.uint64(11)) * (2.0 * _TWO53) - 1.0
        state = state + _GOLDEN
        b = (_mix(state) >> np.uint64(11)) * (2.0 * _TWO53) - 1.0
        s = a * a + b * b
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return state, a * f, b * f


@numba.njit(cache=True, inline="always")
def _euler(pi, scale, z, clamp):
    if pi <= 0.0 or pi >= 1.0:
        return pi
    nxt = pi + scale * pi * (1.0 - pi) * z
    lo = clamp
    hi = 1.0 - clamp
    if nxt < lo:
        return lo
    if nxt > hi:
        return hi
    return nxt


@numba.njit(cache=True)
def _euler_array(pi, scale, z, clamp):
    out = np.empty_like(pi)
    for i in range(pi.shape[0]):
        out[i] = _euler(pi[i], scale, z[i], clamp)
    return out


def step_belief(pi, dt, d: DerivedParams, noise, clamp_delta=1e-9):
    """One Euler-Maruyama step of ``dPi = rho Pi (1 - Pi) dW``.

    Results are clamped to ``[clamp_delta, 1 - clamp_delta]``; beliefs at
    exactly 0 or 1 are absorbed.
    """
    scale = d.rho * math.sqrt(dt)
    if np.ndim(pi) == 0 and np.ndim(noise) == 0:
        return _euler(float(pi), scale, float(noise), clamp_delta)
    pi_arr, z_arr = np.broadcast_arrays(np.asarray(pi, dtype=float), np.asarray(noise, dtype=float))
    flat = _euler_array(np.ascontiguousarray(pi_arr).ravel(), scale,
                        np.ascontiguousarray(z_arr).ravel(), clamp_delta)
    return flat.reshape(pi_arr.shape)


# -- kernels ---------------------------------------------------------------------

@numba.njit(cache=True)
def _terminal_kernel(pi0, n_steps, scale, clamp, seed, out):
    for i in range(out.shape[0]):
        state = _stream(seed, i)
        pi = pi0
        j = 0
        while j < n_steps:
            state, z1, z2 = _normal_pair(state)
            pi = _euler(pi, scale, z1, clamp)
            j += 1
            if j < n_steps:
                pi = _euler(pi, scale, z2, clamp)
                j += 1
        out[i] = pi


@numba.njit(cache=True)
def _single_stop_kernel(pi0, thresholds, px, py, r, dt, scale, max_steps, clamp, seed,
                        kill, prune_tol, bound_coef, out, pruned):
    n_thr = thresholds.shape[0]
    thr_min = thresholds.min()
    for i in range(out.shape[0]):
        state = _stream(seed, i)
        t_kill = np.inf
        if kill:
            state, u = _uniform_open(state)
            t_kill = -math.log(u) / r
        done = np.zeros(n_thr, dtype=np.bool_)
        remaining = n_thr
        pi = pi0
        j = 0
        have_spare = False
        spare = 0.0
        while True:
            t = j * dt
            if kill and t >= t_kill:
                break
            if pi >= thr_min:
                for s in range(n_thr):
                    if not done[s] and pi >= thresholds[s]:
                        done[s] = True
                        remaining -= 1
                        val = np.interp(pi, px, py)
                        out[i, s] = val if kill else math.exp(-r * t) * val
                if remaining == 0:
                    break
            if j >= max_steps:
                break
            if not kill and prune_tol > 0.0 and (j & 63) == 0:
                bound = math.exp(-r * t) * bound_coef * pi
                if bound < prune_tol:
                    for s in range(n_thr):
                        if not done[s]:
                            pruned[s] += bound
                    break
            if have_spare:
                z = spare
                have_spare = False
            else:
                state, z, spare = _normal_pair(state)
                have_spare = True
            pi = _euler(pi, scale, z, clamp)
            j += 1


@numba.njit(cache=True)
def _strategy_kernel(pi0, bounds, k, r, dt, scale, jump, max_steps, clamp, seed,
                     kill, prune_tol, bound_coef, out, pruned, rec_t, rec_pi, record):
    n_strat = bounds.shape[0]
    n_rights = bounds.shape[1]
    for i in range(out.shape[0]):
        state = _stream(seed, i)
        p_dead = max_steps
        if kill:
            state, u = _uniform_open(state)
            p_dead = min(max_steps, math.ceil(-math.log(u) / r / dt))
        n_rem = np.full(n_strat, n_rights, dtype=np.int64)
        made = np.zeros(n_strat, dtype=np.int64)
        resume = np.zeros(n_strat, dtype=np.int64)
        alive = np.ones(n_strat, dtype=np.bool_)
        pi = pi0
        j = 0
        have_spare = False
        spare = 0.0
        # between events only the lowest active boundary matters
        min_thr = -1.0
        next_event = 0
        while True:
            if pi >= min_thr or j >= next_event:
                min_thr = np.inf
                next_event = np.iinfo(np.int64).max
                for s in range(n_strat):
                    if not alive[s]:
                        continue
                    if j < resume[s]:
                        # mid-jump: information arrives, physical clock frozen
                        next_event = min(next_event, resume[s])
                        continue
                    p = j - made[s] * jump
                    if p >= p_dead:
                        alive[s] = False
                        continue
                    t = p * dt
                    while n_rem[s] > 0 and pi >= bounds[s, n_rem[s] - 1]:
                        gain = pi - k
                        out[i, s] += gain if kill else math.exp(-r * t) * gain
                        if record and s == 0:
                            rec_t[i, n_rem[s] - 1] = t
                            rec_pi[i, n_rem[s] - 1] = pi
                        n_rem[s] -= 1
                        made[s] += 1
                        if jump > 0:
                            resume[s] = j + jump
                            break
                    if n_rem[s] == 0:
                        alive[s] = False
                        continue
                    if j < resume[s]:
                        next_event = min(next_event, resume[s])
                        continue
                    if not kill and prune_tol > 0.0:
                        if p % 64 == 0:
                            bound = math.exp(-r * t) * n_rem[s] * bound_coef[s] * pi
                            if bound < prune_tol:
                                pruned[s] += bound
                                alive[s] = False
                                continue
                        next_event = min(next_event, j + 64 - p % 64)
                    min_thr = min(min_thr, bounds[s, n_rem[s] - 1])
                    next_event = min(next_event, j + p_dead - p)
                if next_event == np.iinfo(np.int64).max:
                    break
            if have_spare:
                z = spare
                have_spare = False
            else:
                state, z, spare = _normal_pair(state)
                have_spare = True
            pi = _euler(pi, scale, z, clamp)
            j += 1


# -- estimators ------------------------------------------------------------------

def _check_belief(pi):
    if not 0.0 <= pi <= 1.0:
        raise InvalidParameterError(f"belief must lie in [0, 1], got {pi}")


def _summarise(values, truncation):
    n = values.shape[0]
    mean = float(np.mean(values))
    spread = n > 1 and float(np.ptp(values)) > 0.0
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if spread else 0.0
    est = Estimate(mean, se, n, float(truncation))
    if est.truncation_bound > est.std_error and est.truncation_bound > 1e-12:
        warnings.warn(
            f"truncation bias bound {est.truncation_bound:.2e} exceeds the standard "
            f"error {est.std_error:.2e}; increase t_max", TruncationWarning, stacklevel=3)
    return est


def _steps_over(eps, dt):
    # eps / ceil(eps / dt) so that eps is an exact multiple of the step
    if eps <= 0.0:
        return 0, dt
    n = max(1, math.ceil(eps / dt - 1e-9))
    return n, eps / n


def simulate_belief(pi, horizon, d: DerivedParams, cfg: McConfig) -> np.ndarray:
    """Beliefs after ``horizon`` units of time, one per path."""
    _check_belief(pi)
    n_steps, dt = _steps_over(horizon, cfg.dt)
    out = np.empty(int(cfg.n_paths))
    if n_steps == 0:
        out[:] = pi
        return out
    _terminal_kernel(float(pi), n_steps, d.rho * math.sqrt(dt), cfg.clamp_delta, int(cfg.seed), out)
    return out


def estimate_f(pi, v: GridFunction, eps, d: DerivedParams, cfg: McConfig) -> Estimate:
    """Monte Carlo estimate of ``E_pi[v(Pi_eps)]`` with ``v`` linearly interpolated."""
    _check_belief(pi)
    if eps == 0.0:
        return Estimate(float(v(pi)), 0.0, int(cfg.n_paths), 0.0)
    ends = simulate_belief(pi, eps, d, cfg)
    return _summarise(v(ends), 0.0)


def _as_grid_function(payoff):
    if isinstance(payoff, GridFunction):
        return payoff
    grid = PiGrid()
    return GridFunction(grid, np.asarray(payoff(grid.nodes), dtype=float))


def estimate_single_stops(pi, thresholds, payoff, d: DerivedParams, cfg: McConfig) -> List[Estimate]:
    """Value of first-hitting rules ``tau = inf{t : Pi_t >= threshold}`` on common paths."""
    _check_belief(pi)
    thr = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if thr.size == 0 or np.any((thr <= 0.0) | (thr >= 1.0)):
        raise InvalidParameterError("thresholds must be interior beliefs")
    pay = _as_grid_function(payoff)
    px, py = pay.grid.nodes, pay.values
    t_max = cfg.horizon(d.r)
    max_steps = math.ceil(t_max / cfg.dt - 1e-9)
    x = px[1:]
    pos = float(np.max(np.maximum(py[1:], 0.0) / x))
    neg = float(np.max(np.maximum(-py, 0.0)))
    bound_coef = max(pos, neg / float(thr.min()))
    out = np.zeros((int(cfg.n_paths), thr.size))
    pruned = np.zeros(thr.size)
    _single_stop_kernel(float(pi), thr, px, py, d.r, cfg.dt, d.rho * math.sqrt(cfg.dt),
                        max_steps, cfg.clamp_delta, int(cfg.seed), cfg.discounting == "kill",
                        cfg.prune_tol, bound_coef, out, pruned)
    tail = math.exp(-d.r * t_max) * float(np.max(np.abs(py)))
    return [_summarise(out[:, s], tail + pruned[s] / cfg.n_paths) for s in range(thr.size)]


def estimate_single_stop(pi, threshold, payoff, d: DerivedParams, cfg: McConfig) -> Estimate:
    """Value of stopping the first time the belief reaches ``threshold``."""
    return estimate_single_stops(pi, [threshold], payoff, d, cfg)[0]


def _run_strategies(pi, boundary_sets, p: ModelParams, cfg: McConfig, record):
    _check_belief(pi)
    d = p.derived()
    bounds = np.atleast_2d(np.asarray(boundary_sets, dtype=float))
    if bounds.shape[1] != p.n_rights:
        raise InvalidParameterError(
            f"need {p.n_rights} boundaries per strategy, got {bounds.shape[1]}")
    if np.any((bounds <= 0.0) | (bounds >= 1.0)):
        raise InvalidParameterError("boundaries must be interior beliefs")
    jump, dt = _steps_over(p.eps, cfg.dt)
    if jump == 0:
        dt = cfg.dt
    t_max = cfg.horizon(d.r)
    max_steps = math.ceil(t_max / dt - 1e-9)
    kill = cfg.discounting == "kill" and not record
    bound_coef = np.maximum(1.0 - d.k, d.k / bounds.min(axis=1))
    n = int(cfg.n_paths)
    out = np.zeros((n, bounds.shape[0]))
    pruned = np.zeros(bounds.shape[0])
    rec_shape = (n, p.n_rights) if record else (1, p.n_rights)
    rec_t = np.full(rec_shape, np.nan)
    rec_pi = np.full(rec_shape, np.nan)
    _strategy_kernel(float(pi), bounds, d.k, d.r, dt, d.rho * math.sqrt(dt), jump, max_steps,
                     cfg.clamp_delta, int(cfg.seed), kill, cfg.prune_tol, bound_coef,
                     out, pruned, rec_t, rec_pi, record)
    tail = math.exp(-d.r * t_max) * p.n_rights * max(d.k, 1.0 - d.k)
    estimates = [_summarise(out[:, s], tail + pruned[s] / n) for s in range(bounds.shape[0])]
    return estimates, out, rec_t, rec_pi


def simulate_full_strategy(pi, boundaries, p: ModelParams, cfg: McConfig, return_outcomes=False):
    """Value of the threshold strategy ``boundaries[n - 1] = b_n``.

    With ``n`` rights left the investor waits until the belief reaches
    ``b_n``, invests, and then instantly learns ``eps`` more units of the
    observation path; further investments at the same physical instant are
    allowed. Returns an :class:`Estimate`, plus a list of
    :class:`StrategyOutcome` when ``return_outcomes`` is set (this forces
    literal ``exp(-r t)`` weighting).
    """
    estimates, _, rec_t, rec_pi = _run_strategies(pi, [boundaries], p, cfg, return_outcomes)
    if not return_outcomes:
        return estimates[0]
    d = p.derived()
    outcomes = []
    for times, beliefs in zip(rec_t, rec_pi):
        hit = ~np.isnan(times)
        total = float(np.sum(np.exp(-d.r * times[hit]) * (beliefs[hit] - d.k)))
        outcomes.append(StrategyOutcome(times, beliefs, total))
    return estimates[0], outcomes


def compare_strategies(pi, boundary_sets, p: ModelParams, cfg: McConfig) -> StrategyComparison:
    """Value several boundary vectors on the same simulated paths."""
    estimates, values, _, _ = _run_strategies(pi, boundary_sets, p, cfg, False)
    return StrategyComparison(estimates, values)
