"""Model parameters and the closed-form pieces of the problem.

The belief ``pi`` is the posterior probability of the good drift ``mu1``.
With ``k = -mu0 / (mu1 - mu0)`` and ``rho = (mu1 - mu0) / sigma`` the
discounted generator is ``L = rho**2 pi**2 (1 - pi)**2 / 2 d2/dpi2 - r``,
and ``G(pi) = (1 - pi) (pi / (1 - pi))**gamma`` is its increasing solution
vanishing at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParameterError

__all__ = [
    "ModelParams",
    "DerivedParams",
    "derive_params",
    "G",
    "G_prime",
    "b1_closed_form",
    "v1_eval",
]


def _finite(name, value):
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Raw model inputs.

    Attributes
    ----------
    mu0, mu1 : float
        Drifts of the bad and the good project, ``mu0 < 0 < mu1``.
    sigma : float
        Observation noise volatility.
    r : float
        Discount rate.
    n_rights : int
        Total number of investment rights ``N``.
    eps : float
        Information-time increment gained per investment.
    """

    mu0: float
    mu1: float
    sigma: float
    r: float
    n_rights: int = 1
    eps: float = 0.0

    def __post_init__(self):
        for name in ("mu0", "mu1", "sigma", "r", "eps"):
            _finite(name, getattr(self, name))
        if not self.mu0 < 0.0 < self.mu1:
            raise InvalidParameterError(
                f"need mu0 < 0 < mu1, got mu0={self.mu0}, mu1={self.mu1}")
        if not self.sigma > 0.0:
            raise InvalidParameterError(f"need sigma > 0, got {self.sigma}")
        if not self.r > 0.0:
            raise InvalidParameterError(f"need r > 0, got {self.r}")
        if isinstance(self.n_rights, bool) or int(self.n_rights) != self.n_rights:
            raise InvalidParameterError(
                f"n_rights must be an integer, got {self.n_rights!r}")
        object.__setattr__(self, "n_rights", int(self.n_rights))
        if self.n_rights < 1:
            raise InvalidParameterError(f"need n_rights >= 1, got {self.n_rights}")
        if self.eps < 0.0:
            raise InvalidParameterError(f"need eps >= 0, got {self.eps}")

    @classmethod
    def from_total_learning(cls, mu0, mu1, sigma, r, n_rights, total_learning):
        """Build parameters from the total learning ``N * eps``."""
        _finite("total_learning", total_learning)
        if total_learning < 0:
            raise InvalidParameterError(
                f"need total_learning >= 0, got {total_learning}")
        if isinstance(n_rights, bool) or int(n_rights) != n_rights or n_rights < 1:
            raise InvalidParameterError(f"need integer n_rights >= 1, got {n_rights!r}")
        return cls(mu0, mu1, sigma, r, int(n_rights), total_learning / int(n_rights))

    @property
    def total_learning(self):
        return self.n_rights * self.eps

    def u(self, n):
        """Investment level with ``n`` rights remaining, ``(N - n) / N``."""
        if not 0 <= n <= self.n_rights:
            raise InvalidParameterError(f"n must lie in [0, {self.n_rights}], got {n}")
        return (self.n_rights - n) / self.n_rights

    def derived(self) -> "DerivedParams":
        return derive_params(self)


@dataclass(frozen=True)
class DerivedParams:
    """Dimensionless quantities derived from :class:`ModelParams`.

    ``r`` is carried along because the discounting in the Monte Carlo
    estimators needs it next to ``rho``.
    """

    k: float
    rho: float
    gamma: float
    r: float

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise InvalidParameterError(f"need 0 < k < 1, got {self.k}")
        if not self.rho > 0.0:
            raise InvalidParameterError(f"need rho > 0, got {self.rho}")
        if not self.gamma > 1.0:
            raise InvalidParameterError(f"need gamma > 1, got {self.gamma}")
        if not self.r > 0.0:
            raise InvalidParameterError(f"need r > 0, got {self.r}")

    @classmethod
    def from_k_rho(cls, k, rho, r):
        """Derived parameters directly from ``(k, rho, r)``."""
        return cls(k, rho, _positive_root(r, rho), r)


def _positive_root(r, rho):
    # gamma**2 - gamma - 2 r / rho**2 = 0; discriminant >= 1 so no cancellation
    return 0.5 * (1.0 + math.sqrt(1.0 + 8.0 * r / (rho * rho)))


def derive_params(p: ModelParams) -> DerivedParams:
    """Compute ``(k, rho, gamma)`` for a parameter set."""
    if not isinstance(p, ModelParams):
        raise InvalidParameterError(f"expected ModelParams, got {type(p).__name__}")
    spread = p.mu1 - p.mu0
    rho = spread / p.sigma
    return DerivedParams(k=-p.mu0 / spread, rho=rho, gamma=_positive_root(p.r, rho), r=p.r)


def _as_beliefs(pi):
    arr = np.asarray(pi, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("belief is NaN")
    return arr


def _unwrap(arr, pi):
    return float(arr) if np.ndim(pi) == 0 else arr


def G(pi, gamma):
    """``(1 - pi) (pi / (1 - pi))**gamma`` for ``pi`` in ``[0, 1)``.

    Evaluated as ``exp(gamma log pi + (1 - gamma) log(1 - pi))``; ``G(0) = 0``.
    """
    x = _as_beliefs(pi)
    if np.any((x < 0.0) | (x >= 1.0)):
        raise DomainError("G is defined for beliefs in [0, 1)")
    out = np.zeros_like(x)
    pos = x > 0.0
    xp = x[pos]
    out[pos] = np.exp(gamma * np.log(xp) + (1.0 - gamma) * np.log1p(-xp))
    return _unwrap(out, pi)


def G_prime(pi, gamma):
    """Derivative of :func:`G` on the open interval ``(0, 1)``."""
    x = _as_beliefs(pi)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("G_prime is defined for beliefs in (0, 1)")
    out = (gamma - x) / (x * (1.0 - x)) * G(x, gamma)
    return _unwrap(out, pi)


def b1_closed_form(d: DerivedParams) -> float:
    """Investment boundary of the single-right problem, ``gamma k / (gamma + k - 1)``."""
    return d.gamma * d.k / (d.gamma + d.k - 1.0)


def v1_eval(pi, d: DerivedParams):
    """Value function of the single-right problem."""
    x = _as_beliefs(pi)
    if np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("beliefs must lie in [0, 1]")
    b1 = b1_closed_form(d)
    a1 = (b1 - d.k) / G(b1, d.gamma)
    out = np.array(x - d.k, dtype=float)
    below = x < b1
    out[below] = a1 * G(x[below], d.gamma)
    return _unwrap(out, pi)
