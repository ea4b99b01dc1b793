"""Jacobi and discrete-Chebyshev polynomial bases with input derivatives.

Both families share one three-term recurrence

    f_k(g) = (a_k g + b_k) f_{k-1}(g) + c_k f_{k-2}(g),   f_0 = 1,

and the derivative table comes from differentiating that recurrence, so all
degrees 0..n and their derivatives are produced in one pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError

JACOBI = "jacobi"
DISCRETE_CHEBYSHEV = "discrete-chebyshev"
FAMILIES = (JACOBI, DISCRETE_CHEBYSHEV)

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial family, degree and (for Jacobi) the alpha/beta shape parameters."""

    family: str = JACOBI
    degree: int = 3
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown basis family {self.family!r}; choose from {FAMILIES}")
        if int(self.degree) != self.degree or self.degree < 0:
            raise ConfigError(f"degree must be a non-negative integer, got {self.degree}")
        if self.family == JACOBI and (self.alpha <= -1 or self.beta <= -1):
            raise ConfigError(
                f"Jacobi parameters need alpha > -1 and beta > -1, got ({self.alpha}, {self.beta})"
            )

    @property
    def size(self) -> int:
        return self.degree + 1


@dataclass
class BasisTable:
    values: np.ndarray  # (batch, n+1)
    derivs: np.ndarray  # (batch, n+1)


def jacobi_coeffs(n: int, alpha: float, beta: float) -> tuple[float, float, float]:
    """Recurrence coefficients ``(a_n, b_n, c_n)`` for Jacobi degree ``n >= 2``."""
    if n < 2:
        raise DomainError(f"recurrence coefficients are defined for n >= 2, got {n}")
    s = alpha + beta
    d1 = 2.0 * n * (n + s)
    d2 = 2.0 * n + s - 2.0
    if d1 == 0.0 or d2 == 0.0:
        raise DomainError(
            f"Jacobi recurrence denominator vanishes at n={n}, alpha={alpha}, beta={beta}"
        )
    a = (2 * n + s - 1) * (2 * n + s) / d1
    b = (2 * n + s - 1) * (alpha * alpha - beta * beta) / (d1 * d2)
    c = -2.0 * (n + alpha - 1) * (n + beta - 1) * (2 * n + s) / (d1 * d2)
    return a, b, c


@lru_cache(maxsize=64)
def _jacobi_arrays(degree, alpha, beta):
    a = np.zeros(degree + 1)
    b = np.zeros(degree + 1)
    c = np.zeros(degree + 1)
    for k in range(2, degree + 1):
        a[k], b[k], c[k] = jacobi_coeffs(k, alpha, beta)
    a.flags.writeable = b.flags.writeable = c.flags.writeable = False
    return a, b, c


@lru_cache(maxsize=64)
def _chebyshev_arrays(degree):
    a = np.zeros(degree + 1)
    b = np.zeros(degree + 1)
    c = np.zeros(degree + 1)
    for k in range(2, degree + 1):
        a[k] = 2.0
        # stability factor (2k-1)/(4k^2-1) taken as a fixed scalar, i.e. 1/(2k+1)
        c[k] = -(2.0 * k - 1.0) / (4.0 * k * k - 1.0)
    a.flags.writeable = b.flags.writeable = c.flags.writeable = False
    return a, b, c


def _check_domain(gamma):
    if gamma.size and not np.all(np.abs(gamma) <= 1.0 + _DOMAIN_SLACK):
        bad = float(gamma.ravel()[np.argmax(np.abs(gamma).ravel())])
        raise DomainError(f"basis input {bad!r} lies outside [-1, 1]")


def eval_jacobi(gamma, spec: BasisSpec) -> BasisTable:
    """Jacobi values and derivatives for degrees ``0..spec.degree`` at each point of ``gamma``.

    ``gamma`` is flattened; the result has one row per element.
    """
    if spec.family != JACOBI:
        raise ConfigError(f"eval_jacobi called with a {spec.family!r} spec")
    gamma = np.ascontiguousarray(gamma, dtype=np.float64).reshape(-1)
    _check_domain(gamma)
    alpha, beta = float(spec.alpha), float(spec.beta)
    a, b, c = _jacobi_arrays(spec.degree, alpha, beta)
    values, derivs = kernels.recurrence_table(
        gamma, a, b, c, 0.5 * (alpha + beta + 2.0), 0.5 * (alpha - beta), spec.degree
    )
    return BasisTable(values, derivs)


def eval_discrete_chebyshev(gamma, n: int) -> BasisTable:
    """Discrete-Chebyshev values ``P_0..P_n`` and derivatives at each point of ``gamma``."""
    if n < 0:
        raise ConfigError(f"degree must be non-negative, got {n}")
    gamma = np.ascontiguousarray(gamma, dtype=np.float64).reshape(-1)
    _check_domain(gamma)
    a, b, c = _chebyshev_arrays(int(n))
    values, derivs = kernels.recurrence_table(gamma, a, b, c, 1.0, 0.0, int(n))
    return BasisTable(values, derivs)


def evaluate(gamma, spec: BasisSpec) -> BasisTable:
    if spec.family == JACOBI:
        return eval_jacobi(gamma, spec)
    return eval_discrete_chebyshev(gamma, spec.degree)
