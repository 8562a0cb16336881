"""Power-series evaluation of ``psi`` on ``[0, 1)`` for ``4 < d + alpha < 5``.

Writing ``d + alpha = 4 - gamma`` with ``gamma`` in ``(-1, 0)``::

    psi(r) = -P * sum_{k>=1} (d-1)!! / ((d+2k)!! (2k-2)!!) * a_k * r**(2k)

with ``P = 2`` for odd ``d`` and ``P = pi`` for even ``d``, and
``a_1 = -gamma (2 - gamma)``, ``a_{k+1} = a_k (2k + gamma)(d + 2k - 2 + gamma)``.

Every coefficient is negative on that band, so the partial sums decrease
monotonically.  The series is an independent check on the quadrature route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, RangeError
from .kernel import KernelParams

R_MAX = 0.95
K_MAX = 500
TRUNCATION_TOL = 1e-15


def double_factorial(n: int) -> float:
    if int(n) != n or n < -1:
        raise DomainError(f"double factorial needs an integer n >= -1, got {n}")
    out = 1.0
    k = int(n)
    while k > 1:
        out *= k
        k -= 2
    return out


@dataclass(frozen=True)
class SeriesCoeffs:
    params: KernelParams
    a: np.ndarray
    terms: np.ndarray
    K: int

    @property
    def prefactor(self) -> float:
        return _prefactor(self.params.d)


def _prefactor(d: int) -> float:
    return 2.0 if d % 2 else math.pi


def _check_band(params: KernelParams) -> None:
    g = params.gamma
    if not (-1 < g < 0):
        raise DomainError(
            f"series needs gamma = 4 - d - alpha in (-1, 0), got {g} (d={params.d}, alpha={params.alpha})"
        )


def _term_ratio(d: int, g: float, k: int) -> float:
    # c_{k+1} / c_k
    return (2 * k + g) * (d + 2 * k - 2 + g) / ((d + 2 * k + 2) * (2 * k))


def _first_term(d: int, g: float) -> float:
    # (2k-2)!! = 0!! = 1 at k = 1
    return -_prefactor(d) * double_factorial(d - 1) / double_factorial(d + 2) * (-g * (2 - g))


def coefficients(params: KernelParams, K: int) -> SeriesCoeffs:
    """Recurrence values ``a_1..a_K`` and assembled coefficients ``c_1..c_K``.

    The ``a_k`` grow factorially and overflow to ``inf`` beyond k ~ 85; the
    ``c_k`` are built from ratios and stay finite.
    """
    _check_band(params)
    if K < 1:
        raise DomainError("truncation order K must be >= 1")
    d, g = params.d, params.gamma
    a = np.empty(K)
    c = np.empty(K)
    a[0] = -g * (2 - g)
    c[0] = _first_term(d, g)
    with np.errstate(over="ignore"):
        for k in range(1, K):
            a[k] = a[k - 1] * (2 * k + g) * (d + 2 * k - 2 + g)
            c[k] = c[k - 1] * _term_ratio(d, g, k)
    return SeriesCoeffs(params, a, c, K)


def psi_series(params: KernelParams, r: float) -> float:
    _check_band(params)
    r = float(r)
    if not r >= 0:
        raise DomainError(f"r must be >= 0, got {r}")
    if r > R_MAX:
        raise RangeError(f"series is used only for r <= {R_MAX}; use kernel.psi for r = {r}")
    if r == 0:
        return 0.0
    d, g = params.d, params.gamma
    r2 = r * r
    term = _first_term(d, g) * r2
    total = 0.0
    for k in range(1, K_MAX + 1):
        if abs(term) < TRUNCATION_TOL * max(1.0, abs(total)):
            return total
        total += term
        term *= _term_ratio(d, g, k) * r2
    raise ConvergenceError(f"series did not converge within {K_MAX} terms at r = {r}", best=total)
