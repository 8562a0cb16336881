"""Radial aggregation kernel for power-law potentials.

For an interaction gradient ``x |x|**(alpha - 2)`` in ``R^d``, a unit-mass
delta ring of radius 1 induces the inward radial speed ``phi(r)`` at radius
``r``.  This module evaluates ``phi``, its derivative, the normalised
monotonicity functional ``psi`` (whose sign decides whether ``phi(r)/r`` is
monotone), and the closed forms available at ``r = 0``, ``r = 1`` and on the
limiting boundary ``alpha = 2 - d``.

All integrals are over the polar angle ``theta`` in ``[0, pi]``.  In one
dimension the "sphere" is the two points ``{-1, +1}`` and every quantity is
an exact two-term sum.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ExcludedPointError
from .quadrature import QuadConfig, QuadratureResult, current_config, graded_breakpoints, integrate

TIE_TOL = 1e-12
# below this radius phi is integrated in folded form (relative accuracy as
# r -> 0); closer to r = 1 the folded form cancels badly and is not used
FOLD_BELOW = 0.5
_SQRT_PI = math.sqrt(math.pi)


class Regime(str, enum.Enum):
    SUPERCRITICAL = "SUPERCRITICAL"    # d + alpha >= 5
    CRITICAL_UPPER = "CRITICAL_UPPER"  # 4 < d + alpha < 5
    BALANCED = "BALANCED"              # d + alpha == 4
    SUBCRITICAL = "SUBCRITICAL"        # 2 < d + alpha < 4
    LIMITING = "LIMITING"              # d + alpha == 2


@dataclass(frozen=True)
class KernelParams:
    """Space dimension ``d`` and kernel exponent ``alpha``.

    The admissible range is ``2 - d < alpha < 2``.  The boundary value
    ``alpha = 2 - d`` is accepted only with ``limiting=True`` (and ``d >= 2``).
    """

    d: int
    alpha: float
    limiting: bool = False
    gamma: float = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d:
            raise DomainError(f"dimension must be an integer, got {self.d!r}")
        d = int(self.d)
        alpha = float(self.alpha)
        object.__setattr__(self, "d", d)
        if d < 1:
            raise DomainError(f"dimension must be >= 1, got {d}")
        if not math.isfinite(alpha):
            raise DomainError("alpha must be finite")
        if self.limiting:
            if d < 2:
                raise DomainError("limiting mode requires d >= 2")
            if abs(d + alpha - 2) > TIE_TOL:
                raise DomainError(f"limiting mode requires alpha = 2 - d = {2 - d}, got {alpha}")
            alpha = float(2 - d)
        elif not (2 - d < alpha < 2):
            raise DomainError(
                f"alpha = {alpha} outside the admissible interval ({2 - d}, 2) for d = {d}"
            )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", 4 - d - alpha)

    @classmethod
    def at_limit(cls, d: int) -> "KernelParams":
        return cls(d, 2 - d, limiting=True)


def regime(params: KernelParams) -> Regime:
    s = params.d + params.alpha
    if abs(s - 2) <= TIE_TOL:
        return Regime.LIMITING
    if abs(s - 4) <= TIE_TOL:
        return Regime.BALANCED
    if s >= 5 - TIE_TOL:
        return Regime.SUPERCRITICAL
    if s > 4:
        return Regime.CRITICAL_UPPER
    return Regime.SUBCRITICAL


# --- special functions -----------------------------------------------------

def gamma_fn(x: float) -> float:
    if not x > 0:
        raise DomainError(f"gamma_fn is defined here for x > 0 only, got {x}")
    return math.gamma(x)


def log_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"log_gamma is defined here for x > 0 only, got {x}")
    return math.lgamma(x)


def beta_fn(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn needs positive arguments, got ({a}, {b})")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in ``R^d``."""
    if int(d) != d or d < 1:
        raise DomainError(f"sphere_area needs an integer d >= 1, got {d}")
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _sphere_ratio(d: int) -> float:
    # omega_{d-1} / omega_d, the polar-angle averaging weight (d >= 2)
    return math.gamma(d / 2) / (_SQRT_PI * math.gamma((d - 1) / 2))


def _lower_sphere_gamma(d: int) -> float:
    # omega_{d-1} * Gamma((d-1)/2) = 2 pi^((d-1)/2); finite also at d = 1
    return 2 * math.pi ** ((d - 1) / 2)


def chord(r, theta):
    """Distance from ``r e_1`` to the unit-sphere point at polar angle ``theta``.

    Uses ``(1 - r)**2 + 4 r sin(theta/2)**2`` which avoids cancellation near
    ``r = 1, theta = 0``.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.sqrt((1 - r) ** 2 + 4 * r * np.sin(0.5 * theta) ** 2)
    return float(out) if out.ndim == 0 else out


def _check_r(r: float) -> float:
    r = float(r)
    if not (math.isfinite(r) and r >= 0):
        raise DomainError(f"radius must be finite and >= 0, got {r}")
    return r


def _breaks(r: float, upper: float) -> list[float] | None:
    gap = abs(r - 1)
    if gap < 0.1:
        return graded_breakpoints(0.0, upper, gap / 4)
    return None


# --- closed forms -----------------------------------------------------------

def phi_closed_limiting(d: int, r: float) -> float:
    """``phi`` on the boundary ``alpha = 2 - d``: 0 inside, 1/2 on, r^(1-d) outside."""
    if d < 2:
        raise DomainError("the limiting closed form needs d >= 2")
    r = _check_r(r)
    if r < 1:
        return 0.0
    if r == 1:
        return 0.5
    return r ** (1 - d)


def phi_closed_limiting_array(d: int, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r == 1] = 0.5
    outer = r > 1
    out[outer] = r[outer] ** (1 - d)
    return out


def phi_prime_at_zero(params: KernelParams) -> float:
    d, g = params.d, params.gamma
    if params.limiting:
        return 0.0
    return (_lower_sphere_gamma(d) / sphere_area(d)) * ((2 - g) / d) * _SQRT_PI / math.gamma(d / 2)


def phi_at_one(params: KernelParams) -> float:
    d, g = params.d, params.gamma
    if params.limiting:
        return 0.5
    if not g < 2:
        raise DomainError(f"closed form for phi(1) needs gamma < 2, got {g}; use phi()")
    return (
        (_lower_sphere_gamma(d) / sphere_area(d))
        * _SQRT_PI
        * math.gamma(2 - g)
        / (math.gamma((d - g + 2) / 2) * math.gamma((2 - g) / 2))
    )


def psi_at_one(params: KernelParams) -> float:
    d, g = params.d, params.gamma
    if not g < 1:
        raise DomainError(f"closed form for psi(1) needs gamma < 1, got {g}; use psi()")
    return 2.0 ** (-g) * g * (d - 1) / (d - g) * beta_fn((d - 1) / 2, (1 - g) / 2)


def psi_capital(k: int, r: float) -> float:
    """Closed form of the integral of ``(sin(theta)/A(r, theta))**k`` over ``[0, pi]``."""
    if int(k) != k or k < 0:
        raise DomainError(f"k must be a non-negative integer, got {k}")
    r = _check_r(r)
    base = sphere_area(k + 2) / sphere_area(k + 1)
    return base if r <= 1 else base * r ** (-k)


def psi_capital_quadrature(k: int, r: float) -> QuadratureResult:
    r = _check_r(r)

    def f(t):
        return (np.sin(t) / chord(r, t)) ** k

    return integrate(f, 0.0, math.pi, _breaks(r, math.pi))


# --- one-dimensional exact forms --------------------------------------------

def _phi_1d(alpha: float, r: float) -> float:
    p = alpha - 1
    if r < 1:
        # (1+r)^p - (1-r)^p without cancellation at small r
        lo = (1 - r) ** p
        return 0.5 * lo * math.expm1(p * (math.log1p(r) - math.log1p(-r)))
    return 0.5 * ((r - 1) ** p + (r + 1) ** p)


def _phi_prime_1d(alpha: float, r: float) -> float:
    p = alpha - 1
    return 0.5 * p * (abs(r - 1) ** (p - 1) + (r + 1) ** (p - 1))


def _psi_1d(alpha: float, r: float) -> float:
    return 2 * (r * _phi_prime_1d(alpha, r) - _phi_1d(alpha, r)) / (r * (2 - alpha))


# --- integrands ----------------------------------------------------------------

def _phi_integrand_inner(d: int, alpha: float, r: float):
    # small r: fold theta -> pi - theta onto [0, pi/2]; the odd part in cos(theta)
    # is formed as a difference of powers via expm1/log1p so phi keeps its
    # relative accuracy as r -> 0
    p = alpha - 2

    def f(t):
        s = np.sin(t)
        c = np.cos(t)
        ap2 = (1 - r) ** 2 + 4 * r * np.sin(0.5 * t) ** 2
        am2 = (1 - r) ** 2 + 4 * r * np.cos(0.5 * t) ** 2
        x = -4 * r * c / am2
        with np.errstate(invalid="ignore", divide="ignore"):
            log_ratio = np.where(np.abs(x) < 0.5, np.log1p(x), np.log(ap2) - np.log(am2))
        amp = am2 ** (0.5 * p)
        odd = amp * np.expm1(0.5 * p * log_ratio)
        even = ap2 ** (0.5 * p) + amp
        return s ** (d - 2) * (r * even - c * odd)

    return f


def _phi_integrand_outer(d: int, alpha: float, r: float):
    p = alpha - 2

    def f(t):
        h2 = np.sin(0.5 * t) ** 2
        a2 = (1 - r) ** 2 + 4 * r * h2
        # r - cos(theta) written to stay accurate at r = 1, theta -> 0
        return ((r - 1) + 2 * h2) * np.sin(t) ** (d - 2) * a2 ** (0.5 * p)

    return f


def _phi_prime_integrand(d: int, alpha: float, r: float):
    p = alpha - 2

    def f(t):
        h2 = np.sin(0.5 * t) ** 2
        a2 = (1 - r) ** 2 + 4 * r * h2
        u = (r - 1) + 2 * h2
        return np.sin(t) ** (d - 2) * a2 ** (0.5 * p) * (1 + p * u * u / a2)

    return f


def _psi_integrand(d: int, alpha: float, r: float):
    def f(t):
        s = np.sin(t)
        a2 = (1 - r) ** 2 + 4 * r * np.sin(0.5 * t) ** 2
        return s ** (d - 2) * a2 ** (0.5 * (alpha - 4)) * (d * s * s - (d - 1) * a2)

    return f


# --- quadrature-backed evaluators -------------------------------------------------

@functools.lru_cache(maxsize=1 << 16)
def _phi_quad(d: int, alpha: float, r: float, cfg: QuadConfig) -> QuadratureResult:
    if r < FOLD_BELOW:
        f = _phi_integrand_inner(d, alpha, r)
        upper = 0.5 * math.pi
    else:
        f = _phi_integrand_outer(d, alpha, r)
        upper = math.pi
    res = integrate(f, 0.0, upper, _breaks(r, upper), cfg)
    w = _sphere_ratio(d)
    return QuadratureResult(w * res.value, w * res.abs_error_estimate, res.panels_used)


def phi(params: KernelParams, r: float, method: str = "auto") -> QuadratureResult:
    """Radial kernel ``phi(r)``.

    ``method="auto"`` uses exact values at ``r = 0`` and on the limiting
    boundary; ``method="quadrature"`` forces numerical integration (except in
    one dimension, where the two-point sphere average is already exact).
    """
    r = _check_r(r)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    auto = method == "auto"
    if r == 0 and auto:
        return QuadratureResult(0.0, 0.0, 1)
    if params.limiting and auto:
        return QuadratureResult(phi_closed_limiting(params.d, r), 0.0, 1)
    if params.d == 1:
        return QuadratureResult(_phi_1d(params.alpha, r), 0.0, 1)
    return _phi_quad(params.d, params.alpha, r, current_config())


def phi_value(params: KernelParams, r: float) -> float:
    return phi(params, r).value


def phi_prime(params: KernelParams, r: float, method: str = "auto") -> QuadratureResult:
    """Derivative ``phi'(r)`` for ``r != 1``.

    At ``r = 1`` the integrand behaves like ``theta**(d + alpha - 4)``, which
    is not integrable for ``d + alpha <= 3``; the point is excluded for all
    parameters and one-sided values should be requested instead.
    """
    r = _check_r(r)
    if r == 1:
        raise ExcludedPointError("phi_prime is not evaluated at r = 1; use r = 1 -/+ h")
    if r == 0 and method == "auto":
        return QuadratureResult(phi_prime_at_zero(params), 0.0, 1)
    if params.d == 1:
        return QuadratureResult(_phi_prime_1d(params.alpha, r), 0.0, 1)
    f = _phi_prime_integrand(params.d, params.alpha, r)
    res = integrate(f, 0.0, math.pi, _breaks(r, math.pi))
    w = _sphere_ratio(params.d)
    return QuadratureResult(w * res.value, w * res.abs_error_estimate, res.panels_used)


def psi(params: KernelParams, r: float) -> QuadratureResult:
    """Normalised ``r phi'(r) - phi(r)``; its sign decides the monotonicity of ``phi/r``."""
    r = _check_r(r)
    if r == 0:
        return QuadratureResult(0.0, 0.0, 1)
    if params.d == 1:
        return QuadratureResult(_psi_1d(params.alpha, r), 0.0, 1)
    f = _psi_integrand(params.d, params.alpha, r)
    return integrate(f, 0.0, math.pi, _breaks(r, math.pi))


def psi_normalization(params: KernelParams, r: float) -> float:
    """Factor ``c`` with ``r phi' - phi = c * psi``."""
    d = params.d
    if d == 1:
        return r * (2 - params.alpha) / sphere_area(1)
    return r * (2 - params.alpha) * _sphere_ratio(d) / (d - 1)
