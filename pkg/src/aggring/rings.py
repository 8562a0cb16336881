"""Delta-ring configurations and the similarity condition.

A radially symmetric atomic measure is a set of rings ``rho_1 < ... < rho_n``
with masses ``m_k`` plus an atom ``m_0`` at the origin.  It generates a
first-kind similarity solution exactly when the inward speed ``w`` satisfies
``w(rho_k) / rho_k = const`` on every ring.

For geometric radii ``rho_k = lam**(k-1)`` and the substitution
``m_k = rho_k**(2 - alpha) x_k`` the condition becomes the linear system
``B x = 1`` with ``B[k, j] = phi(lam**(k-j)) * lam**(j-k)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, SearchError, SolveError
from .kernel import KernelParams, Regime, phi_value, regime

N_MAX = 64
ORIGIN_CHECK_RADIUS = 1e3
ORIGIN_CHECK_TOL = 1e-3
# a weight counts as positive only when it is clearly above rounding level;
# in the balanced regime exact solutions have inner weights equal to zero
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RingConfig:
    params: KernelParams
    radii: np.ndarray
    masses: np.ndarray
    origin_mass: float = 0.0
    rate: float | None = None

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float).reshape(-1)
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if radii.shape != masses.shape:
            raise DomainError("radii and masses must have the same length")
        if radii.size and not (np.all(np.isfinite(radii)) and radii[0] > 0):
            raise DomainError("ring radii must be finite and positive")
        if radii.size > 1 and not np.all(np.diff(radii) > 0):
            raise DomainError("ring radii must be strictly increasing")
        if not np.all(np.isfinite(masses)):
            raise DomainError("ring masses must be finite")
        if not (math.isfinite(self.origin_mass) and self.origin_mass >= 0):
            raise DomainError("origin mass must be finite and >= 0")
        if self.rate is not None and not (math.isfinite(self.rate) and self.rate > 0):
            raise DomainError("rate must be positive when set")
        radii.flags.writeable = False
        masses.flags.writeable = False
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "origin_mass", float(self.origin_mass))

    @property
    def n(self) -> int:
        return self.radii.size

    @property
    def total_mass(self) -> float:
        return math.fsum([self.origin_mass, *self.masses.tolist()])

    @property
    def is_admissible(self) -> bool:
        """All ring masses strictly positive."""
        return bool(np.all(self.masses > 0))

    def scaled(self, s: float) -> "RingConfig":
        rate = None if self.rate is None else self.rate * s
        return RingConfig(self.params, self.radii, self.masses * s, self.origin_mass * s, rate)


@dataclass(frozen=True)
class SolveReport:
    matrix_condition_estimate: float
    residual_inf_norm: float
    positivity: bool
    lambda_used: float | None = None


# --- velocities ----------------------------------------------------------------

def _velocity_limiting(config: RingConfig, r: np.ndarray) -> np.ndarray:
    # phi = 0 inside, 1/2 on, r^(1-d) outside: w(r) = r^(1-d) * (enclosed mass)
    d = config.params.d
    radii, masses = config.radii, config.masses
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    below = np.searchsorted(radii, r, side="left")
    upto = np.searchsorted(radii, r, side="right")
    on = cum[upto] - cum[below]
    enclosed = config.origin_mass + cum[below] + 0.5 * on
    return r ** (1 - d) * enclosed


def velocity_w(config: RingConfig, r):
    """Inward radial speed at radius ``r`` (scalar or array, ``r > 0``)."""
    arr = np.asarray(r, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("velocity is evaluated at r > 0 only")
    params = config.params
    a1 = params.alpha - 1
    flat = arr.reshape(-1)
    if params.limiting:
        out = _velocity_limiting(config, flat)
    else:
        out = config.origin_mass * flat**a1
        for rho, m in zip(config.radii.tolist(), config.masses.tolist()):
            coef = rho**a1 * m
            out = out + coef * np.array([phi_value(params, x / rho) for x in flat.tolist()])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def ring_ratios(config: RingConfig) -> np.ndarray:
    """``w(rho_k) / rho_k`` on every ring."""
    if config.n == 0:
        return np.empty(0)
    return velocity_w(config, config.radii) / config.radii


def ratio_residual(config: RingConfig) -> float:
    if config.n == 0:
        raise DomainError("ratio_residual needs at least one ring")
    q = ring_ratios(config)
    mu = float(np.mean(q))
    if mu == 0:
        return math.inf
    return float(np.max(np.abs(q - mu)) / abs(mu))


@functools.lru_cache(maxsize=256)
def origin_self_test(params: KernelParams, s: float = ORIGIN_CHECK_RADIUS) -> float:
    """Check that a far ring looks like a point mass: ``phi(s) / s**(alpha-1) -> 1``.

    Returns the deviation; raises ``ContractError`` if it exceeds the tolerance.
    This justifies the origin-atom speed ``m_0 r**(alpha - 1)``.
    """
    dev = abs(phi_value(params, s) / s ** (params.alpha - 1) - 1)
    if dev > ORIGIN_CHECK_TOL:
        raise ContractError(
            f"phi(s)/s^(alpha-1) deviates from 1 by {dev:.3g} at s = {s} for {params}"
        )
    return dev


# --- linear systems --------------------------------------------------------------

def build_B(params: KernelParams, n: int, lam: float) -> np.ndarray:
    if n < 1 or n > N_MAX:
        raise DomainError(f"n must be in [1, {N_MAX}], got {n}")
    if not lam > 1:
        raise DomainError(f"lambda must be > 1, got {lam}")
    by_offset = {m: phi_value(params, lam**m) * lam ** (-m) for m in range(-(n - 1), n)}
    k = np.arange(n)
    return np.vectorize(by_offset.__getitem__, otypes=[float])(k[:, None] - k[None, :])


def _solve(mat: np.ndarray) -> np.ndarray:
    ones = np.ones(mat.shape[0])
    try:
        x = np.linalg.solve(mat, ones)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"singular similarity system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveError("similarity system produced non-finite solution")
    return x


def _report(mat: np.ndarray, x: np.ndarray, lam: float | None) -> SolveReport:
    resid = float(np.max(np.abs(mat @ x - 1)))
    cond = float(np.linalg.cond(mat, p=np.inf))
    return SolveReport(cond, resid, is_positive(x), lam)


def is_positive(x) -> bool:
    """Every entry exceeds ``POSITIVITY_TOL`` times the largest magnitude."""
    x = np.asarray(x, dtype=float)
    return bool(x.size and np.all(x > POSITIVITY_TOL * np.max(np.abs(x))))


def _finish(params, radii, masses, positive, normalize):
    if normalize and positive:
        total = math.fsum(masses.tolist())
        return RingConfig(params, radii, masses / total, 0.0, 1.0 / total)
    return RingConfig(params, radii, masses, 0.0, 1.0)


def solve_geometric(
    params: KernelParams, n: int, lam: float, normalize: bool = True
) -> tuple[RingConfig, SolveReport]:
    """Geometric ``n``-ring similarity configuration with ratio ``lam``.

    A non-positive solution is returned with ``positivity=False``; masses are
    only normalised when they are all positive.
    """
    if n >= 2 and regime(params) is not Regime.SUBCRITICAL:
        raise ContractError(
            f"multi-ring construction needs 2 - d < alpha < 4 - d; got regime {regime(params).value}"
        )
    mat = build_B(params, n, lam)
    x = _solve(mat)
    report = _report(mat, x, lam)
    radii = lam ** np.arange(n, dtype=float)
    masses = radii ** (2 - params.alpha) * x
    return _finish(params, radii, masses, report.positivity, normalize), report


def general_matrix(params: KernelParams, radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    a1 = params.alpha - 1
    n = radii.size
    mat = np.empty((n, n))
    for k in range(n):
        for j in range(n):
            mat[k, j] = phi_value(params, radii[k] / radii[j]) * radii[j] ** a1 / radii[k]
    return mat


def solve_general(
    params: KernelParams, radii, normalize: bool = True
) -> tuple[RingConfig, SolveReport]:
    radii = np.asarray(radii, dtype=float)
    if radii.size < 1 or radii.size > N_MAX:
        raise DomainError(f"need between 1 and {N_MAX} radii")
    if radii[0] <= 0 or (radii.size > 1 and not np.all(np.diff(radii) > 0)):
        raise DomainError("radii must be positive and strictly increasing")
    mat = general_matrix(params, radii)
    m = _solve(mat)
    report = _report(mat, m, None)
    return _finish(params, radii, m, report.positivity, normalize), report


# --- lambda search ----------------------------------------------------------------

@dataclass(frozen=True)
class LambdaSearch:
    threshold: float
    safe: float
    solves: int


def _positive(params, n, lam) -> bool:
    try:
        _, rep = solve_geometric(params, n, lam, normalize=False)
    except SolveError:
        return False
    return rep.positivity


def search_lambda(params: KernelParams, n: int, cap: float = 2.0**60, rel_tol: float = 1e-3) -> LambdaSearch:
    """Doubling then bisection for the smallest ratio giving all-positive masses.

    The bracket is ``(lam/2, lam]`` around the first positive ``lam`` found
    by doubling from 2; bisection stops at relative width ``rel_tol``.
    """
    if regime(params) is not Regime.SUBCRITICAL:
        raise ContractError("lambda search applies to the subcritical regime only")
    if n < 2:
        raise DomainError("lambda search needs n >= 2")
    lam = 2.0
    solves = 0
    while True:
        solves += 1
        if _positive(params, n, lam):
            break
        if lam >= cap:
            raise SearchError(f"no positive solution found for lambda up to {cap:g} ({params}, n={n})")
        lam = min(2 * lam, cap)
    lo, hi = (1.0 if lam == 2.0 else lam / 2), lam
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        solves += 1
        if _positive(params, n, mid):
            hi = mid
        else:
            lo = mid
    safe = 2 * hi
    solves += 1
    if not _positive(params, n, safe):
        # positivity need not be monotone in lambda; fall back to the bracket end
        safe = hi
    return LambdaSearch(threshold=hi, safe=safe, solves=solves)


def find_lambda(params: KernelParams, n: int, cap: float = 2.0**60) -> float:
    return search_lambda(params, n, cap).safe
