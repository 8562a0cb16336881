"""Grid sweeps that check the kernel's sign and identity claims numerically.

Each check returns a :class:`VerificationReport` whose results carry a
signed *margin*: positive means the claim holds with that much room, so a
shrinking margin is visible before it flips sign.

Two thresholds are used.  Strict sign claims must clear ``SIGN_TOL``;
identities ("numerically zero", "two routes agree") must stay inside
``IDENTITY_TOL``.  Both sit above the default quadrature tolerance.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import series
from .errors import AggringError, ContractError
from .kernel import (
    KernelParams,
    Regime,
    chord,
    log_gamma,
    phi,
    phi_at_one,
    phi_prime,
    phi_prime_at_zero,
    phi_value,
    psi,
    psi_at_one,
    regime,
    sphere_area,
)
from .quadrature import QuadConfig, current_config, integrate, quad_settings

SIGN_TOL = 1e-10
IDENTITY_TOL = 1e-8
SERIES_TOL = 1e-6
BOUNDARY_EXCLUSION = 1e-3
SUBLINEAR_RADII = (10.0, 100.0, 1000.0)
ASYMPTOTE_TOL = 1e-3
BALL_RINGS = 400
BALL_TIME_TOL = 5e-3
BALL_SLOPE_TOL = 1e-3


@dataclass(frozen=True)
class PointResult:
    label: str
    r: float | None
    value: float
    expected: str
    margin: float
    passed: bool


@dataclass
class VerificationReport:
    claim_id: str
    params_grid: list[tuple[int, float]]
    r_grid: list[float]
    results: list[PointResult] = field(default_factory=list)
    error: str | None = None

    def add(self, label, r, value, expected, margin) -> None:
        margin = float(margin)
        self.results.append(PointResult(label, r, float(value), expected, margin, margin > 0))

    @property
    def passed(self) -> bool:
        return self.error is None and all(p.passed for p in self.results)

    @property
    def worst(self) -> PointResult | None:
        return min(self.results, key=lambda p: p.margin, default=None)

    @property
    def summary(self) -> dict:
        worst = self.worst
        return {
            "claim_id": self.claim_id,
            "points": len(self.results),
            "passed": sum(p.passed for p in self.results),
            "failed": sum(not p.passed for p in self.results),
            "worst_margin": None if worst is None else worst.margin,
            "worst_label": None if worst is None else worst.label,
            "error": self.error,
        }


def _grid(params: KernelParams) -> list[tuple[int, float]]:
    return [(params.d, params.alpha)]


def _require(params: KernelParams, allowed: set[Regime], claim: str) -> None:
    reg = regime(params)
    if reg not in allowed:
        names = ", ".join(sorted(a.value for a in allowed))
        raise ContractError(f"{claim} applies to {names}; got {reg.value} for {params}")


# --- sign claims on psi --------------------------------------------------------

def check_monotonicity(params: KernelParams, r_grid) -> VerificationReport:
    """``phi/r`` strictly decreasing, or the balanced zero-then-negative pattern."""
    _require(params, {Regime.SUPERCRITICAL, Regime.CRITICAL_UPPER, Regime.BALANCED}, "check_monotonicity")
    r_grid = [float(r) for r in r_grid]
    rep = VerificationReport("monotonicity", _grid(params), r_grid)
    balanced = regime(params) is Regime.BALANCED
    for r in r_grid:
        v = psi(params, r).value
        if balanced and r <= 1:
            rep.add("psi zero on (0,1]", r, v, f"|psi| < {IDENTITY_TOL:g}", IDENTITY_TOL - abs(v))
        else:
            rep.add("psi negative", r, v, f"psi < -{SIGN_TOL:g}", -SIGN_TOL - v)
    return rep


def check_subcritical_increase(params: KernelParams, r_grid) -> VerificationReport:
    _require(params, {Regime.SUBCRITICAL}, "check_subcritical_increase")
    r_grid = [float(r) for r in r_grid]
    if any(not 0 < r < 1 for r in r_grid):
        raise ContractError("check_subcritical_increase needs a grid inside (0, 1)")
    rep = VerificationReport("subcritical_increase", _grid(params), r_grid)
    for r in r_grid:
        v = psi(params, r).value
        rep.add("psi positive", r, v, f"psi > {SIGN_TOL:g}", v - SIGN_TOL)
    return rep


# --- identities at r = 0 and r = 1 ----------------------------------------------

def check_lemma2(params: KernelParams) -> VerificationReport:
    """``phi(1) > phi'(0) > 0``, with both values computed by two routes."""
    _require(params, {Regime.SUBCRITICAL}, "check_lemma2")
    rep = VerificationReport("lemma2", _grid(params), [0.0, 1.0])
    one_cf = phi_at_one(params)
    one_q = phi(params, 1.0, method="quadrature").value
    zero_cf = phi_prime_at_zero(params)
    zero_q = phi_prime(params, 0.0, method="quadrature").value
    rep.add("phi(1) closed vs quadrature", 1.0, one_cf - one_q, f"|diff| < {IDENTITY_TOL:g}",
            IDENTITY_TOL - abs(one_cf - one_q))
    rep.add("phi'(0) closed vs quadrature", 0.0, zero_cf - zero_q, f"|diff| < {IDENTITY_TOL:g}",
            IDENTITY_TOL - abs(zero_cf - zero_q))
    gap = min(one_cf, one_q) - max(zero_cf, zero_q)
    rep.add("phi(1) > phi'(0)", None, gap, f"gap > {SIGN_TOL:g}", gap - SIGN_TOL)
    low = min(zero_cf, zero_q)
    rep.add("phi'(0) > 0", 0.0, low, f"value > {SIGN_TOL:g}", low - SIGN_TOL)
    return rep


def gamma_inequality_sides(d: int, gamma: float) -> tuple[float, float]:
    """Logs of ``Gamma(2-g) Gamma((d+2)/2)`` and ``Gamma((d-g+2)/2) Gamma((4-g)/2)``."""
    left = log_gamma(2 - gamma) + log_gamma((d + 2) / 2)
    right = log_gamma((d - gamma + 2) / 2) + log_gamma((4 - gamma) / 2)
    return left, right


def check_gamma_inequality(params: KernelParams) -> VerificationReport:
    g = params.gamma
    if not 0 < g < 2:
        raise ContractError(f"check_gamma_inequality needs gamma in (0, 2), got {g}")
    rep = VerificationReport("gamma_inequality", _grid(params), [])
    left, right = gamma_inequality_sides(params.d, g)
    # compare in log space; the margin is log(left / right)
    rep.add("log-convexity inequality", None, left - right, "log(lhs/rhs) > 0", left - right)
    return rep


def check_limit_sublinear(params: KernelParams) -> VerificationReport:
    """``phi(r)/r -> 0``: decreasing samples plus the ``r**(alpha-1)`` far field.

    Because ``alpha < 2``, a far field ``phi(r) ~ r**(alpha-1)`` forces
    ``phi(r)/r ~ r**(alpha-2) -> 0``; checking the asymptote is sharper than a
    fixed fraction of ``phi(1)``, which ``r = 1000`` cannot reach when ``alpha``
    is close to 2 (there ``1000**(alpha-2)`` is still of order one).
    """
    rep = VerificationReport("limit_sublinear", _grid(params), list(SUBLINEAR_RADII))
    ratios = [phi_value(params, r) / r for r in SUBLINEAR_RADII]
    for (r0, q0), (r1, q1) in zip(zip(SUBLINEAR_RADII, ratios), zip(SUBLINEAR_RADII[1:], ratios[1:])):
        rel = (q0 - q1) / abs(q0) if q0 else -math.inf
        rep.add(f"phi/r decreases {r0:g}->{r1:g}", r1, q1, "relative drop > 0", rel)
    r_far = SUBLINEAR_RADII[-1]
    dev = abs(phi_value(params, r_far) / r_far ** (params.alpha - 1) - 1)
    rep.add("far field phi ~ r^(alpha-1)", r_far, dev, f"|phi/r^(alpha-1) - 1| < {ASYMPTOTE_TOL:g}",
            ASYMPTOTE_TOL - dev)
    return rep


# --- the band 4 < d + alpha < 5 ---------------------------------------------------

def _psi_parts(params: KernelParams, r: float) -> tuple[float, float]:
    d, a = params.d, params.alpha

    def high(t):
        return np.sin(t) ** d * chord(r, t) ** (a - 4)

    def low(t):
        return np.sin(t) ** (d - 2) * chord(r, t) ** (a - 2)

    return integrate(high, 0.0, math.pi).value, integrate(low, 0.0, math.pi).value


def check_critical_routes(params: KernelParams, r_inner=None, r_outer=(2.0, 5.0)) -> VerificationReport:
    """Three routes to ``psi < 0`` when ``4 < d + alpha < 5``.

    Series against quadrature on ``(0, 1)``, the Beta-function value at
    ``r = 1`` against quadrature, and the inversion ``A(r) = r A(1/r)`` that
    carries the sign to ``r > 1``.
    """
    _require(params, {Regime.CRITICAL_UPPER}, "check_critical_routes")
    if params.d < 3:
        raise ContractError("the series route needs d >= 3")
    r_inner = [round(0.1 * k, 12) for k in range(1, 10)] if r_inner is None else list(r_inner)
    rep = VerificationReport("critical_routes", _grid(params), [*r_inner, 1.0, *r_outer])
    for r in r_inner:
        s = series.psi_series(params, r)
        q = psi(params, r).value
        rep.add("series vs quadrature", r, s - q, f"|diff| < {SERIES_TOL:g}", SERIES_TOL - abs(s - q))
    cf = psi_at_one(params)
    q1 = psi(params, 1.0).value
    rep.add("psi(1) closed vs quadrature", 1.0, cf - q1, f"|diff| < {IDENTITY_TOL:g}",
            IDENTITY_TOL - abs(cf - q1))
    rep.add("psi(1) negative", 1.0, cf, f"psi < -{SIGN_TOL:g}", -SIGN_TOL - cf)
    a, d = params.alpha, params.d
    for r in r_outer:
        hi_part, lo_part = _psi_parts(params, 1 / r)
        scaled = r ** (a - 4) * (d * hi_part - (d - 1) * r * r * lo_part)
        direct = psi(params, r).value
        bound = r ** (a - 4) * (d * hi_part - (d - 1) * lo_part)
        rep.add("inversion vs direct", r, scaled - direct, f"|diff| < {IDENTITY_TOL:g}",
                IDENTITY_TOL - abs(scaled - direct))
        rep.add("psi(r) <= r^(alpha-4) psi(1/r) < 0", r, scaled, f"psi < -{SIGN_TOL:g}",
                min(-SIGN_TOL - scaled, bound - scaled))
    return rep


# --- limiting boundary: uniform ball ----------------------------------------------------

def check_uniform_ball(params: KernelParams, M: int = BALL_RINGS) -> VerificationReport:
    """Linear speed and collapse at ``1/omega_d`` for a discretized unit-density ball."""
    from .dynamics import IntegrateOptions, discretize_ball, integrate as run

    _require(params, {Regime.LIMITING}, "check_uniform_ball")
    d = params.d
    ball = discretize_ball(d, M)
    rep = VerificationReport("uniform_ball", _grid(params), [])
    rep.add("slope", None, *_slope_margin(ball))
    T0 = 1 / sphere_area(d)
    traj = run(ball, 2 * T0, IntegrateOptions(save_every=10**9))
    rel = abs(traj.blowup_time / T0 - 1)
    rep.add("collapse time vs 1/omega_d", None, traj.blowup_time, f"within {BALL_TIME_TOL:.1%}",
            BALL_TIME_TOL - rel if math.isfinite(rel) else -math.inf)
    return rep


def ball_slope_deviation(config, lo: float = 0.05, hi: float = 0.95) -> float:
    """Largest relative deviation of ``w(rho)/rho`` from ``omega_d/d`` on rings in ``(lo, hi)``."""
    from .rings import ring_ratios

    d = config.params.d
    sel = (config.radii > lo) & (config.radii < hi)
    q = ring_ratios(config)[sel]
    return float(np.max(np.abs(q / (sphere_area(d) / d) - 1)))


def _slope_margin(ball):
    dev = ball_slope_deviation(ball)
    return dev, f"w/r within {BALL_SLOPE_TOL:g} of omega_d/d", BALL_SLOPE_TOL - dev


# --- orchestration ---------------------------------------------------------------------

def default_r_grid() -> list[float]:
    base = np.logspace(-2, 2, 40).tolist()
    extra = [0.5, 1 - 1e-6, 1 + 1e-6, 1.0, 2.0]
    return sorted(set(base + extra))


def default_grid() -> list[tuple[int, float]]:
    """``d`` in 1..6 and ``alpha = 2 - d + k/4`` strictly inside ``(2 - d, 2)``."""
    pts = []
    for d in range(1, 7):
        k = 1
        while 2 - d + 0.25 * k < 2:
            pts.append((d, 2 - d + 0.25 * k))
            k += 1
    return pts


def _make_params(d: int, alpha: float) -> KernelParams:
    if d >= 2 and abs(d + alpha - 2) <= 1e-12:
        return KernelParams.at_limit(d)
    return KernelParams(d, alpha)


def applicable_checks(params: KernelParams) -> list[str]:
    reg = regime(params)
    if reg is Regime.LIMITING:
        return ["uniform_ball"]
    if reg is Regime.SUBCRITICAL:
        return ["subcritical_increase", "lemma2", "gamma_inequality", "limit_sublinear"]
    checks = ["monotonicity", "limit_sublinear"]
    if reg is Regime.CRITICAL_UPPER and params.d >= 3 and -params.gamma >= BOUNDARY_EXCLUSION:
        checks.append("critical_routes")
    return checks


def _run_one(claim: str, d: int, alpha: float, r_grid: list[float], cfg: QuadConfig) -> VerificationReport:
    with quad_settings(tol=cfg.tol, rel_tol=cfg.rel_tol, max_panels=cfg.max_panels):
        try:
            params = _make_params(d, alpha)
            if claim == "monotonicity":
                return check_monotonicity(params, r_grid)
            if claim == "subcritical_increase":
                return check_subcritical_increase(params, [r for r in r_grid if 0 < r < 1])
            if claim == "lemma2":
                return check_lemma2(params)
            if claim == "gamma_inequality":
                return check_gamma_inequality(params)
            if claim == "limit_sublinear":
                return check_limit_sublinear(params)
            if claim == "critical_routes":
                return check_critical_routes(params)
            if claim == "uniform_ball":
                return check_uniform_ball(params)
            raise ContractError(f"unknown claim {claim!r}")
        except AggringError as exc:
            return VerificationReport(claim, [(d, alpha)], list(r_grid), error=f"{type(exc).__name__}: {exc}")


def run_all(grid=None, r_grid=None, workers: int = 1) -> list[VerificationReport]:
    """Every applicable check at every grid point, ordered by (claim, d, alpha)."""
    grid = default_grid() if grid is None else [(int(d), float(a)) for d, a in grid]
    r_grid = default_r_grid() if r_grid is None else [float(r) for r in r_grid]
    jobs = []
    for d, a in grid:
        try:
            claims = applicable_checks(_make_params(d, a))
        except AggringError as exc:
            jobs.append(("admissibility", d, a, str(exc)))
            continue
        jobs.extend((c, d, a, None) for c in claims)
    jobs.sort(key=lambda j: (j[0], j[1], j[2]))
    cfg = current_config()

    def failed(job):
        return VerificationReport(job[0], [(job[1], job[2])], list(r_grid), error=job[3])

    todo = [j for j in jobs if j[3] is None]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {j: pool.submit(_run_one, j[0], j[1], j[2], r_grid, cfg) for j in todo}
            done = {j: f.result() for j, f in futs.items()}
    else:
        done = {j: _run_one(j[0], j[1], j[2], r_grid, cfg) for j in todo}
    return [done[j] if j[3] is None else failed(j) for j in jobs]


def worst_result(reports) -> tuple[VerificationReport, PointResult] | None:
    """Report and point with the smallest margin across ``reports``."""
    best = None
    for rep in reports:
        w = rep.worst
        if w is not None and (best is None or w.margin < best[1].margin):
            best = (rep, w)
    return best
