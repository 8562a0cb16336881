"""Radial delta-ring dynamics ``d rho_k / dt = -w(rho_k)``.

Rings move inward with the speed generated by all rings and the origin
atom.  A ring that reaches the origin is absorbed into the atom; two rings
that meet are merged at their mass-weighted mean radius (the continuum
equation does not prescribe post-collision dynamics, so every merge is
logged as an event).

Time stepping uses the Dormand-Prince 5(4) embedded pair with the step
clamped to a fraction of the predicted time to the nearest absorption.
Near collapse ``rho**(2 - alpha)`` decreases linearly, so the predicted
remaining time of ring ``k`` is ``rho_k / ((2 - alpha) w(rho_k))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, IntegrationError
from .kernel import KernelParams, phi_value, sphere_area
from .rings import RingConfig, origin_self_test, ratio_residual, ring_ratios, velocity_w

# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass(frozen=True)
class IntegrateOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    absorb_eps: float = 1e-8
    merge_eps: float = 1e-9
    time_eps: float = 1e-10
    clamp: float = 0.25
    max_steps: int = 1_000_000
    save_every: int = 1


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    indices: tuple[int, ...]
    detail: str = ""


@dataclass
class Trajectory:
    params: KernelParams
    times: list[float] = field(default_factory=list)
    states: list[RingConfig] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    steps: int = 0

    def _append(self, t: float, state: RingConfig) -> None:
        if self.times and not t > self.times[-1]:
            raise AssertionError("trajectory times must increase strictly")
        self.times.append(t)
        self.states.append(state)

    @property
    def first_event_time(self) -> float:
        return self.events[0].time if self.events else math.inf

    @property
    def blowup_time(self) -> float:
        """Time at which the last ring was absorbed, or ``nan``."""
        if self.states and self.states[-1].n == 0:
            for ev in reversed(self.events):
                if ev.kind == "ABSORB":
                    return ev.time
        return math.nan


@dataclass(frozen=True)
class CollapseFit:
    lambda_fit: float
    T0: float
    max_profile_error: float
    blowup_time_observed: float


# --- right-hand side ----------------------------------------------------------------

def _speeds(params: KernelParams, radii: np.ndarray, masses: np.ndarray, m0: float) -> np.ndarray:
    a1 = params.alpha - 1
    if params.limiting:
        # callers only pass validated (sorted, positive) states
        return np.asarray(velocity_w(RingConfig(params, radii, masses, m0), radii), dtype=float).reshape(-1)
    out = m0 * radii**a1
    for j in range(radii.size):
        rho, m = radii[j], masses[j]
        coef = rho**a1 * m
        out = out + coef * np.array([phi_value(params, x / rho) for x in radii.tolist()])
    return out


def rhs(config: RingConfig) -> np.ndarray:
    if config.n == 0:
        return np.empty(0)
    return -_speeds(config.params, config.radii, config.masses, config.origin_mass)


# --- integrator -----------------------------------------------------------------------

def _valid(y: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(y)) and np.all(y > 0) and (y.size < 2 or np.all(np.diff(y) > 0)))


def _time_to_origin(params, radii, speeds):
    with np.errstate(divide="ignore"):
        return np.where(speeds > 0, radii / ((2 - params.alpha) * speeds), np.inf)


def _step_cap(params, y, f, clamp):
    speeds = -f
    cap = clamp * float(np.min(_time_to_origin(params, y, speeds)))
    if y.size > 1:
        gaps = np.diff(y)
        closing = -(np.diff(f))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_meet = np.where(closing > 0, gaps / closing, np.inf)
        cap = min(cap, 0.5 * float(np.min(t_meet)))
    return cap


def integrate(config: RingConfig, t_end: float, opts: IntegrateOptions | None = None) -> Trajectory:
    """Evolve ``config`` up to ``t_end`` or until every ring is absorbed."""
    opts = opts or IntegrateOptions()
    if not (t_end > 0 and math.isfinite(t_end)):
        raise DomainError(f"t_end must be positive and finite, got {t_end}")
    if not config.is_admissible:
        raise ContractError("integration needs positive ring masses")
    params = config.params
    if config.origin_mass > 0 and not params.limiting and params.d > 1:
        origin_self_test(params)

    traj = Trajectory(params)
    traj._append(0.0, config)
    if config.n == 0:
        return traj

    scale = float(config.radii[-1])
    atol = opts.atol * scale
    r_absorb = opts.absorb_eps * scale
    y = config.radii.astype(float)
    masses = config.masses.astype(float)
    m0 = config.origin_mass
    t = 0.0
    f = -_speeds(params, y, masses, m0)
    h = min(t_end, 0.01 * _step_cap(params, y, f, 1.0))
    since_save = 0

    def snapshot():
        return RingConfig(params, y.copy(), masses.copy(), m0, config.rate)

    while t < t_end and y.size:
        if traj.steps >= opts.max_steps:
            raise IntegrationError(f"step limit {opts.max_steps} reached at t = {t}", traj)
        h = min(h, _step_cap(params, y, f, opts.clamp), t_end - t)
        if not h > 0 or t + h == t:
            raise IntegrationError(f"step size underflow at t = {t}", traj)

        k = np.empty((7, y.size))
        k[0] = f
        ok = True
        for s in range(1, 7):
            ys = y + h * (np.dot(_A[s], k[:s]))
            if not _valid(ys):
                ok = False
                break
            k[s] = -_speeds(params, ys, masses, m0)
        if not ok:
            h *= 0.25
            continue
        y_new = y + h * (_B[:6] @ k[:6])
        err_vec = h * (_E @ k)
        sc = atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / sc))
        if not (err <= 1.0 and _valid(y_new)):
            h *= max(0.1, 0.9 * err ** (-0.2)) if math.isfinite(err) and err > 1 else 0.25
            continue

        t_new = t + h if t_end - (t + h) > 1e-15 * t_end else t_end
        y, f, t = y_new, k[6], t_new
        traj.steps += 1
        h *= min(5.0, 0.9 * err ** (-0.2)) if err > 0 else 5.0

        # events: absorption, then merges
        tau = _time_to_origin(params, y, -f)
        hit = (y <= r_absorb) | (tau <= opts.time_eps * (t + tau))
        event_happened = False
        if np.any(hit):
            idx = np.flatnonzero(hit)
            t_event = t + float(np.max(np.where(np.isfinite(tau[idx]), tau[idx], 0.0)))
            if not t_event > t:
                t_event = math.nextafter(t, math.inf)
            t = t_event
            for i in idx.tolist():
                traj.events.append(Event(t, "ABSORB", (i,), f"mass {float(masses[i])!r} to origin"))
                m0 = m0 + masses[i]
            keep = ~hit
            y, masses = y[keep], masses[keep]
            event_happened = True
        while y.size > 1:
            gaps = np.diff(y)
            close = np.flatnonzero(gaps < opts.merge_eps * y[1:])
            if close.size == 0:
                break
            i = int(close[0])
            mi, mj = masses[i], masses[i + 1]
            r_new = (mi * y[i] + mj * y[i + 1]) / (mi + mj)
            traj.events.append(
                Event(t, "MERGE", (i, i + 1), "merged at mass-weighted mean radius (modeling choice)")
            )
            y = np.concatenate([y[:i], [r_new], y[i + 2:]])
            masses = np.concatenate([masses[:i], [mi + mj], masses[i + 2:]])
            event_happened = True

        since_save += 1
        if event_happened or since_save >= opts.save_every or t >= t_end or not y.size:
            if traj.times[-1] >= t:
                t = math.nextafter(traj.times[-1], math.inf)
            traj._append(t, snapshot())
            since_save = 0
        if event_happened and y.size:
            f = -_speeds(params, y, masses, m0)
    return traj


# --- analysis --------------------------------------------------------------------------

def collapse_law(t, T0: float, alpha: float):
    base = np.clip(1 - np.asarray(t, dtype=float) / T0, 0.0, None)
    return base ** (1 / (2 - alpha))


def collapse_fit(
    traj: Trajectory, window: float | None = None, residual_tol: float = 1e-6
) -> CollapseFit:
    """Compare a trajectory from a similarity configuration with the exact collapse law.

    ``max_profile_error`` is taken over stored times before the first event,
    further restricted to ``t <= window * T0`` when ``window`` is given.
    Right at the singularity the error is about the square root of the
    integrator's global error in ``rho**(2 - alpha)``, so a window such as
    0.99 isolates the integrator's accuracy from that endpoint effect.
    """
    init = traj.states[0]
    if init.n == 0:
        raise ContractError("collapse_fit needs at least one ring in the initial state")
    res = ratio_residual(init)
    if not res < residual_tol:
        raise ContractError(
            f"initial state is not a similarity configuration (ratio_residual = {res:.3g}); "
            "check rings.ratio_residual before fitting"
        )
    alpha = traj.params.alpha
    lam = float(ring_ratios(init)[0])
    T0 = 1 / ((2 - alpha) * lam)
    limit = traj.first_event_time
    if window is not None:
        if not window > 0:
            raise DomainError("window must be positive")
        limit = min(limit, math.nextafter(window * T0, math.inf))
    r0 = init.radii
    worst = 0.0
    for t, st in zip(traj.times, traj.states):
        if t >= limit or st.n != init.n:
            break
        worst = max(worst, float(np.max(np.abs(st.radii / r0 - collapse_law(t, T0, alpha)))))
    return CollapseFit(lam, T0, worst, traj.blowup_time)


def predicted_collapse_time(config: RingConfig) -> float:
    """Largest per-ring power-law estimate of the time to reach the origin."""
    if config.n == 0:
        return 0.0
    speeds = velocity_w(config, config.radii)
    return float(np.max(_time_to_origin(config.params, config.radii, np.atleast_1d(speeds))))


# --- uniform ball on the limiting boundary -------------------------------------------------

def discretize_ball(d: int, M: int, density: float = 1.0) -> RingConfig:
    """Uniform ball of radius 1 cut into ``M`` shells, each collapsed to a ring.

    Rings sit at the shell centroid radius and carry the exact shell mass
    ``density * omega_d / d * ((i/M)**d - ((i-1)/M)**d)``.  The kernel is
    fixed to the limiting exponent ``alpha = 2 - d``.
    """
    if d < 2:
        raise DomainError("the uniform-ball example needs d >= 2")
    if M < 1:
        raise DomainError("M must be >= 1")
    if not density > 0:
        raise DomainError("density must be positive")
    params = KernelParams.at_limit(d)
    i = np.arange(1, M + 1, dtype=float)
    lo, hi = (i - 1) / M, i / M
    frac = hi**d - lo**d
    radii = d / (d + 1) * (hi ** (d + 1) - lo ** (d + 1)) / frac
    masses = density * sphere_area(d) / d * frac
    return RingConfig(params, radii, masses, 0.0, None)
