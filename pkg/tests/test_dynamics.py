import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggring.dynamics import (
    IntegrateOptions,
    collapse_fit,
    collapse_law,
    discretize_ball,
    integrate,
    predicted_collapse_time,
    rhs,
)
from aggring.errors import ContractError, DomainError, IntegrationError
from aggring.kernel import KernelParams, sphere_area
from aggring.rings import RingConfig, find_lambda, ratio_residual, solve_geometric, velocity_w

P30 = KernelParams(3, 0.0)
SINGLE = RingConfig(P30, [1.0], [1.0])


def similarity_config(n, d=3, alpha=0.0):
    p = KernelParams(d, alpha)
    cfg, rep = solve_geometric(p, n, find_lambda(p, n))
    assert rep.positivity
    return cfg


# --- right-hand side -------------------------------------------------------------

def test_rhs_single_ring():
    assert rhs(SINGLE)[0] == pytest.approx(-0.5, abs=1e-14)


def test_rhs_origin_acting_on_test_ring():
    p = KernelParams(3, 0.5)
    cfg = RingConfig(p, [2.0], [0.0], origin_mass=1.0)
    assert rhs(cfg)[0] == pytest.approx(-(2.0 ** (-0.5)), rel=1e-15)


def test_rhs_similarity_is_homothetic():
    cfg = similarity_config(3)
    assert np.allclose(rhs(cfg), -cfg.rate * cfg.radii, rtol=1e-9)


def test_rhs_always_inward():
    cfg = RingConfig(KernelParams(4, 0.5), [0.5, 1.0, 3.0], [0.2, 1.0, 0.1], origin_mass=0.3)
    assert np.all(rhs(cfg) < 0)


def test_rhs_empty():
    assert rhs(RingConfig(P30, [], [], origin_mass=1.0)).size == 0


# --- single ring benchmark ----------------------------------------------------------

def test_single_ring_closed_form():
    traj = integrate(SINGLE, 2.0)
    fit = collapse_fit(traj, window=0.99)
    assert fit.T0 == pytest.approx(1.0, abs=1e-12)
    assert abs(fit.blowup_time_observed - 1.0) < 1e-4
    assert fit.max_profile_error < 1e-6
    for t, st_ in zip(traj.times, traj.states):
        if st_.n and t < 0.99:
            assert st_.radii[0] == pytest.approx(math.sqrt(1 - t), abs=1e-6)
    assert [e.kind for e in traj.events] == ["ABSORB"]
    assert traj.states[-1].origin_mass == 1.0


def test_single_ring_error_is_confined_to_the_singularity():
    # close to T0 the radius is the square root of a small quantity, which
    # amplifies the integrator's error; away from it the error is tiny
    traj = integrate(SINGLE, 2.0)
    errs = [collapse_fit(traj, window=w).max_profile_error for w in (0.9, 0.99)]
    errs.append(collapse_fit(traj).max_profile_error)
    assert errs[0] < 1e-7 and errs[1] < 1e-6 and errs[2] < 1e-3
    assert errs[0] <= errs[1] < errs[2]


def test_halving_tolerance_halves_error():
    base = IntegrateOptions()
    half = IntegrateOptions(rtol=base.rtol / 2, atol=base.atol / 2)
    e1 = collapse_fit(integrate(SINGLE, 2.0, base), window=0.99).max_profile_error
    e2 = collapse_fit(integrate(SINGLE, 2.0, half), window=0.99).max_profile_error
    assert e2 <= e1 / 2


def test_tiny_horizon_echoes_initial_state():
    cfg = similarity_config(2)
    traj = integrate(cfg, 1e-12)
    assert traj.times[0] == 0.0 and traj.states[0] is cfg
    assert traj.times[-1] == pytest.approx(1e-12)
    assert np.allclose(traj.states[-1].radii, cfg.radii, rtol=1e-10)
    assert not traj.events
    assert math.isnan(traj.blowup_time)


# --- similarity configurations -------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_collapse_is_homothetic(n):
    cfg = similarity_config(n)
    assert ratio_residual(cfg) < 1e-8
    traj = integrate(cfg, 2 / ((2 - cfg.params.alpha) * cfg.rate))
    r0 = cfg.radii
    t_first = traj.first_event_time
    for t, s in zip(traj.times, traj.states):
        if t >= t_first:
            break
        q = s.radii / r0
        assert q.max() - q.min() < 1e-5
    fit = collapse_fit(traj, window=0.99)
    assert fit.max_profile_error < 1e-4
    assert abs(fit.blowup_time_observed - fit.T0) < 1e-2 * fit.T0
    assert fit.lambda_fit == pytest.approx(cfg.rate, rel=1e-8)


def test_collapse_in_one_dimension():
    cfg = similarity_config(2, d=1, alpha=1.5)
    fit = collapse_fit(integrate(cfg, 100.0), window=0.99)
    assert abs(fit.blowup_time_observed - fit.T0) < 1e-2 * fit.T0
    assert fit.max_profile_error < 1e-4


def test_collapse_law_values():
    assert collapse_law(0.0, 2.0, 0.5) == 1.0
    assert collapse_law(1.0, 2.0, 0.0) == pytest.approx(math.sqrt(0.5))
    assert collapse_law(3.0, 2.0, 0.0) == 0.0


def test_collapse_fit_rejects_non_similarity():
    cfg = RingConfig(P30, [1.0, 2.0], [1.0, 1.0])
    traj = integrate(cfg, 1e-3)
    with pytest.raises(ContractError, match="ratio_residual"):
        collapse_fit(traj)


def test_predicted_collapse_time_single_ring():
    assert predicted_collapse_time(SINGLE) == pytest.approx(1.0, rel=1e-14)


# --- events and invariants ------------------------------------------------------------------

def test_heavy_inner_mass_keeps_outer_ring_moving_inward():
    cfg = RingConfig(P30, [0.5, 2.0], [100.0, 0.01])
    traj = integrate(cfg, 1e-2)
    outer = [s.radii[-1] for s in traj.states if s.n == 2]
    assert len(outer) > 2
    assert np.all(np.diff(outer) < 0)


def test_merge_event_and_mass_bookkeeping():
    cfg = RingConfig(P30, [1.0, 1.01], [1e-3, 10.0])
    traj = integrate(cfg, 1.0)
    kinds = [e.kind for e in traj.events]
    assert kinds[0] == "MERGE" and "ABSORB" in kinds
    merge = traj.events[0]
    assert merge.indices == (0, 1) and "modeling choice" in merge.detail
    after = traj.states[traj.times.index(merge.time)]
    assert after.n == 1 and after.masses[0] == 1e-3 + 10.0
    # the heavy ring drags both inward before they touch
    before = traj.states[traj.times.index(merge.time) - 1]
    assert before.n == 2 and 0 < after.radii[0] < before.radii[1]
    assert before.radii[1] - before.radii[0] < 1e-2
    total = cfg.total_mass
    for s in traj.states:
        assert s.total_mass == pytest.approx(total, rel=1e-15)


def test_absorption_feeds_origin_atom():
    p = KernelParams(3, 0.5)
    cfg = RingConfig(p, [0.1, 3.0], [1.0, 0.5], origin_mass=0.2)
    traj = integrate(cfg, 50.0)
    absorbs = [e for e in traj.events if e.kind == "ABSORB"]
    assert len(absorbs) == 2
    assert absorbs[0].time < absorbs[1].time
    mid = next(s for s in traj.states if s.n == 1)
    assert mid.origin_mass == pytest.approx(1.2)
    assert traj.states[-1].origin_mass == pytest.approx(1.7)
    assert traj.blowup_time == absorbs[-1].time


@settings(max_examples=10, deadline=None)
@given(
    masses=st.lists(st.floats(0.05, 2.0), min_size=2, max_size=4),
    m0=st.floats(0.0, 0.5),
    alpha=st.floats(-0.5, 1.5),
)
def test_trajectory_invariants(masses, m0, alpha):
    p = KernelParams(3, alpha)
    radii = np.cumsum(np.linspace(0.5, 1.0, len(masses)))
    cfg = RingConfig(p, radii, masses, origin_mass=m0)
    traj = integrate(cfg, 0.5)
    assert np.all(np.diff(traj.times) > 0)
    total = cfg.total_mass
    for s in traj.states:
        assert s.total_mass == pytest.approx(total, rel=1e-14)
        assert s.n < 2 or np.all(np.diff(s.radii) > 0)
    # radii only shrink between events
    for (t0, a), (t1, b) in zip(zip(traj.times, traj.states), zip(traj.times[1:], traj.states[1:])):
        if a.n == b.n and not any(t0 < e.time <= t1 for e in traj.events):
            assert np.all(b.radii <= a.radii)


def test_save_every_thins_output_but_keeps_endpoints():
    cfg = similarity_config(2)
    horizon = 2 / ((2 - cfg.params.alpha) * cfg.rate)
    full = integrate(cfg, horizon)
    thin = integrate(cfg, horizon, IntegrateOptions(save_every=10))
    assert len(thin.times) < len(full.times)
    assert thin.times[-1] == full.times[-1]
    assert [e.time for e in thin.events] == [e.time for e in full.events]


def test_integrate_guards():
    with pytest.raises(DomainError):
        integrate(SINGLE, 0.0)
    with pytest.raises(DomainError):
        integrate(SINGLE, math.inf)
    with pytest.raises(ContractError):
        integrate(RingConfig(P30, [1.0], [-1.0]), 1.0)


def test_step_limit_raises_with_partial_trajectory():
    with pytest.raises(IntegrationError) as info:
        integrate(SINGLE, 2.0, IntegrateOptions(max_steps=5))
    assert len(info.value.args) >= 1


def test_origin_only_config_is_static():
    traj = integrate(RingConfig(P30, [], [], origin_mass=1.0), 1.0)
    assert traj.times == [0.0]


# --- uniform ball -------------------------------------------------------------------------

def test_discretize_ball_guards():
    with pytest.raises(DomainError):
        discretize_ball(1, 10)
    with pytest.raises(DomainError):
        discretize_ball(2, 0)
    with pytest.raises(DomainError):
        discretize_ball(2, 10, density=0.0)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_discretize_ball_masses(d):
    cfg = discretize_ball(d, 50)
    assert cfg.params.limiting and cfg.params.alpha == 2 - d
    assert cfg.total_mass == pytest.approx(sphere_area(d) / d, rel=1e-14)
    assert np.all(np.diff(cfg.radii) > 0) and 0 < cfg.radii[0] and cfg.radii[-1] < 1
    unit = discretize_ball(d, 50, density=d / sphere_area(d))
    assert unit.total_mass == pytest.approx(1.0, rel=1e-14)


def test_single_shell_ball():
    cfg = discretize_ball(2, 1, density=2 / sphere_area(2))
    assert cfg.n == 1 and cfg.masses[0] == pytest.approx(1.0)
    assert cfg.radii[0] == pytest.approx(2 / 3)


@pytest.mark.parametrize("d", [2, 3])
def test_ball_speed_slope(d):
    cfg = discretize_ball(d, 1000)
    inner = cfg.radii[(cfg.radii > 0.05) & (cfg.radii < 0.95)]
    slope = velocity_w(cfg, inner) / inner
    target = sphere_area(d) / d
    assert np.max(np.abs(slope / target - 1)) < 1e-3


def test_small_ball_collapse_time():
    cfg = discretize_ball(2, 100)
    traj = integrate(cfg, 1.0)
    assert abs(traj.blowup_time * sphere_area(2) - 1) < 0.02
