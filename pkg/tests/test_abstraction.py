import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tclinv.abstraction import (OFF, ON, AbstractionSpec, DomainEscapeWarning, EmptySafeSetError,
                                GroupDynamics, abstract_point, build_abstraction, grid_points,
                                lockout_steps,
                                perturbation_budget, random_mode_sequence, rollout,
                                safe_inclusion_exceptions, step_dynamics, validate_bisimulation)
from tclinv.presets import EPS, ETA, desk_groups


def group(a=0.9, T_a=32.0, R=2.0, p_tr=12.0, deadband=(21.25, 23.75), domain=(5.0, 35.0), **kw):
    return GroupDynamics(a=a, T_a=T_a, R=R, p_tr=p_tr, deadband=deadband, domain=domain, **kw)


# -- step_dynamics -------------------------------------------------------

@pytest.mark.parametrize("mode", [ON, OFF])
def test_frozen_when_a_is_one(mode):
    assert step_dynamics(group(a=1.0), 22.7, mode) == pytest.approx(22.7)


def test_ambient_is_off_fixed_point():
    assert step_dynamics(group(), 32.0, OFF) == pytest.approx(32.0)


def test_on_step_direct_evaluation():
    # 0.9 * 22 + 0.1 * (32 - 24)
    assert step_dynamics(group(), 22.0, ON) == pytest.approx(20.6)


def test_domain_escape_is_a_warning():
    g = group(domain=(20.0, 25.0))
    with pytest.warns(DomainEscapeWarning):
        out = step_dynamics(g, 20.5, ON)
    assert out < 20.0


def test_lockout_steps_rounds_up():
    assert lockout_steps(150, 40) == 4
    assert lockout_steps(30, 40) == 1
    assert lockout_steps(80, 40) == 2
    assert lockout_steps(0, 40) == 0


def test_from_physical_decay():
    g = GroupDynamics.from_physical(C=1.8, R=1.5, p_tr=16, T_a=32, dt=40, t_lock=(150, 30),
                                    deadband=(21.25, 23.75), domain=(15, 33), zeta=2.5)
    assert g.a == pytest.approx(math.exp(-(40 / 3600) / 2.7))
    assert g.tau_bar == (4, 1)
    assert g.power == pytest.approx(6.4)


# -- validate_bisimulation -----------------------------------------------

def test_closeness_holds_for_reported_parameters():
    rep = validate_bisimulation([0.9, 0.9], eta=0.0066, eps=0.8)
    assert rep.ok and rep.offending_modes == []


def test_closeness_violation_reported():
    rep = validate_bisimulation([0.5, 0.5], eta=0.2, eps=0.1)
    assert not rep.ok
    assert rep.offending_modes == [0, 1]
    assert rep.min_eps == pytest.approx(0.2)


def test_closeness_boundary_accepted():
    eta = 0.37
    assert validate_bisimulation([0.0], eta=eta, eps=eta / 2).ok


# -- abstract_point ------------------------------------------------------

@pytest.mark.parametrize("eta,theta,expected", [(1.0, 0.3, 0.5), (1.0, -0.3, -0.5),
                                                 (0.5, 22.26, 22.25)])
def test_abstract_point_examples(eta, theta, expected):
    assert abstract_point(eta, theta) == pytest.approx(expected)


@given(st.floats(0.01, 2.0), st.floats(-100, 100))
def test_abstract_point_within_half_cell(eta, theta):
    assert abs(abstract_point(eta, theta) - theta) <= eta / 2 + 1e-9


# -- build_abstraction ---------------------------------------------------

def test_two_cell_domain():
    assert list(grid_points((0.0, 1.0), 0.5)) == [0.25, 0.75]


def test_safe_indices_in_eroded_band():
    # eroded band [22.05, 22.95]: delta = 0.8 with eps = 0.7, eta = 0.1
    g = group(a=0.9, domain=(20.0, 26.0))
    spec = build_abstraction(g, eta=0.1, eps=0.7, delta=0.8)
    centres = spec.grid[spec.safe_indices]
    expected = [22.05 + 0.1 * i for i in range(10)]  # 22.05, 22.15, ..., 22.95
    assert centres == pytest.approx(expected)
    assert list(spec.safe_indices) == list(range(20, 30))


def test_delta_must_be_strict():
    g = group(domain=(20.0, 26.0))
    with pytest.raises(ValueError, match="delta"):
        build_abstraction(g, eta=0.1, eps=0.7, delta=0.75)


def test_closeness_precondition():
    with pytest.raises(ValueError, match="closeness"):
        build_abstraction(group(a=0.99), eta=0.1, eps=0.7)


def test_empty_safe_set():
    g = group(deadband=(22.0, 23.0), domain=(20.0, 26.0))
    with pytest.raises(EmptySafeSetError):
        build_abstraction(g, eta=0.1, eps=0.5)


def test_successor_table_matches_dynamics():
    g = group(domain=(5.0, 35.0))
    spec = build_abstraction(g, eta=0.1, eps=0.7)
    for m in (ON, OFF):
        for k in range(0, spec.K, 7):
            nxt = step_dynamics(g, spec.grid[k], m, warn=False)
            if not spec.clamped[m, k]:
                assert spec.grid[spec.succ[m, k]] == pytest.approx(abstract_point(0.1, nxt))


def test_successor_clamping_flagged():
    # both fixed points (8 and 32 degC) lie outside the domain
    g = group(domain=(20.0, 26.0))
    spec = build_abstraction(g, eta=0.1, eps=0.7)
    assert spec.clamped[ON, 0] and spec.succ[ON, 0] == 0
    assert spec.clamped[OFF, -1] and spec.succ[OFF, -1] == spec.K - 1
    assert not spec.clamped[ON, -1] and not spec.clamped[OFF, 0]


def test_json_round_trip():
    g = desk_groups()[0]
    spec = build_abstraction(g, eta=ETA[0], eps=EPS)
    back = AbstractionSpec.loads(spec.dumps())
    assert np.array_equal(back.succ, spec.succ)
    assert np.array_equal(back.safe, spec.safe)
    assert np.array_equal(back.clamped, spec.clamped)
    assert back.grid == pytest.approx(spec.grid)
    assert GroupDynamics.from_dict(g.to_dict()) == g


# -- properties ----------------------------------------------------------

@pytest.fixture(scope="module")
def desk():
    return [(g, build_abstraction(g, eta, eps)) for g, eta, eps in
            zip(desk_groups(), ETA, (EPS, EPS))]


def test_desk_successors_not_clamped(desk):
    for g, spec in desk:
        assert not spec.clamped.any()


def test_closeness_rollouts(desk):
    rng = np.random.default_rng(0)
    for g, spec in desk:
        lo, hi = g.domain
        for _ in range(100):
            theta0 = rng.uniform(lo + 1.0, hi - 1.0)
            modes = random_mode_sequence(g, 50, rng, mode0=int(rng.integers(2)))
            theta, xi = rollout(g, spec, theta0, modes)
            assert np.max(np.abs(theta - xi)) <= spec.eps


def test_eroded_safe_set_inclusion(desk):
    for g, spec in desk:
        assert safe_inclusion_exceptions(g, spec) == []


def test_safe_trajectories_stay_in_deadband(desk):
    # abstract runs that stay on safe indices keep the real state in the dead-band
    rng = np.random.default_rng(1)
    for g, spec in desk:
        safe = spec.safe_indices
        for _ in range(200):
            k0 = int(rng.choice(safe))
            theta0 = spec.grid[k0] + rng.uniform(-spec.eta / 2, spec.eta / 2)
            modes = random_mode_sequence(g, 40, rng, mode0=int(rng.integers(2)))
            theta, xi = rollout(g, spec, theta0, modes)
            k = spec.index_of(xi)
            first_exit = np.flatnonzero(~spec.safe[k])
            stop = first_exit[0] if first_exit.size else len(k)
            assert np.all(theta[:stop] >= g.deadband[0]) and np.all(theta[:stop] <= g.deadband[1])


def test_heterogeneous_perturbations_keep_closeness(desk):
    rng = np.random.default_rng(2)
    for g, spec in desk:
        # use a coarser grid so the mismatch budget is not zero
        eta = spec.eta * 0.6
        coarse = build_abstraction(g, eta, spec.eps)
        budget = perturbation_budget(g, eta, spec.eps)
        assert np.all(budget > 0)
        for _ in range(100):
            modes = random_mode_sequence(g, 50, rng)
            w = rng.uniform(-1, 1, size=50) * budget[modes]
            theta, xi = rollout(g, coarse, rng.uniform(21.0, 27.0), modes, perturbation=w)
            assert np.max(np.abs(theta - xi)) <= spec.eps


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.5, 0.98), eps=st.floats(0.2, 1.0), frac=st.floats(0.1, 1.0),
       seed=st.integers(0, 10_000))
def test_closeness_for_any_admissible_grid(a, eps, frac, seed):
    eta = 2 * (1 - a) * eps * frac
    g = group(a=a, T_a=30.0, R=1.0, p_tr=12.0, deadband=(20.0, 26.0), domain=(17.0, 31.0),
              tau_bar=(2, 1))
    spec = build_abstraction(g, eta, eps, delta=eps + eta)
    rng = np.random.default_rng(seed)
    modes = random_mode_sequence(g, 50, rng)
    theta, xi = rollout(g, spec, rng.uniform(19.0, 29.0), modes)
    assert np.max(np.abs(theta - xi)) <= eps + 1e-12
