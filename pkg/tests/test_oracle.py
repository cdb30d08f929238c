from __future__ import annotations

import warnings

import numpy as np
import pytest

from conftest import make_mdp
from semtrack.actions import Action
from semtrack.mdp import MultichainWarning, SystemConfig, build_distortion_mdp, policy_gain_exact, rvi_solve
from semtrack.oracle import (ConditioningError, FilterObservation, InstanceTooLarge, JointFilterState,
                             brute_force_gain, exact_filter_step, lp_gain, x_marginal_after)


def _P(p):
    return np.array([[p, 1 - p], [1 - p, p]])


def test_delivered_fresh_sample():
    p = 0.7
    jf = JointFilterState.synced(2, 10, 0)
    jf = exact_filter_step(jf, Action.IDLE, FilterObservation(), _P(p), 0.8)
    jf = exact_filter_step(jf, Action.SAMPLE, FilterObservation(1, True), _P(p), 0.8)
    assert jf.x_hat == 1 and jf.rho == 0
    assert np.allclose(jf.x_marginal(), [1 - p, p], atol=1e-15)
    assert np.allclose(jf.delta_marginal()[:3], [p, 1 - p, 0], atol=1e-15)


def test_uniform_prior_stays_uniform():
    t = np.zeros((2, 6))
    t[0, 0] = t[1, 3] = 0.5
    jf = exact_filter_step(JointFilterState(t, 0, 0), Action.IDLE, FilterObservation(), _P(0.8), 0.5)
    assert np.allclose(jf.x_marginal(), [0.5, 0.5], atol=1e-15)


def test_reset_after_sample_matching_estimate():
    jf = JointFilterState.synced(2, 10, 0)
    jf = exact_filter_step(jf, Action.SAMPLE, FilterObservation(0, None), _P(0.7), 0.5)
    assert np.allclose(jf.delta_marginal()[:3], [0.7, 0.3, 0], atol=1e-15)


def test_zero_probability_observations_raise():
    jf = JointFilterState.synced(2, 10, 0)
    with pytest.raises(ConditioningError):
        exact_filter_step(jf, Action.SAMPLE, FilterObservation(1, True), _P(0.7), 0.5)
    jf = exact_filter_step(jf, Action.IDLE, FilterObservation(), _P(0.7), 1.0)
    with pytest.raises(ConditioningError):
        exact_filter_step(jf, Action.SAMPLE, FilterObservation(1, False), _P(0.7), 1.0)
    with pytest.raises(ValueError):
        exact_filter_step(jf, Action.SAMPLE, FilterObservation(), _P(0.7), 0.5)


def test_filter_normalisation_long_run():
    rng = np.random.default_rng(5)
    p, q = 0.8, 0.6
    P = _P(p)
    jf = JointFilterState.synced(2, 30, 0)
    X = 0
    for _ in range(100_000):
        a = Action(rng.integers(3)) if jf.rho else Action(rng.choice([0, 2]))
        obs = FilterObservation()
        if a == Action.SAMPLE:
            obs = FilterObservation(X, None if X == jf.x_hat else bool(rng.random() < q))
        elif a == Action.RETRANSMIT:
            obs = FilterObservation(None, bool(rng.random() < q))
        jf = exact_filter_step(jf, a, obs, P, q)
        assert abs(jf.table.sum() - 1) <= 1e-12
        assert jf.table.min() >= 0
        X = X if rng.random() < p else 1 - X


def test_x_marginal_after():
    assert np.allclose(x_marginal_after(_P(0.7), 0, 3), [0.532, 0.468], atol=1e-12)


def test_brute_force_cycle(cycle_mdp):
    gain, pol = brute_force_gain(cycle_mdp)
    assert gain == pytest.approx(0.5) and pol.tolist() == [0, 0]


def test_brute_force_dominant_action():
    mdp = make_mdp([0.0, 1.0], {0: [[0, 1], [0, 1]], 1: [[1, 0], [1, 0]]})
    gain, pol = brute_force_gain(mdp)
    assert gain == 0.0 and pol.tolist() == [1, 1]


def test_brute_force_matches_rvi_small_distortion():
    cfg = SystemConfig(p=0.8, q=0.7, mu=0.4, c_s=0, c_t=1, E=1, N=2)
    mdp = build_distortion_mdp(cfg)
    gain, _ = brute_force_gain(mdp)
    assert abs(rvi_solve(mdp, 1e-12).gain - gain) <= 1e-8
    assert abs(lp_gain(mdp) - gain) <= 1e-8


def test_optimality_certificate():
    cfg = SystemConfig(p=0.7, q=0.6, mu=0.5, c_s=1, c_t=1, E=2, N=2)
    mdp = build_distortion_mdp(cfg)
    best = lp_gain(mdp)
    rng = np.random.default_rng(0)
    choices = [np.flatnonzero(mdp.feasible[s]) for s in range(mdp.n)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MultichainWarning)
        for _ in range(300):
            pol = np.array([rng.choice(c) for c in choices])
            assert best <= policy_gain_exact(mdp, pol) + 1e-10


def test_brute_force_guards():
    mdp = build_distortion_mdp(SystemConfig(E=10, N=30))
    with pytest.raises(InstanceTooLarge):
        brute_force_gain(mdp)
    small = build_distortion_mdp(SystemConfig(E=2, N=3))
    with pytest.raises(InstanceTooLarge):
        brute_force_gain(small, max_policies=1000)
