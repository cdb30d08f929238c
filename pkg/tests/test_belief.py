from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semtrack import belief as B
from semtrack.actions import Action, ContractViolation
from semtrack.oracle import FilterObservation, JointFilterState, exact_filter_step
from semtrack.source import SourceModel


def _vec(*head, N=5):
    v = np.zeros(N + 1)
    v[:len(head)] = head
    return v


def _binary(p):
    return np.array([[p, 1 - p], [1 - p, p]])


beliefs = st.lists(st.floats(0, 1), min_size=4, max_size=12).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.array(v) / sum(v))


def test_belief_from_aoi_examples():
    assert B.belief_from_aoi(1, 1, 0.8) == pytest.approx(0.8, abs=1e-15)
    assert B.belief_from_aoi(0, 3, 0.7) == pytest.approx(0.468, abs=1e-12)
    assert abs(B.belief_from_aoi(1, 200, 0.8) - 0.5) <= 1e-12
    with pytest.raises(ValueError):
        B.belief_from_aoi(1, 0, 0.8)


def test_belief_from_aoi_matches_matrix_power():
    for p in (0.6, 0.7, 0.8, 0.9):
        m = SourceModel.binary(p)
        for theta in range(1, 31):
            for xt in (0, 1):
                assert abs(B.belief_from_aoi(xt, theta, p) - m.n_step_matrix(theta)[xt, 1]) <= 1e-12
                assert np.allclose(B.belief_vector_from_aoi(m, xt, theta), m.n_step_matrix(theta)[xt])


def test_belief_from_aoi_matches_filter_without_new_samples():
    for p in (0.6, 0.7, 0.8, 0.9):
        P = _binary(p)
        for xt in (0, 1):
            jf = JointFilterState.synced(2, 30, xt)
            jf = exact_filter_step(jf, Action.SAMPLE, FilterObservation(xt, None), P, 0.8)
            for theta in range(1, 31):
                assert abs(jf.x_marginal()[1] - B.belief_from_aoi(xt, theta, p)) <= 1e-12
                jf = exact_filter_step(jf, Action.IDLE, FilterObservation(), P, 0.8)


def test_distortion_belief_update_examples():
    assert B.belief_update_distortion(0.5, Action.IDLE, 0, 0.8) == pytest.approx(0.5)
    assert B.belief_update_distortion(0.123, Action.SAMPLE, 1, 0.8) == pytest.approx(0.8)
    assert B.belief_update_distortion(0.123, Action.SAMPLE, 0, 0.8) == pytest.approx(0.2)
    # 0.9 * 0.8 + 0.1 * 0.2
    assert B.belief_update_distortion(0.9, Action.RETRANSMIT, 1, 0.8) == pytest.approx(0.74, abs=1e-12)


@given(p=st.floats(0.51, 0.99), b=st.floats(0, 1), steps=st.integers(1, 20))
def test_idle_contraction(p, b, steps):
    cur = b
    for _ in range(steps):
        nxt = B.belief_update_distortion(cur, Action.IDLE, 0, p)
        assert abs(abs(nxt - 0.5) - abs(2 * p - 1) * abs(cur - 0.5)) <= 1e-12
        cur = nxt


def test_aoii_update_examples():
    p = 0.7
    out = B.aoii_belief_update(_vec(1.0), Action.IDLE, 0, p)
    assert np.allclose(out, _vec(0.7, 0.3), atol=1e-15)
    out = B.aoii_belief_update(_vec(0.2, 0.1, 0.3, 0.4), Action.SAMPLE, 0, p)
    assert np.allclose(out, _vec(0.7, 0.3), atol=1e-15)


def test_failed_fresh_sample_update_matches_filter():
    # Oracle value: knowing the fresh sample differed rules out AoII 0, so the
    # next AoII is 0 (source returns) or the shifted conditional tail.
    p = 0.7
    P = _binary(p)
    jf = JointFilterState.synced(2, 5, 0)
    jf = exact_filter_step(jf, Action.SAMPLE, FilterObservation(0, None), P, 0.6)
    jf = exact_filter_step(jf, Action.IDLE, FilterObservation(), P, 0.6)
    assert np.allclose(jf.delta_marginal(), _vec(0.58, 0.21, 0.21), atol=1e-12)
    jf = exact_filter_step(jf, Action.SAMPLE, FilterObservation(1, False), P, 0.6)
    out = B.aoii_belief_update(_vec(0.58, 0.21, 0.21), Action.SAMPLE, 1, p)
    assert np.allclose(jf.delta_marginal(), _vec(0.3, 0.0, 0.35, 0.35), atol=1e-12)
    assert np.allclose(out, jf.delta_marginal(), atol=1e-12)


def test_aoii_update_contract_violations():
    with pytest.raises(ContractViolation):
        B.aoii_belief_update(_vec(0.5, 0.5), Action.RETRANSMIT, 1, 0.7, rho=0)
    with pytest.raises(ContractViolation):
        B.aoii_belief_update(_vec(0.5, 0.5), Action.IDLE, 1, 0.7, rho=0)
    with pytest.raises(ContractViolation):
        B.aoii_belief_update(_vec(1.0), Action.SAMPLE, 1, 0.7)


def test_top_bin_folding_keeps_mass():
    out = B.aoii_belief_update(_vec(0, 0, 0, 0, 0, 1.0), Action.IDLE, 1, 0.7)
    assert out[-1] == pytest.approx(0.7)
    assert out.sum() == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=200)
@given(bel=beliefs, p=st.floats(0.51, 0.99), ops=st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_aoii_update_stays_normalised(bel, p, ops):
    rho = 1
    for op in ops:
        if op == 0:
            bel = B.aoii_belief_update(bel, Action.IDLE, rho, p, rho=rho)
        elif op in (1, 2) and rho:
            rho_next = int(op == 2)
            bel = B.aoii_belief_update(bel, Action.RETRANSMIT, rho_next, p, rho=rho)
            rho = rho_next
        elif op == 3 or bel[0] >= 1 - 1e-12:
            bel = B.aoii_belief_update(bel, Action.SAMPLE, 0, p)
            rho = 0
        else:
            bel = B.aoii_belief_update(bel, Action.SAMPLE, 1, p)
            rho = 1
        assert np.all(bel >= 0)
        assert abs(bel.sum() - 1) <= 1e-9


def test_perfect_channel_examples():
    assert np.allclose(B.aoii_belief_perfect(1, 0.7, 3), [0.7, 0.3, 0, 0], atol=1e-15)
    assert np.allclose(B.aoii_belief_perfect(2, 0.7, 3), [0.58, 0.21, 0.21, 0], atol=1e-12)
    with pytest.raises(ValueError):
        B.aoii_belief_perfect(4, 0.7, 3)
    with pytest.raises(ValueError):
        B.aoii_belief_perfect(0, 0.7, 3)


@given(theta=st.integers(1, 30), p=st.floats(0.51, 1.0))
def test_perfect_channel_normalised(theta, p):
    assert abs(B.aoii_belief_perfect(theta, p, 30).sum() - 1) <= 1e-12


def test_perfect_channel_equals_idle_iteration():
    for p in (0.6, 0.7, 0.8, 0.9):
        bel = B.reset_belief(p, 30)
        for theta in range(1, 31):
            if theta > 1:
                bel = B.aoii_belief_update(bel, Action.IDLE, 0, p)
            assert np.max(np.abs(B.aoii_belief_perfect(theta, p, 30) - bel)) <= 1e-12


def test_g_convention():
    assert B.g(0, 0.7) == 1.0
    assert B.g(1, 0.7) == pytest.approx(0.7)
    assert B.g(2, 0.7) == pytest.approx(0.58)


def test_expected_distortion_examples():
    rte = B.DistortionFn.real_time_error()
    assert B.expected_distortion(0.8, 1, rte) == pytest.approx(0.2)
    assert B.expected_distortion(0.3, 1, B.DistortionFn.weighted(2, 5)) == pytest.approx(1.4)
    assert B.expected_distortion(0.0, 0, B.DistortionFn.weighted(2, 5)) == 0.0
    assert B.expected_distortion(np.array([0.2, 0.5, 0.3]), 0, B.DistortionFn.mse(3)) == pytest.approx(1.7)


def test_expected_aoii_examples():
    assert B.expected_aoii(_vec(1.0)) == 0
    assert B.expected_aoii([0.58, 0.21, 0.21]) == pytest.approx(0.63, abs=1e-12)
    assert B.expected_aoii(_vec(0, 0, 0, 0, 0, 1.0)) == 5


@given(a=beliefs, lam=st.floats(0, 1))
def test_costs_are_affine(a, lam):
    b = np.roll(a, 1)
    mix = lam * a + (1 - lam) * b
    assert abs(B.expected_aoii(mix) - lam * B.expected_aoii(a) - (1 - lam) * B.expected_aoii(b)) <= 1e-12
    f = B.DistortionFn.weighted(2.0, 5.0)
    x, y = a[0], b[0]
    lhs = B.expected_distortion(lam * x + (1 - lam) * y, 1, f)
    assert abs(lhs - lam * B.expected_distortion(x, 1, f) - (1 - lam) * B.expected_distortion(y, 1, f)) <= 1e-12


def test_distortion_fn_validation():
    with pytest.raises(ValueError):
        B.DistortionFn(np.ones((2, 3)))
    with pytest.raises(ValueError):
        B.DistortionFn(np.array([[0, np.inf], [1, 0]]))
    assert B.DistortionFn.weighted(2, 5)(0, 1) == 2


def test_renormalisation_is_counted():
    before = B.diagnostics.renormalizations
    B.aoii_belief_update(_vec(0.5, 0.5) * 1.01, Action.IDLE, 0, 0.7)
    assert B.diagnostics.renormalizations == before + 1
    B.aoii_belief_update(_vec(0.5, 0.5), Action.IDLE, 0, 0.7)
    assert B.diagnostics.renormalizations == before + 1
