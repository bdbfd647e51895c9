import numpy as np
import pytest
from helpers import S1, S1_GAIN, S1_RHO
from hypothesis import given, settings, strategies as st

from datadiss.lti import (LtiSystem, dissipation_matrix, gain_by_bisection, hinf_oracle, lag,
                          ls_identify, model_dissipativity_check, observability_matrix,
                          passivity_oracle, random_system, simulate)
from datadiss.supply import gain_supply, passivity_supply
from datadiss.verdict import Status


def test_simulate_one_step():
    sys = LtiSystem(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros((2, 2)))
    t = simulate(sys, [[1.0, -2.0]], np.zeros(2))
    np.testing.assert_allclose(t.x[1], [1.0, -2.0])
    assert t.N == 1


def test_simulate_matches_recursion():
    sys = random_system(3, 2, 1, seed=4)
    rng = np.random.default_rng(0)
    u = rng.uniform(-1, 1, (10, 2))
    t = simulate(sys, u, np.ones(3))
    for k in range(10):
        np.testing.assert_allclose(t.x[k + 1], sys.A @ t.x[k] + sys.B @ u[k])
        np.testing.assert_allclose(t.y[k], sys.C @ t.x[k] + sys.D @ u[k])


def test_observability_examples():
    sys = LtiSystem(np.eye(2), np.ones((2, 1)), np.eye(2), np.zeros((2, 1)))
    np.testing.assert_allclose(observability_matrix(sys, 1), np.eye(2))
    np.testing.assert_allclose(observability_matrix(S1, 2), [[1.0], [0.5]])
    shift = LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    np.testing.assert_allclose(observability_matrix(shift, 3), [[1, 0], [0, 1], [0, 0]])


def test_lag_examples():
    full = LtiSystem(0.3 * np.eye(3), np.ones((3, 1)), np.eye(3), np.zeros((3, 1)))
    assert lag(full) == 1
    assert lag(S1) == 1
    assert lag(random_system(4, 2, 2, seed=1)) == 2
    unobs = LtiSystem(np.diag([0.5, 0.2]), np.ones((2, 1)), [[1.0, 0.0]], [[0.0]])
    with pytest.raises(ValueError):
        lag(unobs)


def test_model_check_examples():
    assert model_dissipativity_check(S1, gain_supply(2.01, 1, 1)).status == Status.DISSIPATIVE
    v = model_dissipativity_check(S1, gain_supply(2.01, 1, 1))
    assert v.certificate.P.item() == pytest.approx(2.0, rel=0.1)
    assert model_dissipativity_check(S1, gain_supply(1.9, 1, 1)).status == Status.NOT_DISSIPATIVE
    assert model_dissipativity_check(S1, passivity_supply(-0.7, 1)).status == Status.DISSIPATIVE
    assert model_dissipativity_check(S1, passivity_supply(-0.6, 1)).status == Status.NOT_DISSIPATIVE


def test_dissipation_matrix_at_boundary():
    # P = 2 makes the S1 dissipation matrix singular at gamma = 2
    M = dissipation_matrix(S1, gain_supply(2.0, 1, 1), np.array([[2.0]]))
    assert np.max(np.linalg.eigvalsh(M)) == pytest.approx(0.0, abs=1e-12)


def test_hinf_examples():
    assert hinf_oracle(LtiSystem(0.0, 1.0, 1.0, 0.0)) == pytest.approx(1.0, rel=1e-9)
    assert hinf_oracle(S1) == pytest.approx(S1_GAIN, rel=1e-9)
    assert hinf_oracle(LtiSystem(0.0, 0.0, 0.0, -0.7)) == pytest.approx(0.7)


def test_passivity_examples():
    assert passivity_oracle(LtiSystem(np.zeros((1, 1)), 0.0, 0.0, np.eye(1))) == pytest.approx(1.0)
    assert passivity_oracle(S1) == pytest.approx(S1_RHO, rel=1e-9)
    assert passivity_oracle(LtiSystem(0.5, 0.0, 1.0, 0.0)) == pytest.approx(0.0)


def test_unstable_system_rejected_by_oracle():
    with pytest.raises(ValueError):
        hinf_oracle(LtiSystem(1.5, 1.0, 1.0, 0.0))


def test_bisection_agrees_with_frequency_oracle():
    for seed in range(3):
        sys = random_system(3, 2, 2, seed=seed)
        assert gain_by_bisection(sys, rel_tol=1e-7) == pytest.approx(hinf_oracle(sys), rel=1e-4)


def test_random_system_deterministic_and_stable():
    a, b = random_system(4, 2, 3, seed=9), random_system(4, 2, 3, seed=9)
    np.testing.assert_array_equal(a.A, b.A)
    assert a.spectral_radius() < 1 and a.is_minimal()
    assert (a.n, a.m, a.p) == (4, 2, 3)


def test_ls_identify_noise_free_and_zero():
    rng = np.random.default_rng(0)
    t = simulate(S1, rng.uniform(-1, 1, (10, 1)), [0.3])
    A, B = ls_identify(t.x[:-1].T, t.x[1:].T, t.u.T)
    assert A.item() == pytest.approx(0.5, abs=1e-8)
    assert B.item() == pytest.approx(1.0, abs=1e-8)
    A, B = ls_identify(rng.standard_normal((2, 8)), np.zeros((2, 8)), rng.standard_normal((1, 8)))
    np.testing.assert_allclose(A, 0, atol=1e-12)
    np.testing.assert_allclose(B, 0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_ls_identify_is_least_squares(seed):
    rng = np.random.default_rng(seed)
    X, U, Xp = rng.standard_normal((2, 12)), rng.standard_normal((1, 12)), rng.standard_normal((2, 12))
    A, B = ls_identify(X, Xp, U)
    res = np.linalg.norm(Xp - A @ X - B @ U)
    for _ in range(5):
        dA, dB = 1e-3 * rng.standard_normal(A.shape), 1e-3 * rng.standard_normal(B.shape)
        assert res <= np.linalg.norm(Xp - (A + dA) @ X - (B + dB) @ U) + 1e-12


def test_dimension_errors():
    with pytest.raises(ValueError):
        LtiSystem(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros((1, 2)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        model_dissipativity_check(S1, gain_supply(2.0, 2, 1))
