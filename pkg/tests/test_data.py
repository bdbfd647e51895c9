import numpy as np
import pytest
from helpers import S1
from hypothesis import given, settings, strategies as st

from datadiss.data import (Trajectory, build_state_data, check_rank_condition, hankel,
                           is_persistently_exciting, membership, membership_form,
                           norm_bound_noise_set, pe_order, sample_ball)
from datadiss.lti import simulate


def test_hankel_layout():
    H = hankel(np.arange(1.0, 6.0), 2)
    np.testing.assert_array_equal(H, [[1, 2, 3, 4], [2, 3, 4, 5]])
    H = hankel(np.arange(1.0, 6.0), 5)
    assert H.shape == (5, 1)


def test_hankel_multichannel_blocks():
    u = np.arange(12.0).reshape(6, 2)
    H = hankel(u, 3)
    assert H.shape == (6, 4)
    np.testing.assert_array_equal(H[2:4, 1], u[2])


def test_pe_examples():
    assert not is_persistently_exciting(np.ones(6), 2)
    assert is_persistently_exciting(np.random.default_rng(0).uniform(-1, 1, 5), 2)
    assert pe_order(np.ones(10)) == 1
    assert pe_order(np.random.default_rng(1).uniform(-1, 1, 30)) == 15


def test_impulse_pe_order():
    # the depth-2 Hankel matrix of an impulse at the start has rank 1
    assert not is_persistently_exciting([1.0, 0.0, 0.0, 0.0], 2)
    assert is_persistently_exciting([0.0, 0.0, 1.0, 0.0], 2)


def test_rank_condition_examples():
    t = Trajectory(u=np.zeros((5, 1)), x=np.zeros((6, 1)))
    assert not check_rank_condition(build_state_data(t))
    rng = np.random.default_rng(0)
    t = simulate(S1, rng.uniform(-1, 1, (6, 1)), [0.1])
    assert check_rank_condition(build_state_data(t))
    t = simulate(S1, rng.uniform(-1, 1, (1, 1)), [0.1])
    assert not check_rank_condition(build_state_data(t))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(u=np.zeros((5, 1)))
    with pytest.raises(ValueError):
        Trajectory(u=np.zeros((5, 1)), x=np.zeros((5, 1)))
    with pytest.raises(ValueError):
        Trajectory(u=np.zeros((5, 1)), y=np.zeros((4, 1)))


def test_state_data_layout():
    rng = np.random.default_rng(0)
    t = simulate(S1, rng.uniform(-1, 1, (4, 1)), [0.2])
    d = build_state_data(t)
    np.testing.assert_array_equal(d.X, t.x[:-1].T)
    np.testing.assert_array_equal(d.Xp, t.x[1:].T)
    assert d.N == 4 and d.Z.shape == (2, 4)


def test_noise_set_examples():
    nb = norm_bound_noise_set(0.01, 50, 3)
    np.testing.assert_allclose(nb.Rn, 0.005 * np.eye(3))
    zero = norm_bound_noise_set(0.0, 4, 1)
    assert membership(zero, np.zeros((1, 4)))
    np.testing.assert_allclose(membership_form(zero, np.ones((1, 4))), [[-4.0]])
    with pytest.raises(ValueError):
        norm_bound_noise_set(-1.0, 4, 1)


def test_scalar_membership():
    wbar, N = 0.1, 10
    nb = norm_bound_noise_set(wbar, N, 1)
    W = np.zeros((1, N))
    W[0, 0] = wbar * np.sqrt(N)
    assert membership_form(nb, W).item() == pytest.approx(0.0, abs=1e-15)
    assert membership(nb, W)
    assert not membership(nb, 1.01 * W)


def test_sample_ball_radius():
    w = sample_ball(np.random.default_rng(0), 500, 3, 0.2)
    assert np.all(np.linalg.norm(w, axis=1) <= 0.2)
    assert np.max(np.linalg.norm(w, axis=1)) > 0.18


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 1.0), st.integers(1, 20), st.integers(1, 3), st.integers(0, 2**31))
def test_ball_samples_are_members(wbar, N, width, seed):
    W = sample_ball(np.random.default_rng(seed), N, width, wbar).T
    assert membership(norm_bound_noise_set(wbar, N, width), W)
