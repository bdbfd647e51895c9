import numpy as np
import pytest
from helpers import S1, S1_GAIN, four_state_system, io_experiment, io_problem

from datadiss.data import Trajectory, membership_form
from datadiss.lti import hinf_oracle, lag, random_system, simulate
from datadiss.supply import gain_supply
from datadiss.verdict import Status
from datadiss.verify_io import (build_extended_data, build_extended_system, cross_check_io_samples,
                                gain_io_noisefree, io_noise_set, io_pe_ok, optimize_gain_io_robust,
                                sample_consistent_io_systems, simulate_difference,
                                suspect_overestimated_lag, toeplitz_markov, verify_io_noisefree,
                                verify_io_robust)


def test_extended_data_layout():
    t = Trajectory(u=[[1.0], [2.0], [3.0]], y=[[4.0], [5.0], [6.0]])
    ed = build_extended_data(t, 1)
    np.testing.assert_array_equal(ed.Xi, [[1, 2], [4, 5]])
    np.testing.assert_array_equal(ed.U, [[2, 3]])
    np.testing.assert_array_equal(ed.Y, [[5, 6]])
    with pytest.raises(ValueError):
        build_extended_data(t, 3)


def test_extended_data_shift():
    rng = np.random.default_rng(0)
    t = simulate(random_system(3, 2, 1, seed=0), rng.uniform(-1, 1, (12, 2)))
    l = 2
    ed = build_extended_data(t, l)
    from datadiss.data import hankel
    np.testing.assert_array_equal(ed.Xi[:l * 2], hankel(t.u[:-1], l))
    for j in range(ed.Xi.shape[1] - 1):
        np.testing.assert_array_equal(ed.Xip[:, j], ed.Xi[:, j + 1])
    np.testing.assert_array_equal(ed.Xip[(l - 1) * 2:l * 2, 0], t.u[l])


def test_s1_extended_system():
    es = build_extended_system(S1, 1)
    np.testing.assert_allclose(es.At, [[0, 0], [1, 0.5]])
    np.testing.assert_allclose(es.Bt, [[1], [0]])
    np.testing.assert_allclose(es.Ct, [[1, 0.5]])
    np.testing.assert_allclose(es.Dt, [[0]])
    np.testing.assert_allclose(es.T, [[0, 1]])


def test_toeplitz_markov():
    R = toeplitz_markov(S1, 3)
    np.testing.assert_allclose(R, [[0, 0, 0], [1, 0, 0], [0.5, 1, 0]])


def test_lag_below_rejected():
    sys = random_system(4, 2, 2, seed=1)
    with pytest.raises(ValueError):
        build_extended_system(sys, lag(sys) - 1)


def test_lifted_outputs_match():
    for seed in range(5):
        sys = random_system(4, 2, 2, seed=seed)
        l = lag(sys)
        es = build_extended_system(sys, l)
        rng = np.random.default_rng(seed)
        u = rng.uniform(-1, 1, (30, 2))
        t = simulate(sys, u, rng.uniform(-1, 1, 4))
        lifted = es.as_lti()
        xi0 = np.concatenate([u[:l].ravel(), t.y[:l].ravel()])
        tl = simulate(lifted, u[l:], xi0)
        np.testing.assert_allclose(tl.y, t.y[l:], atol=1e-10)
        ed = build_extended_data(t, l)
        np.testing.assert_allclose(es.T @ ed.Xi, t.x[:ed.Xi.shape[1]].T, atol=1e-10)
        # the difference form reproduces the same outputs
        td = simulate_difference(es, u, t.y[:l])
        np.testing.assert_allclose(td.y, t.y, atol=1e-10)


@pytest.fixture(scope="module")
def s1_io():
    t, _, _ = io_experiment(S1, 1, 30, 0.0, seed=0)
    return t, build_extended_data(t, 1)


def test_io_noisefree_verdicts(s1_io):
    t, ed = s1_io
    assert io_pe_ok(t.u, 1, 1)
    assert verify_io_noisefree(ed, gain_supply(2.05, 1, 1), True).status == Status.DISSIPATIVE
    assert verify_io_noisefree(ed, gain_supply(1.9, 1, 1), True).status == Status.NOT_DISSIPATIVE
    # without a confirmed excitation order a feasible LMI is not conclusive
    assert verify_io_noisefree(ed, gain_supply(2.05, 1, 1), False).status == Status.INCONCLUSIVE


def test_io_noisefree_bisection(s1_io):
    assert gain_io_noisefree(s1_io[1]) == pytest.approx(S1_GAIN, rel=1e-4)


def test_io_noisefree_four_states():
    sys = random_system(4, 2, 2, seed=11)
    t, _, _ = io_experiment(sys, 2, 80, 0.0, seed=0)
    assert gain_io_noisefree(build_extended_data(t, 2)) == pytest.approx(hinf_oracle(sys), rel=1e-3)


def test_io_noise_set():
    nb = io_noise_set(0.01, 50, 2, 2)
    np.testing.assert_allclose(nb.Rn, 0.0048 * np.eye(2))
    assert nb.span == 48


def test_true_lifted_model_is_member():
    sys = four_state_system(0)
    ed, nb, qs, es = io_problem(sys, 2, 50, 1e-2, seed=0)
    _, _, v = io_experiment(sys, 2, 50, 1e-2, seed=0)
    G = np.hstack([es.A2, es.Dt])
    np.testing.assert_allclose(qs.membership_form(G), membership_form(nb, v.T), atol=1e-10)
    assert qs.contains(G)


def test_noisefree_truth_on_boundary():
    ed, nb, qs, es = io_problem(S1, 1, 20, 0.0, seed=0)
    np.testing.assert_allclose(qs.membership_form(np.hstack([es.A2, es.Dt])), 0, atol=1e-12)


def test_robust_io_small_noise():
    sys = four_state_system(1)
    ed, nb, qs, es = io_problem(sys, 2, 50, 1e-4, seed=1)
    g_true = hinf_oracle(sys)
    est = optimize_gain_io_robust(qs, es.A1, es.B1)
    assert est.found
    assert g_true <= est.value <= 1.05 * g_true
    v = verify_io_robust(qs, es.A1, es.B1, gain_supply(1.01 * est.value, 2, 2))
    assert v.status == Status.DISSIPATIVE
    smp = sample_consistent_io_systems(qs, ed, nb, count=20, seed=0)
    n_pass, _ = cross_check_io_samples(smp, gain_supply(est.value, 2, 2), est.verdict.certificate)
    assert n_pass == 20


def test_robust_io_s1_near_noise_free():
    ed, nb, qs, es = io_problem(S1, 1, 30, 1e-6, seed=0)
    est = optimize_gain_io_robust(qs, es.A1, es.B1)
    assert est.found and 2.0 <= est.value <= 2.2


def test_robust_io_monotone_then_unknown():
    sys = four_state_system(2)
    vals = []
    for vb in (1e-3, 1e-2, 1.0):
        ed, nb, qs, es = io_problem(sys, 2, 50, 1e-3, seed=2, set_bound=vb)
        vals.append(optimize_gain_io_robust(qs, es.A1, es.B1))
    assert vals[0].found and vals[1].found
    assert vals[0].value <= vals[1].value
    assert not vals[2].found and vals[2].verdict.status == Status.UNKNOWN


def test_overestimated_lag_flag():
    t, _, _ = io_experiment(S1, 1, 30, 0.0, seed=0)
    assert not suspect_overestimated_lag(build_extended_data(t, 1))
    assert suspect_overestimated_lag(build_extended_data(t, 2))
