import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datadiss.sdp import (LmiConstraint, SdpProblem, SdpStatus, SolverConfig, VariableLayout,
                          solve_feasibility, solve_min_linear, verify_solution)


def scalar(F0, F1, **kw):
    return LmiConstraint([[F0]], [[[F1]]], **kw)


def test_scalar_feasible():
    p = SdpProblem(1, [scalar(-1.0, 1.0)])
    sol = solve_feasibility(p)
    assert sol.status == SdpStatus.FEASIBLE
    assert sol.x[0] >= 1.0
    assert verify_solution(p, sol.x).worst >= 0


def test_scalar_infeasible():
    sol = solve_feasibility(SdpProblem(1, [scalar(-1.0, 0.0)]))
    assert sol.status == SdpStatus.INFEASIBLE


def test_two_by_two_feasible_region():
    F0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    p = SdpProblem(1, [LmiConstraint(F0, np.eye(2)[None])])
    sol = solve_feasibility(p)
    assert sol.status == SdpStatus.FEASIBLE
    assert sol.x[0] >= 1.0 - 1e-9
    opt = solve_min_linear(SdpProblem(1, p.constraints, c=[1.0]))
    assert opt.x[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("M, want", [([[2.0, 1.0], [1.0, 2.0]], 1.0), (np.diag([3.0, 5.0]), 3.0)])
def test_lambda_min_extraction(M, want):
    p = SdpProblem(1, [LmiConstraint(M, -np.eye(2)[None])], c=[-1.0])
    sol = solve_min_linear(p)
    assert sol.status == SdpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(want, rel=1e-6)
    # boundary witness: margin near zero
    assert abs(sol.worst_margin) <= SolverConfig().feas_tol


def test_minimize_scalar():
    sol = solve_min_linear(SdpProblem(1, [scalar(-1.0, 1.0)], c=[1.0]))
    assert sol.status == SdpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)


def test_unbounded_detected():
    sol = solve_min_linear(SdpProblem(1, [scalar(0.0, 1.0)], c=[-1.0]))
    assert sol.status == SdpStatus.UNBOUNDED


def test_infeasible_optimization_reports_infeasible():
    sol = solve_min_linear(SdpProblem(1, [scalar(-1.0, 0.0)], c=[1.0]))
    assert sol.status == SdpStatus.INFEASIBLE


def test_violating_point_has_negative_margin():
    p = SdpProblem(1, [scalar(-1.0, 1.0)])
    assert verify_solution(p, [0.0]).worst < 0


def test_strict_block_needs_margin():
    # x >= 0 strictly together with x <= 0 has no strictly feasible point
    p = SdpProblem(1, [scalar(0.0, 1.0, strict=True), scalar(0.0, -1.0)])
    assert solve_feasibility(p).status != SdpStatus.FEASIBLE


def test_iteration_budget_never_yields_wrong_verdict():
    M = np.diag([3.0, 5.0])
    p = SdpProblem(1, [LmiConstraint(M, -np.eye(2)[None])], c=[-1.0])
    sol = solve_min_linear(p, SolverConfig(max_iter=2))
    assert sol.status in (SdpStatus.INACCURATE, SdpStatus.OPTIMAL)
    if sol.status == SdpStatus.OPTIMAL:
        assert sol.x[0] == pytest.approx(3.0, rel=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(feas_tol=0)


def test_problem_shape_checks():
    with pytest.raises(ValueError):
        LmiConstraint(np.eye(2), np.zeros((1, 3, 3)))
    with pytest.raises(ValueError):
        SdpProblem(2, [scalar(0.0, 1.0)])
    with pytest.raises(ValueError):
        SdpProblem(1, [scalar(0.0, 1.0)], c=[1.0, 2.0])


def test_variable_layout_packing():
    L = VariableLayout().sym("P", 2).scalar("tau")
    assert L.size == 4
    assert L.names == ("P[0,0]", "P[0,1]", "P[1,1]", "tau")
    v = L.unpack([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(v["P"], [[1, 2], [2, 3]])
    assert v["tau"] == 4.0
    con = L.affine_lmi(lambda P, tau: P - tau * np.eye(2))
    np.testing.assert_allclose(con.evaluate([1.0, 2.0, 3.0, 4.0]), [[-3, 2], [2, -1]])


def test_layout_psd_constraint():
    L = VariableLayout().sym("P", 2)
    M = np.array([[1.0, 0.5], [0.5, 1.0]])
    cons = [L.psd("P"), L.affine_lmi(lambda P: M - P)]
    p = SdpProblem(L.size, cons, c=-np.array([1.0, 0.0, 1.0]))
    sol = solve_min_linear(p)
    assert sol.status == SdpStatus.OPTIMAL
    np.testing.assert_allclose(L.unpack(sol.x)["P"], M, atol=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_random_lambda_min(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    G = rng.standard_normal((d, d))
    A = G + G.T
    sol = solve_min_linear(SdpProblem(1, [LmiConstraint(A, -np.eye(d)[None])], c=[-1.0]))
    lm = np.linalg.eigvalsh(A)[0]
    assert sol.x[0] == pytest.approx(lm, rel=1e-5, abs=1e-7)


def test_against_cvxpy_if_available():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(0)
    k, d = 3, 4
    Fi = rng.standard_normal((k, d, d))
    Fi = Fi + Fi.transpose(0, 2, 1)
    F0 = 10 * np.eye(d)
    c = rng.standard_normal(k)
    ours = solve_min_linear(SdpProblem(k, [LmiConstraint(F0, Fi)], c=c))
    x = cp.Variable(k)
    expr = F0 + sum(x[i] * Fi[i] for i in range(k))
    prob = cp.Problem(cp.Minimize(c @ x), [0.5 * (expr + expr.T) >> 0])
    prob.solve()
    assert ours.objective == pytest.approx(prob.value, rel=1e-4)
