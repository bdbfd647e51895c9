"""Dissipativity verification from input-output data.

Without state measurements the state is replaced by the extended state

    xi_k = (u_{k-l}; ...; u_{k-1}; y_{k-l}; ...; y_{k-1})

for some ``l`` at least the lag. The lifted model has fixed shift rows and
an unknown last block row, so only that row and the feedthrough need to be
inferred from data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import NoiseBoundQuadratic, NoiseTarget, Trajectory, is_persistently_exciting, norm_bound_noise_set
from .lti import LtiSystem, lag as system_lag, model_dissipativity_check, observability_matrix
from .numerics import as_matrix, rank_with_tol, sym
from .sdp import SdpProblem, SdpStatus, SolverConfig, VariableLayout, solve_feasibility
from .supply import SupplyRate, gain_supply, inverse_gain, inverse_passivity, invert, passivity_supply
from .verdict import Certificate, Estimate, Status, Verdict, bisect, solver_note
from .verify_state import (QuadraticMatrixSet, RobustProblem, _assemble, _data_basis, _gain_from_mu,
                           _optimize, _robust_verdict, check_rt_sign, consistent_system, data_set,
                           dual_storage_margin, sample_noise)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtendedData:
    """Extended-state data matrices; all have ``N - l`` columns."""

    Xi: np.ndarray
    Xip: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    l: int

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[0]

    @property
    def n_xi(self) -> int:
        return self.Xi.shape[0]

    @property
    def Z(self) -> np.ndarray:
        return np.vstack([self.Xi, self.U])


def build_extended_data(t: Trajectory, l: int) -> ExtendedData:
    """Stack windows of ``l`` past inputs and outputs.

    Column ``j`` of ``Xi`` is ``(u_j..u_{j+l-1}; y_j..y_{j+l-1})``, column
    ``j`` of ``U`` / ``Y`` is the sample at time ``j + l``.
    """
    if t.y is None:
        raise ValueError("input-output verification needs measured outputs")
    if l < 1:
        raise ValueError("l must be at least 1")
    N = t.N
    if N <= l:
        raise ValueError(f"need more than l = {l} samples, got N = {N}")
    cols = N - l

    def windows(s, start):
        return np.vstack([s[start + i:start + i + cols].T for i in range(l)])

    Xi = np.vstack([windows(t.u, 0), windows(t.y, 0)])
    Xip = np.vstack([windows(t.u, 1), windows(t.y, 1)])
    return ExtendedData(Xi, Xip, t.u[l:].T.copy(), t.y[l:].T.copy(), l)


def shift_structure(m: int, p: int, l: int):
    """Known rows ``(A1, B1)`` of the lifted model (all but the last p rows)."""
    nx = (m + p) * l
    A1 = np.zeros((nx - p, nx))
    B1 = np.zeros((nx - p, m))
    lm = l * m
    for i in range(l - 1):
        A1[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
        A1[lm + i * p:lm + (i + 1) * p, lm + (i + 1) * p:lm + (i + 2) * p] = np.eye(p)
    B1[(l - 1) * m:lm] = np.eye(m)
    return A1, B1


@dataclass(frozen=True)
class ExtendedSystem:
    """Lifted model ``xi+ = At xi + Bt u``, ``y = Ct xi + Dt u``.

    ``T`` maps ``xi_k`` to the state at the start of its window, ``x_{k-l}``.
    """

    At: np.ndarray
    Bt: np.ndarray
    Ct: np.ndarray
    Dt: np.ndarray
    l: int
    T: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.Bt.shape[1]

    @property
    def p(self) -> int:
        return self.Ct.shape[0]

    @property
    def A1(self) -> np.ndarray:
        return self.At[:-self.p]

    @property
    def A2(self) -> np.ndarray:
        return self.At[-self.p:]

    @property
    def B1(self) -> np.ndarray:
        return self.Bt[:-self.p]

    def as_lti(self) -> LtiSystem:
        return LtiSystem(self.At, self.Bt, self.Ct, self.Dt)

    def difference_coefficients(self):
        """ARX form ``y_k = sum_i (b_i u_{k-i} - a_i y_{k-i}) + d u_k``.

        Returns lists ``a``, ``b`` indexed by ``i = 1..l`` and ``d``.
        """
        l, m, p = self.l, self.m, self.p
        A2 = self.A2
        b = [A2[:, (l - i) * m:(l - i + 1) * m] for i in range(1, l + 1)]
        a = [-A2[:, l * m + (l - i) * p:l * m + (l - i + 1) * p] for i in range(1, l + 1)]
        return a, b, self.Dt


def extended_from_rows(A2, D2, m: int, p: int, l: int) -> ExtendedSystem:
    A1, B1 = shift_structure(m, p, l)
    A2, D2 = as_matrix(A2, "A2"), as_matrix(D2, "D2")
    return ExtendedSystem(np.vstack([A1, A2]), np.vstack([B1, D2]), A2, D2, l)


def toeplitz_markov(sys: LtiSystem, l: int) -> np.ndarray:
    """Block lower-triangular map from ``(u_0..u_{l-1})`` to ``(y_0..y_{l-1})`` at ``x_0 = 0``."""
    m, p = sys.m, sys.p
    R = np.zeros((l * p, l * m))
    mk = [sys.D]
    Ak = np.eye(sys.n)
    for _ in range(1, l):
        mk.append(sys.C @ Ak @ sys.B)
        Ak = Ak @ sys.A
    for i in range(l):
        for j in range(i + 1):
            R[i * p:(i + 1) * p, j * m:(j + 1) * m] = mk[i - j]
    return R


def build_extended_system(sys: LtiSystem, l: int) -> ExtendedSystem:
    """Lifted model of `sys` over windows of length ``l >= lag``."""
    lg = system_lag(sys)
    if l < lg:
        raise ValueError(f"l = {l} is below the lag {lg}")
    m, p = sys.m, sys.p
    O = observability_matrix(sys, l)
    R = toeplitz_markov(sys, l)
    T = np.linalg.pinv(O) @ np.hstack([-R, np.eye(l * p)])
    Al = np.linalg.matrix_power(sys.A, l)
    row = np.zeros((p, (m + p) * l))
    for i in range(l):
        # coefficient of u_{k-l+i} is C A^{l-1-i} B
        row[:, i * m:(i + 1) * m] = sys.C @ np.linalg.matrix_power(sys.A, l - 1 - i) @ sys.B
    A2 = row + sys.C @ Al @ T
    es = extended_from_rows(A2, sys.D, m, p, l)
    A1, B1 = shift_structure(m, p, l)
    assert np.array_equal(es.A1, A1) and np.array_equal(es.B1, B1)
    return ExtendedSystem(es.At, es.Bt, es.Ct, es.Dt, l, T)


def initial_window(es: ExtendedSystem, t: Trajectory, k: int) -> np.ndarray:
    """``xi_k`` from a trajectory; needs ``k >= l``."""
    l = es.l
    if k < l:
        raise ValueError(f"xi_k needs k >= l = {l}")
    return np.concatenate([t.u[k - l:k].ravel(), t.y[k - l:k].ravel()])


def simulate_difference(es: ExtendedSystem, u, y_init, v=None, bv=None) -> Trajectory:
    """Run the difference-operator model with output noise ``bv v_k``.

    Parameters
    ----------
    u : array_like, shape (N, m)
    y_init : array_like, shape (l, p)
        Outputs ``y_0 .. y_{l-1}``.
    v : array_like, shape (N - l, m_v), optional
        Noise entering at times ``l .. N-1``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    N, l, p = u.shape[0], es.l, es.p
    y = np.zeros((N, p))
    y[:l] = np.asarray(y_init, dtype=float).reshape(l, p)
    if v is not None:
        v = np.asarray(v, dtype=float).reshape(N - l, -1)
        bv = np.eye(p) if bv is None else as_matrix(bv, "bv")
    for k in range(l, N):
        xi = np.concatenate([u[k - l:k].ravel(), y[k - l:k].ravel()])
        y[k] = es.A2 @ xi + es.Dt @ u[k]
        if v is not None:
            y[k] += bv @ v[k - l]
    return Trajectory(u=u, y=y)


# -------------------------------------------------------------- noise-free test

def io_pe_ok(u, order_bound: int, l: int) -> bool:
    """Input excitation needed by the noise-free test: order ``n_bar + l + 1``."""
    return is_persistently_exciting(u, order_bound + l + 1)


def verify_io_noisefree(ed: ExtendedData, Pi: SupplyRate, pe_order_checked: bool = False,
                        mode: str = "psd", cfg: SolverConfig | None = None) -> Verdict:
    """Exact test from noise-free input-output data.

    `pe_order_checked` states that the input was verified to be
    persistently exciting of order ``n + l + 1`` (see :func:`io_pe_ok`);
    without it a feasible LMI is reported as inconclusive.
    """
    if Pi.m != ed.m or Pi.p != ed.p:
        raise ValueError(f"supply rate is for m={Pi.m}, p={Pi.p}; data has m={ed.m}, p={ed.p}")
    V = _data_basis(ed.Xi, ed.Xip, ed.U, ed.Y)
    Xi, Xip = ed.Xi @ V, ed.Xip @ V
    W = np.vstack([ed.U @ V, ed.Y @ V])
    PiM = Pi.matrix()
    L = VariableLayout().sym("P", ed.n_xi)
    cons = [L.affine_lmi(lambda P: -(Xip.T @ P @ Xip - Xi.T @ P @ Xi - W.T @ PiM @ W),
                         name="data dissipation")]
    if mode != "free":
        cons.append(L.psd("P", strict=mode == "pd"))
    sol = solve_feasibility(SdpProblem(L.size, cons), cfg)
    diag = {"rank": rank_with_tol(np.vstack([ed.Xi, ed.U])), "l": ed.l}
    if sol.status == SdpStatus.INFEASIBLE:
        return Verdict(Status.NOT_DISSIPATIVE, margins=sol.margins, solution=sol,
                       notes=[solver_note(sol)], diagnostics=diag)
    if sol.status != SdpStatus.FEASIBLE:
        return Verdict(Status.UNKNOWN, margins=sol.margins, solution=sol,
                       notes=[solver_note(sol)], diagnostics=diag)
    if not pe_order_checked:
        return Verdict(Status.INCONCLUSIVE, margins=sol.margins, solution=sol, diagnostics=diag,
                       notes=["feasible, but excitation of order n + l + 1 was not confirmed"])
    return Verdict(Status.DISSIPATIVE, Certificate(L.unpack(sol.x)["P"]), sol.margins,
                   solution=sol, diagnostics=diag)


def gain_io_noisefree(ed: ExtendedData, rel_tol: float = 1e-6, cfg: SolverConfig | None = None,
                      gamma_max: float = 1e6) -> float:
    """Smallest gain accepted by the noise-free IO test, by bisection."""
    check = lambda g: verify_io_noisefree(ed, gain_supply(max(g, 1e-12), ed.m, ed.p), True, cfg=cfg)
    hi = 1.0
    while not check(hi).dissipative:
        hi *= 4.0
        if hi > gamma_max:
            return np.inf
    thr, best, _ = bisect(check, 0.0, hi, rel_tol=rel_tol)
    return hi if best is None else best


def passivity_io_noisefree(ed: ExtendedData, rel_tol: float = 1e-6, cfg: SolverConfig | None = None,
                           rho_min: float = -1e6) -> float:
    check = lambda r: verify_io_noisefree(ed, passivity_supply(r, ed.m, ed.p), True, cfg=cfg)
    lo = -1.0
    while not check(lo).dissipative:
        lo *= 4.0
        if lo < rho_min:
            return -np.inf
    hi = 1.0
    while check(hi).dissipative:
        lo, hi = hi, 4.0 * hi
        if hi > -rho_min:
            return np.inf
    thr, best, _ = bisect(check, lo, hi, rel_tol=rel_tol, increasing=False)
    return lo if best is None else best


# -------------------------------------------------------------- robust test

def io_noise_set(vbar: float, N: int, l: int, m_v: int) -> NoiseBoundQuadratic:
    """Energy bound ``V V^T <= vbar^2 (N - l) I`` on the output noise."""
    if N <= l:
        raise ValueError("need N > l")
    return norm_bound_noise_set(vbar, N - l, m_v, target=NoiseTarget.PROCESS_OUTPUT)


def sigma_uy_quadratic(ed: ExtendedData, nb: NoiseBoundQuadratic, bv=None) -> QuadraticMatrixSet:
    """All ``(A2, D)`` explaining ``Y = A2 Xi + D U + bv V`` with admissible ``V``.

    `bv` defaults to the identity, which needs ``m_v = p``.
    """
    if bv is None:
        if nb.width != ed.p:
            raise ValueError(f"default bv = I needs noise width p = {ed.p}, got {nb.width}")
        bv = np.eye(ed.p)
    if suspect_overestimated_lag(ed):
        log.warning("(Xi; U) is rank deficient; l = %d may exceed the lag and the robust "
                    "bound is then likely to be loose or infeasible", ed.l)
    return data_set(ed.Z, ed.Y, nb, bv)


def robust_io_matrix(qs: QuadraticMatrixSet, A1, B1, P, tau, inv) -> np.ndarray:
    """Robust IO dissipation matrix; the test requires it to be positive definite.

    Acts on ``(a; b; c)`` with ``a`` in R^{n_xi}, ``b`` in R^p and ``c`` in
    R^{n_xi+m}.
    """
    p = qs.rows
    nx = A1.shape[1]
    m = qs.cols - nx
    z = np.zeros
    Inx, Ip, Im = np.eye(nx), np.eye(p), np.eye(m)
    F = np.block([
        [np.hstack([A1.T, z((nx, p))]), z((nx, p)), Inx, z((nx, m))],
        [-Inx, z((nx, p)), z((nx, nx + m))],
        [np.hstack([B1.T, z((m, p))]), z((m, p)), z((m, nx)), Im],
        [z((p, nx)), -Ip, z((p, nx + m))],
        [z((nx + m, nx + p)), np.eye(nx + m)],
        [np.hstack([z((p, nx - p)), Ip]), Ip, z((p, nx + m))],
    ])
    d1 = 2 * nx
    mid = np.zeros((F.shape[0], F.shape[0]))
    mid[:nx, :nx] = -P
    mid[nx:d1, nx:d1] = P
    mid[d1:d1 + m + p, d1:d1 + m + p] = -inv.matrix()
    mid[d1 + m + p:, d1 + m + p:] = -tau * qs.matrix()
    return sym(F.T @ mid @ F)


def _io_dims(qs, A1, B1):
    A1, B1 = as_matrix(A1, "A1"), as_matrix(B1, "B1")
    nx = A1.shape[1]
    p = qs.rows
    m = qs.cols - nx
    if A1.shape != (nx - p, nx) or B1.shape != (nx - p, m):
        raise ValueError(f"A1, B1 must be {nx - p}x{nx} and {nx - p}x{m}")
    return A1, B1, m, p


def assemble_robust_io_lmi(qs: QuadraticMatrixSet, A1, B1, inv, maximize: bool = False) -> RobustProblem:
    A1, B1, m, p = _io_dims(qs, A1, B1)
    fn = lambda P, tau, iv: robust_io_matrix(qs, A1, B1, P, tau, iv)
    return _assemble(fn, A1.shape[1], np.linalg.norm(qs.matrix(), 2), inv, maximize)


_SIGN_NOTE = "the input-output test"


def verify_io_robust(qs: QuadraticMatrixSet, A1, B1, Pi: SupplyRate,
                     cfg: SolverConfig | None = None) -> Verdict:
    """Certify every lifted model consistent with the data; infeasible means unknown.

    A violated ``Rt <= 0`` precondition is reported as a warning only.
    """
    inv = invert(Pi)
    notes = [n for n in [check_rt_sign(inv, "nsd", True, _SIGN_NOTE)] if n]
    rp = assemble_robust_io_lmi(qs, A1, B1, inv)
    return _robust_verdict(rp, solve_feasibility(rp.problem, cfg), notes)


def optimize_gain_io_robust(qs: QuadraticMatrixSet, A1, B1, cfg: SolverConfig | None = None) -> Estimate:
    """Smallest certified gain over ``mu = 1/gamma^2`` in one SDP."""
    A1, B1, m, p = _io_dims(qs, A1, B1)
    log.warning("gain supply has Rt > 0, outside the sign assumed by %s", _SIGN_NOTE)
    rp = assemble_robust_io_lmi(qs, A1, B1, lambda mu: inverse_gain(mu, m, p), maximize=True)
    return _optimize(rp, cfg, _gain_from_mu, ["gain supply has Rt > 0 (sign precondition not met)"])


def optimize_passivity_io_robust(qs: QuadraticMatrixSet, A1, B1, cfg: SolverConfig | None = None) -> Estimate:
    A1, B1, m, p = _io_dims(qs, A1, B1)
    if m != p:
        raise ValueError(f"passivity needs a square channel, got m={m}, p={p}")
    rp = assemble_robust_io_lmi(qs, A1, B1, lambda rho: inverse_passivity(rho, m), maximize=True)
    return _optimize(rp, cfg, float, [])


def sample_consistent_io_systems(qs: QuadraticMatrixSet, ed: ExtendedData, nb: NoiseBoundQuadratic,
                                 bv=None, count: int = 50, seed=None, max_draws: int | None = None):
    """Random lifted models ``ExtendedSystem`` from the IO consistency set."""
    if count < 1:
        raise ValueError("count must be at least 1")
    bv = np.eye(ed.p) if bv is None else as_matrix(bv, "bv")
    rng = np.random.default_rng(seed)
    out = []
    draws = 0
    max_draws = max_draws or 20 * count
    while len(out) < count and draws < max_draws:
        draws += 1
        G = consistent_system(ed.Z, ed.Y, sample_noise(nb, rng), bv)
        if qs.contains(G):
            out.append(extended_from_rows(G[:, :ed.n_xi], G[:, ed.n_xi:], ed.m, ed.p, ed.l))
    if len(out) < count:
        raise ValueError(f"only {len(out)} of {count} samples passed membership")
    return out


def cross_check_io_samples(samples, Pi: SupplyRate, cert: Certificate, cfg: SolverConfig | None = None):
    """Returns ``(n_model_pass, min_dual_margin)`` over lifted samples."""
    passed = 0
    worst = np.inf
    for es in samples:
        if model_dissipativity_check(es.as_lti(), Pi, cfg=cfg).dissipative:
            passed += 1
        worst = min(worst, dual_storage_margin(es.At, es.Bt, es.Ct, es.Dt, Pi, cert.P))
    return passed, worst


def suspect_overestimated_lag(ed: ExtendedData) -> bool:
    """True if ``(Xi; U)`` is rank deficient, as happens when ``l`` exceeds the lag."""
    return rank_with_tol(ed.Z) < ed.Z.shape[0]
