"""Dissipativity verification from input-state data.

Two conditions are implemented:

* the exact noise-free test, an LMI in the storage matrix ``P`` built
  directly from ``X``, ``X+`` and ``U``;
* the robust test for noisy data, which certifies every pair ``(A, B)``
  consistent with the data and a quadratic noise bound via an
  S-procedure multiplier ``tau``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import (NoiseBoundQuadratic, StateDataMatrices, check_rank_condition,
                   membership)
from .lti import LtiSystem, dissipation_matrix, model_dissipativity_check
from .numerics import RANK_TOL, as_matrix, lambda_max, lambda_min, psd_tol, rank_with_tol, row_space_basis, sym
from .sdp import (SdpProblem, SdpStatus, SolverConfig, VariableLayout, solve_feasibility,
                  solve_min_linear)
from .supply import (InverseSupplyRate, SupplyRate, gain_supply, inverse_gain,
                     inverse_passivity, invert, passivity_supply)
from .verdict import Certificate, Estimate, Status, Verdict, bisect, solver_note

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadraticMatrixSet:
    """Matrices ``G`` (rows x cols) with ``(G^T; I)^T [[Qb, Sb], [Sb^T, Rb]] (G^T; I) >= 0``.

    For input-state data ``G = (A B)``; for input-output data ``G`` is the
    unknown last block row of the lifted model together with its feedthrough.
    """

    Qb: np.ndarray
    Sb: np.ndarray
    Rb: np.ndarray

    def __post_init__(self):
        Qb = sym(as_matrix(self.Qb, "Qb"))
        Rb = sym(as_matrix(self.Rb, "Rb"))
        Sb = as_matrix(self.Sb, "Sb")
        if Sb.shape != (Qb.shape[0], Rb.shape[0]):
            raise ValueError(f"Sb must be {Qb.shape[0]}x{Rb.shape[0]}, got {Sb.shape}")
        object.__setattr__(self, "Qb", Qb)
        object.__setattr__(self, "Rb", Rb)
        object.__setattr__(self, "Sb", Sb)

    @property
    def rows(self) -> int:
        return self.Rb.shape[0]

    @property
    def cols(self) -> int:
        return self.Qb.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.Qb, self.Sb], [self.Sb.T, self.Rb]])

    def membership_form(self, G) -> np.ndarray:
        G = as_matrix(G, "G")
        if G.shape != (self.rows, self.cols):
            raise ValueError(f"G must be {self.rows}x{self.cols}, got {G.shape}")
        return sym(G @ self.Qb @ G.T + G @ self.Sb + self.Sb.T @ G.T + self.Rb)

    def contains(self, G, tol: float = 1e-8) -> bool:
        F = self.membership_form(G)
        return lambda_min(F) >= -psd_tol(F, tol) * max(1.0, np.linalg.norm(self.matrix(), 2))


def data_set(Z, Xp, nb: NoiseBoundQuadratic, Bw) -> QuadraticMatrixSet:
    """Consistency set of ``G`` with ``Xp = G Z + Bw W`` and ``W`` admissible."""
    Z, Xp, Bw = as_matrix(Z, "Z"), as_matrix(Xp, "X+"), as_matrix(Bw, "Bw")
    if Z.shape[1] != Xp.shape[1] or Z.shape[1] != nb.span:
        raise ValueError(f"data has {Z.shape[1]} columns, noise set spans {nb.span}")
    if Bw.shape != (Xp.shape[0], nb.width):
        raise ValueError(f"Bw must be {Xp.shape[0]}x{nb.width}, got {Bw.shape}")
    Qw, Sw, Rw = nb.Qn, nb.Sn, nb.Rn
    Qb = Z @ Qw @ Z.T
    Sb = -Z @ (Qw @ Xp.T + Sw @ Bw.T)
    Rb = Xp @ Qw @ Xp.T + Xp @ Sw @ Bw.T + Bw @ Sw.T @ Xp.T + Bw @ Rw @ Bw.T
    return QuadraticMatrixSet(Qb, Sb, Rb)


def sigma_xu_quadratic(d: StateDataMatrices, nb: NoiseBoundQuadratic, Bw=None) -> QuadraticMatrixSet:
    """All ``(A, B)`` explaining the data for some admissible process noise.

    `Bw` defaults to the identity, which needs a noise width equal to n.
    """
    if Bw is None:
        if nb.width != d.n:
            raise ValueError(f"default Bw = I needs noise width {d.n}, got {nb.width}")
        Bw = np.eye(d.n)
    return data_set(d.Z, d.Xp, nb, Bw)


# -------------------------------------------------------------- noise-free test

def _data_basis(*mats) -> np.ndarray:
    return row_space_basis(np.vstack(mats))


def _noisefree_problem(d: StateDataMatrices, C, D, Pi: SupplyRate, mode: str):
    C, D = as_matrix(C, "C"), as_matrix(D, "D")
    if C.shape != (Pi.p, d.n) or D.shape != (Pi.p, d.m):
        raise ValueError(f"C, D must be {Pi.p}x{d.n} and {Pi.p}x{d.m}")
    V = _data_basis(d.X, d.Xp, d.U)
    X, Xp, U = d.X @ V, d.Xp @ V, d.U @ V
    W = np.vstack([U, C @ X + D @ U])
    PiM = Pi.matrix()
    L = VariableLayout().sym("P", d.n)
    # everything lives in the row space of (X; X+; U), so compress to it
    cons = [L.affine_lmi(lambda P: -(Xp.T @ P @ Xp - X.T @ P @ X - W.T @ PiM @ W),
                         name="data dissipation")]
    if mode != "free":
        cons.append(L.psd("P", strict=mode == "pd"))
    return L, SdpProblem(L.size, cons)


def verify_noisefree(d: StateDataMatrices, C, D, Pi: SupplyRate, mode: str = "psd",
                     cfg: SolverConfig | None = None, rank_tol: float = RANK_TOL) -> Verdict:
    """Exact dissipativity test from noise-free input-state data.

    Returns dissipative when the data LMI is feasible and ``(X; U)`` has full
    row rank, not-dissipative when the LMI is infeasible, and inconclusive
    when it is feasible but the rank condition fails.
    """
    if mode not in ("psd", "pd", "free"):
        raise ValueError(f"mode must be 'psd', 'pd' or 'free', got {mode!r}")
    L, prob = _noisefree_problem(d, C, D, Pi, mode)
    sol = solve_feasibility(prob, cfg)
    rank = rank_with_tol(d.Z, rank_tol) if d.N else 0
    diag = {"rank": rank, "required_rank": d.n + d.m}
    if sol.status == SdpStatus.INFEASIBLE:
        return Verdict(Status.NOT_DISSIPATIVE, margins=sol.margins, solution=sol,
                       notes=[solver_note(sol)], diagnostics=diag)
    if sol.status != SdpStatus.FEASIBLE:
        return Verdict(Status.UNKNOWN, margins=sol.margins, solution=sol,
                       notes=[solver_note(sol)], diagnostics=diag)
    if not check_rank_condition(d, rank_tol):
        return Verdict(Status.INCONCLUSIVE, margins=sol.margins, solution=sol, diagnostics=diag,
                       notes=[f"rank condition failed: rank(X; U) = {rank} < {d.n + d.m}"])
    P = L.unpack(sol.x)["P"]
    return Verdict(Status.DISSIPATIVE, Certificate(P), sol.margins, solution=sol, diagnostics=diag)


def gain_noisefree(d: StateDataMatrices, C, D, rel_tol: float = 1e-6,
                   cfg: SolverConfig | None = None, gamma_max: float = 1e6) -> float:
    """Smallest certified gain found by bisection on :func:`verify_noisefree`.

    The returned value was itself certified dissipative; ``inf`` if no gain
    up to `gamma_max` is.
    """
    p, m = as_matrix(C).shape[0], d.m
    check = lambda g: verify_noisefree(d, C, D, gain_supply(max(g, 1e-12), m, p), cfg=cfg)
    hi = 1.0
    while not check(hi).dissipative:
        hi *= 4.0
        if hi > gamma_max:
            return np.inf
    thr, best, _ = bisect(check, 0.0, hi, rel_tol=rel_tol)
    return hi if best is None else best


def passivity_noisefree(d: StateDataMatrices, C, D, rel_tol: float = 1e-6,
                        cfg: SolverConfig | None = None, rho_min: float = -1e6) -> float:
    """Largest certifiable passivity index by bisection on :func:`verify_noisefree`."""
    m = d.m
    check = lambda r: verify_noisefree(d, C, D, passivity_supply(r, m, as_matrix(C).shape[0]), cfg=cfg)
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

def robust_state_matrix(qs: QuadraticMatrixSet, C, D, P, tau, inv: InverseSupplyRate) -> np.ndarray:
    """Robust dissipation matrix; the test requires it to be positive definite.

    Congruence of ``diag(-P, P, -Pi^{-1}, -tau Psi)`` by the outer factor
    acting on ``(a; b; c)`` with ``a`` in R^{n+m}, ``b`` in R^n, ``c`` in R^p.
    """
    n, k = qs.rows, qs.cols
    m = k - n
    p = C.shape[0]
    In, Im, Ip = np.eye(n), np.eye(m), np.eye(p)
    z = np.zeros
    F = np.block([
        [In, z((n, m)), z((n, n)), C.T],
        [z((n, n + m)), -In, z((n, p))],
        [z((m, n)), Im, z((m, n)), D.T],
        [z((p, n + m + n)), -Ip],
        [np.eye(k), z((k, n)), z((k, p))],
        [z((n, k)), In, z((n, p))],
    ])
    d1 = n + n
    mid = np.zeros((F.shape[0], F.shape[0]))
    mid[:n, :n] = -P
    mid[n:d1, n:d1] = P
    mid[d1:d1 + m + p, d1:d1 + m + p] = -inv.matrix()
    mid[d1 + m + p:, d1 + m + p:] = -tau * qs.matrix()
    return sym(F.T @ mid @ F)


@dataclass
class RobustProblem:
    layout: VariableLayout
    problem: SdpProblem
    tau_scale: float
    has_theta: bool

    def unpack(self, x):
        v = self.layout.unpack(x)
        v["tau"] = v["tau"] * self.tau_scale
        return v


def _assemble(matrix_fn, n_storage: int, set_norm: float, inv, maximize: bool) -> RobustProblem:
    # tau is rescaled so its strictness margin is relative to the set's size
    ts = 1.0 / max(set_norm, 1e-300)
    L = VariableLayout().sym("P", n_storage).scalar("tau")
    affine = callable(inv)
    if affine:
        L.scalar("theta")
        fn = lambda P, tau, theta: matrix_fn(P, tau * ts, inv(theta))
    else:
        fn = lambda P, tau: matrix_fn(P, tau * ts, inv)
    cons = [L.affine_lmi(fn, strict=True, name="robust dissipation"),
            L.psd("P", strict=True),
            L.psd("tau", strict=True)]
    c = np.zeros(L.size)
    if maximize:
        if not affine:
            raise ValueError("maximization needs a supply parameterized by a scalar")
        c[L.index("theta")] = -1.0
    return RobustProblem(L, SdpProblem(L.size, cons, c=c, var_names=L.names), ts, affine)


def _check_dims(qs: QuadraticMatrixSet, C, D):
    C, D = as_matrix(C, "C"), as_matrix(D, "D")
    n, m = qs.rows, qs.cols - qs.rows
    if C.shape[1] != n or D.shape != (C.shape[0], m):
        raise ValueError(f"C must have {n} columns and D must be {C.shape[0]}x{m}")
    return C, D


def check_rt_sign(inv: InverseSupplyRate, want: str, override: bool, what: str) -> str | None:
    """Check the sign precondition on ``Rt``; return a note if violated."""
    lm = lambda_min(inv.Rt) if want == "psd" else -lambda_max(inv.Rt)
    if lm >= -psd_tol(inv.Rt):
        return None
    msg = (f"{what} expects Rt {'>= 0' if want == 'psd' else '<= 0'} "
           f"but the supply rate {inv.name} violates it")
    if not override:
        raise ValueError(msg + "; pass allow_sign_violation=True to proceed")
    log.warning(msg)
    return msg


def assemble_robust_lmi(qs: QuadraticMatrixSet, C, D, inv, maximize: bool = False) -> RobustProblem:
    """Build the robust input-state LMI in ``(P, tau[, theta])``.

    `inv` is an :class:`InverseSupplyRate` or a callable ``theta -> InverseSupplyRate``
    that is affine in the scalar ``theta``; with ``maximize=True`` the
    problem maximizes ``theta``.
    """
    C, D = _check_dims(qs, C, D)
    fn = lambda P, tau, iv: robust_state_matrix(qs, C, D, P, tau, iv)
    return _assemble(fn, qs.rows, np.linalg.norm(qs.matrix(), 2), inv, maximize)


def _robust_verdict(rp: RobustProblem, sol, notes, value=None) -> Verdict:
    if sol.ok:
        v = rp.unpack(sol.x)
        cert = Certificate(v["P"], v["tau"], value)
        return Verdict(Status.DISSIPATIVE, cert, sol.margins, notes=notes, solution=sol)
    notes = notes + [solver_note(sol)]
    if sol.status == SdpStatus.INFEASIBLE:
        notes.append("robust condition infeasible; this does not show the system is not dissipative")
    return Verdict(Status.UNKNOWN, margins=sol.margins, notes=notes, solution=sol)


def verify_robust(qs: QuadraticMatrixSet, C, D, Pi: SupplyRate, cfg: SolverConfig | None = None,
                  allow_sign_violation: bool = False) -> Verdict:
    """Certify that every system in `qs` is dissipative for `Pi`.

    Infeasibility yields ``unknown``; the condition is only sufficient.
    """
    inv = invert(Pi)
    notes = [n for n in [check_rt_sign(inv, "psd", allow_sign_violation, "the state test")] if n]
    rp = assemble_robust_lmi(qs, C, D, inv)
    return _robust_verdict(rp, solve_feasibility(rp.problem, cfg), notes)


def _optimize(rp: RobustProblem, cfg, to_value: Callable[[float], float], notes) -> Estimate:
    sol = solve_min_linear(rp.problem, cfg)
    if not sol.ok:
        return Estimate(np.nan, _robust_verdict(rp, sol, notes + ["no bound certifiable"]), sol)
    theta = rp.layout.unpack(sol.x)["theta"]
    value = to_value(theta)
    if not np.isfinite(value):
        notes = notes + ["no bound certifiable"]
        v = Verdict(Status.UNKNOWN, margins=sol.margins, notes=notes, solution=sol)
        return Estimate(np.nan, v, sol)
    return Estimate(value, _robust_verdict(rp, sol, notes, value), sol)


def _gain_from_mu(mu: float) -> float:
    return 1.0 / np.sqrt(mu) if mu > 0 else np.nan


def optimize_gain_robust(qs: QuadraticMatrixSet, C, D, cfg: SolverConfig | None = None) -> Estimate:
    """Smallest certified gain via one SDP in ``mu = 1/gamma^2``."""
    C, D = _check_dims(qs, C, D)
    m, p = D.shape[1], C.shape[0]
    rp = assemble_robust_lmi(qs, C, D, lambda mu: inverse_gain(mu, m, p), maximize=True)
    return _optimize(rp, cfg, _gain_from_mu, [])


def optimize_passivity_robust(qs: QuadraticMatrixSet, C, D, cfg: SolverConfig | None = None) -> Estimate:
    """Largest certified input-feedforward passivity index."""
    C, D = _check_dims(qs, C, D)
    m, p = D.shape[1], C.shape[0]
    if m != p:
        raise ValueError(f"passivity needs a square channel, got m={m}, p={p}")
    rp = assemble_robust_lmi(qs, C, D, lambda rho: inverse_passivity(rho, m), maximize=True)
    return _optimize(rp, cfg, float, [])


def bisect_robust(qs: QuadraticMatrixSet, C, D, family: Callable[[float], SupplyRate],
                  lo: float, hi: float, increasing: bool = True, rel_tol: float = 1e-4,
                  cfg: SolverConfig | None = None, allow_sign_violation: bool = False):
    """Bisection fallback for supply families not affine in the inverse."""
    check = lambda t: verify_robust(qs, C, D, family(t), cfg, allow_sign_violation)
    return bisect(check, lo, hi, rel_tol=rel_tol, increasing=increasing)


# -------------------------------------------------------------- consistency sampling

def sample_noise(nb: NoiseBoundQuadratic, rng, boundary_fraction: float = 0.5):
    """Draw an admissible noise matrix.

    A Gaussian direction is scaled to the set boundary by bisection on the
    membership form; the scale is then either kept (boundary sample) or
    shrunk uniformly.
    """
    W0 = rng.standard_normal((nb.width, nb.span))
    if not membership(nb, np.zeros_like(W0)):
        raise ValueError("the noise set does not contain W = 0")
    lo, hi = 0.0, 1.0
    while membership(nb, hi * W0) and hi < 1e12:
        lo, hi = hi, 2.0 * hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if membership(nb, mid * W0):
            lo = mid
        else:
            hi = mid
    s = lo if rng.random() < boundary_fraction else lo * rng.random()
    return s * W0


def consistent_system(Z, Xp, W, Bw):
    """Least-squares ``G`` with ``Xp - Bw W = G Z``."""
    from .numerics import right_pinv
    return (Xp - Bw @ W) @ right_pinv(Z)


def sample_consistent_systems(qs: QuadraticMatrixSet, d: StateDataMatrices, nb: NoiseBoundQuadratic,
                              Bw=None, count: int = 50, seed=None, max_draws: int | None = None):
    """Random ``(A, B)`` pairs from the consistency set, each checked for membership."""
    if count < 1:
        raise ValueError("count must be at least 1")
    Bw = np.eye(d.n) if Bw is None else as_matrix(Bw, "Bw")
    rng = np.random.default_rng(seed)
    out = []
    draws = 0
    max_draws = max_draws or 20 * count
    while len(out) < count and draws < max_draws:
        draws += 1
        G = consistent_system(d.Z, d.Xp, sample_noise(nb, rng), Bw)
        if qs.contains(G):
            out.append((G[:, :d.n], G[:, d.n:]))
    if len(out) < count:
        raise ValueError(f"only {len(out)} of {count} samples passed membership")
    return out


def dual_storage_margin(A, B, C, D, Pi: SupplyRate, Pdual) -> float:
    """``-lambda_max`` of the dissipation matrix with storage ``Pdual^{-1}``, scaled.

    Nonnegative means the storage function certifies the given model.
    """
    S = np.linalg.inv(sym(Pdual))
    M = dissipation_matrix(LtiSystem(A, B, C, D), Pi, S)
    scale = max(1.0, np.linalg.norm(S, 2), np.linalg.norm(Pi.matrix(), 2))
    return -lambda_max(M) / scale


def cross_check_samples(samples, C, D, Pi: SupplyRate, cert: Certificate,
                        cfg: SolverConfig | None = None):
    """Model-based check of sampled consistent systems against a certificate.

    Returns ``(n_model_pass, min_dual_margin)``.
    """
    passed = 0
    worst = np.inf
    for A, B in samples:
        sys = LtiSystem(A, B, C, D)
        if model_dissipativity_check(sys, Pi, cfg=cfg).dissipative:
            passed += 1
        worst = min(worst, dual_storage_margin(A, B, C, D, Pi, cert.P))
    return passed, worst
