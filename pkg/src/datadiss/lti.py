"""Discrete-time LTI models: simulation, structure, and model-based oracles.

The data-driven verifiers never call into this module; it provides the
ground truth they are tested against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .data import Trajectory
from .numerics import as_matrix, rank_with_tol, right_pinv, sym
from .sdp import SdpProblem, SolverConfig, SdpStatus, VariableLayout, solve_feasibility
from .supply import SupplyRate, gain_supply
from .verdict import Certificate, Status, Verdict, bisect, solver_note

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LtiSystem:
    """State-space realization ``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        D = as_matrix(self.D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        for name, M in (("B", B), ("C", C)):
            as_matrix(M, name)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.n else 0.0

    def is_minimal(self, rel_tol: float = 1e-9) -> bool:
        return (rank_with_tol(controllability_matrix(self), rel_tol) == self.n
                and rank_with_tol(observability_matrix(self, self.n), rel_tol) == self.n)


@dataclass(frozen=True)
class KypBlocks:
    Qh: np.ndarray
    Sh: np.ndarray
    Rh: np.ndarray


def simulate(sys: LtiSystem, u, x0=None, w=None, Bw=None) -> Trajectory:
    """Simulate ``x_{k+1} = A x_k + B u_k (+ Bw w_k)``, ``y_k = C x_k + D u_k``.

    Returns states ``x_0 .. x_N`` and outputs ``y_0 .. y_{N-1}``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] != sys.m:
        raise ValueError(f"input has {u.shape[1]} channels, system has {sys.m}")
    N = u.shape[0]
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise ValueError(f"x0 has length {x0.size}, expected {sys.n}")
    if (w is None) != (Bw is None):
        raise ValueError("w and Bw must be given together")
    if w is not None:
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        Bw = np.asarray(Bw, dtype=float).reshape(sys.n, -1)
        if w.shape != (N, Bw.shape[1]):
            raise ValueError(f"w must have shape ({N}, {Bw.shape[1]}), got {w.shape}")
    x = np.empty((N + 1, sys.n))
    x[0] = x0
    for k in range(N):
        x[k + 1] = sys.A @ x[k] + sys.B @ u[k]
        if w is not None:
            x[k + 1] += Bw @ w[k]
    y = x[:-1] @ sys.C.T + u @ sys.D.T
    return Trajectory(u=u, x=x, y=y)


def observability_matrix(sys: LtiSystem, l: int) -> np.ndarray:
    """Stacked ``(C; C A; ...; C A^{l-1})``."""
    if l < 1:
        raise ValueError("l must be at least 1")
    blocks = [sys.C]
    for _ in range(l - 1):
        blocks.append(blocks[-1] @ sys.A)
    return np.vstack(blocks)


def controllability_matrix(sys: LtiSystem) -> np.ndarray:
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def lag(sys: LtiSystem, rel_tol: float = 1e-9) -> int:
    """Smallest l with ``rank O_l = n``.

    Raises
    ------
    ValueError
        If the pair (A, C) is not observable.
    """
    O = observability_matrix(sys, max(sys.n, 1))
    for l in range(1, sys.n + 1):
        if rank_with_tol(O[:l * sys.p], rel_tol) == sys.n:
            return l
    raise ValueError("system is not observable; the lag is undefined")


def kyp_blocks(sys: LtiSystem, Pi: SupplyRate) -> KypBlocks:
    """Supply weights pulled back to ``(x, u)`` coordinates.

    ``S`` is p x m and multiplies ``u`` from the right, so ``C^T S`` is
    n x m and the cross term ``C^T S + C^T Q D`` is dimensionally consistent.
    """
    if Pi.m != sys.m or Pi.p != sys.p:
        raise ValueError(f"supply rate is for m={Pi.m}, p={Pi.p}; system has m={sys.m}, p={sys.p}")
    C, D = sys.C, sys.D
    Qh = sym(C.T @ Pi.Q @ C)
    Sh = C.T @ Pi.S + C.T @ Pi.Q @ D
    Rh = sym(D.T @ Pi.Q @ D + D.T @ Pi.S + Pi.S.T @ D + Pi.R)
    return KypBlocks(Qh, Sh, Rh)


def dissipation_matrix(sys: LtiSystem, Pi: SupplyRate, P) -> np.ndarray:
    """Left side of the dissipation inequality; dissipative iff this is ``<= 0``."""
    A, B = sys.A, sys.B
    k = kyp_blocks(sys, Pi)
    return sym(np.block([[A.T @ P @ A - P - k.Qh, A.T @ P @ B - k.Sh],
                         [B.T @ P @ A - k.Sh.T, B.T @ P @ B - k.Rh]]))


def model_dissipativity_check(sys: LtiSystem, Pi: SupplyRate, require: str = "psd",
                              cfg: SolverConfig | None = None) -> Verdict:
    """Decide dissipativity of a known model via the storage LMI.

    Parameters
    ----------
    require : {"psd", "pd", "free"}
        Constraint on the storage matrix: ``P >= 0``, ``P > 0`` (with the
        solver margin), or no sign constraint.
    """
    if require not in ("psd", "pd", "free"):
        raise ValueError(f"require must be 'psd', 'pd' or 'free', got {require!r}")
    L = VariableLayout().sym("P", sys.n)
    cons = [L.affine_lmi(lambda P: -dissipation_matrix(sys, Pi, P), name="dissipation")]
    if require != "free":
        cons.append(L.psd("P", strict=require == "pd"))
    sol = solve_feasibility(SdpProblem(L.size, cons), cfg)
    if sol.status == SdpStatus.FEASIBLE:
        P = L.unpack(sol.x)["P"]
        return Verdict(Status.DISSIPATIVE, Certificate(P), sol.margins, solution=sol)
    if sol.status == SdpStatus.INFEASIBLE:
        return Verdict(Status.NOT_DISSIPATIVE, margins=sol.margins, solution=sol,
                       notes=[solver_note(sol)])
    return Verdict(Status.INCONCLUSIVE, margins=sol.margins, solution=sol,
                   notes=[solver_note(sol)])


def frequency_response(sys: LtiSystem, omega) -> np.ndarray:
    """``G(e^{i w}) = C (e^{i w} I - A)^{-1} B + D`` for each frequency, shape (K, p, m)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    z = np.exp(1j * omega)
    I = np.eye(sys.n)
    G = np.empty((omega.size, sys.p, sys.m), dtype=complex)
    for i, zi in enumerate(z):
        if sys.n:
            G[i] = sys.C @ np.linalg.solve(zi * I - sys.A, sys.B) + sys.D
        else:
            G[i] = sys.D
    return G


def _require_stable(sys):
    if sys.n and sys.spectral_radius() >= 1.0:
        raise ValueError(f"A is not Schur stable (spectral radius {sys.spectral_radius():.6g})")


def _grid_extremum(f, grid: int, refine: bool, maximize: bool):
    """Extremum of a scalar frequency function over ``[0, pi]``."""
    w = np.linspace(0.0, np.pi, grid)
    vals = np.array([f(wi) for wi in w])
    sgn = 1.0 if maximize else -1.0
    best = float(np.max(sgn * vals))
    if not refine:
        return sgn * best
    # refine around the largest few local extrema
    s = sgn * vals
    peaks = [i for i in range(grid)
             if (i == 0 or s[i] >= s[i - 1]) and (i == grid - 1 or s[i] >= s[i + 1])]
    peaks = sorted(peaks, key=lambda i: -s[i])[:4]
    for i in peaks:
        a, b = w[max(i - 1, 0)], w[min(i + 1, grid - 1)]
        r = minimize_scalar(lambda t: -sgn * f(t), bounds=(a, b), method="bounded",
                            options={"xatol": 1e-12})
        best = max(best, -float(r.fun))
    return sgn * best


def hinf_oracle(sys: LtiSystem, grid: int = 2048, refine: bool = True) -> float:
    """Operator gain (H-infinity norm) from a frequency sweep with local refinement."""
    _require_stable(sys)
    if grid < 2:
        raise ValueError("grid needs at least 2 points")
    sig = lambda w: float(np.linalg.svd(frequency_response(sys, w)[0], compute_uv=False)[0])
    return _grid_extremum(sig, grid, refine, maximize=True)


def passivity_oracle(sys: LtiSystem, grid: int = 2048, refine: bool = True) -> float:
    """Input-feedforward passivity index ``min_w lambda_min(He G(e^{iw}))``."""
    if sys.m != sys.p:
        raise ValueError(f"passivity index needs a square system, got m={sys.m}, p={sys.p}")
    _require_stable(sys)

    def he(w):
        G = frequency_response(sys, w)[0]
        return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0])

    return _grid_extremum(he, grid, refine, maximize=False)


def gain_by_bisection(sys: LtiSystem, lo: float = 0.0, hi: float | None = None,
                      rel_tol: float = 1e-6, cfg: SolverConfig | None = None) -> float:
    """Smallest gamma for which the storage LMI is feasible, by bisection."""
    if hi is None:
        hi = 1.0
        while not model_dissipativity_check(sys, gain_supply(hi, sys.m, sys.p), cfg=cfg).dissipative:
            hi *= 2.0
            if hi > 1e8:
                raise ValueError("no finite gain found")
    check = lambda g: model_dissipativity_check(sys, gain_supply(max(g, 1e-12), sys.m, sys.p), cfg=cfg)
    thr, _, _ = bisect(check, lo, hi, rel_tol=rel_tol)
    return thr


def random_system(n: int, m: int, p: int, margin: float = 0.1, seed=None,
                  feedthrough: bool = True, max_tries: int = 100) -> LtiSystem:
    """Random minimal Schur-stable system, deterministic per seed.

    The spectral radius is drawn uniformly from ``[0.5 (1 - margin), 1 - margin)``.
    """
    if min(n, m, p) < 1:
        raise ValueError("n, m and p must be at least 1")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        r = rng.uniform(0.5 * (1 - margin), 1 - margin)
        A *= r / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
        sys = LtiSystem(A, B, C, D)
        if sys.is_minimal(1e-6):
            return sys
    raise ValueError(f"no minimal system found in {max_tries} draws")


def ls_identify(X, Xp, U):
    """Least-squares fit ``(A B) = X+ (X; U)^+`` with a right inverse."""
    X, Xp, U = as_matrix(X, "X"), as_matrix(Xp, "X+"), as_matrix(U, "U")
    n = X.shape[0]
    AB = Xp @ right_pinv(np.vstack([X, U]))
    return AB[:, :n], AB[:, n:]
