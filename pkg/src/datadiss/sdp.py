"""Small dense LMI solver.

Problems have the form ``minimize c^T x`` subject to ``F_j(x) = F_j0 +
sum_i x_i F_ji >= 0`` for a handful of symmetric blocks. The solver is an
infeasible-start primal-dual interior-point method (HKM search direction
with a Mehrotra predictor-corrector).
Feasibility is decided by a phase-I problem ``maximize t`` subject to
``F_j(x) >= t I``; the verdict rests on the sign of that optimum.

Each block is normalized by its own coefficient scale before solving, so
``strict_eps``, ``infeas_tol`` and reported margins are scale-relative.
All decision vectors are further confined to the ball ``||x|| <= x_bound``
so that every problem is bounded; this is never active in practice but
means "infeasible" strictly reads "infeasible inside that ball".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .numerics import sym, sym_basis

log = logging.getLogger(__name__)


class SdpStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INACCURATE = "inaccurate"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LmiConstraint:
    """Affine symmetric map ``F0 + sum_i x_i Fi[i]`` required to be PSD.

    With ``strict=True`` the block must satisfy ``F(x) >= eps * scale * I``
    where ``eps`` comes from :class:`SolverConfig`.
    """

    F0: np.ndarray
    Fi: np.ndarray
    strict: bool = False
    name: str = ""

    def __post_init__(self):
        F0 = sym(np.atleast_2d(np.asarray(self.F0, dtype=float)))
        Fi = np.asarray(self.Fi, dtype=float)
        if Fi.ndim == 2 and F0.shape == (1, 1) and Fi.shape[1] != 1:
            Fi = Fi.reshape(-1, 1, 1)
        if Fi.ndim != 3 or Fi.shape[1:] != F0.shape:
            raise ValueError(
                f"LMI {self.name!r}: coefficient blocks {Fi.shape} do not match "
                f"constant block {F0.shape}")
        if F0.shape[0] != F0.shape[1]:
            raise ValueError(f"LMI {self.name!r}: constant block is not square")
        Fi = 0.5 * (Fi + Fi.transpose(0, 2, 1))
        object.__setattr__(self, "F0", F0)
        object.__setattr__(self, "Fi", Fi)

    @property
    def dim(self) -> int:
        return self.F0.shape[0]

    @property
    def n_vars(self) -> int:
        return self.Fi.shape[0]

    def evaluate(self, x) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(x, dtype=float), self.Fi, axes=1)

    def scale(self) -> float:
        norms = [np.linalg.norm(self.F0)]
        if self.n_vars:
            norms.append(np.max(np.linalg.norm(self.Fi, axis=(1, 2))))
        s = max(norms)
        return s if s > 0 else 1.0


@dataclass(frozen=True)
class SdpProblem:
    n_vars: int
    constraints: tuple
    c: np.ndarray | None = None
    var_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        c = np.zeros(self.n_vars) if self.c is None else np.asarray(self.c, float).ravel()
        if c.size != self.n_vars:
            raise ValueError(f"objective has length {c.size}, expected {self.n_vars}")
        object.__setattr__(self, "c", c)
        for con in self.constraints:
            if con.n_vars != self.n_vars:
                raise ValueError(
                    f"LMI {con.name!r} has {con.n_vars} coefficient blocks, "
                    f"problem has {self.n_vars} variables")


@dataclass
class SolverConfig:
    feas_tol: float = 1e-7
    strict_eps: float = 1e-6
    max_iter: int = 200
    infeas_tol: float = 1e-6
    x_bound: float = 1e8
    gap_tol: float = 1e-9
    objective_floor: float = -1e12

    def __post_init__(self):
        for k in ("feas_tol", "strict_eps", "max_iter", "infeas_tol", "x_bound", "gap_tol"):
            if not getattr(self, k) > 0:
                raise ValueError(f"SolverConfig.{k} must be positive")


@dataclass
class MarginReport:
    """Independent recomputation of ``lambda_min`` for every block.

    ``relative`` is ``lambda_min / scale`` minus the strictness margin, so a
    value >= 0 means the constraint is met as posed.
    """

    names: list
    raw: np.ndarray
    relative: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.min(self.relative)) if self.relative.size else np.inf

    def ok(self, tol: float) -> bool:
        return self.worst >= -tol


@dataclass
class SdpSolution:
    status: SdpStatus
    x: np.ndarray
    objective: float
    worst_margin: float
    margins: MarginReport | None = None
    phase1_t: float = np.nan
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (SdpStatus.OPTIMAL, SdpStatus.FEASIBLE)


class VariableLayout:
    """Named packing of symmetric-matrix and scalar decision variables."""

    def __init__(self):
        self._entries = []
        self.size = 0

    def sym(self, name: str, n: int) -> "VariableLayout":
        k = n * (n + 1) // 2
        self._entries.append((name, "sym", n, self.size, k))
        self.size += k
        return self

    def scalar(self, name: str) -> "VariableLayout":
        self._entries.append((name, "scalar", 1, self.size, 1))
        self.size += 1
        return self

    @property
    def names(self) -> tuple:
        out = []
        for name, kind, n, _, k in self._entries:
            if kind == "sym":
                out += [f"{name}[{i},{j}]" for i in range(n) for j in range(i, n)]
            else:
                out.append(name)
        return tuple(out)

    def index(self, name: str) -> slice:
        for nm, _, _, off, k in self._entries:
            if nm == name:
                return slice(off, off + k)
        raise KeyError(name)

    def unpack(self, x) -> dict:
        x = np.asarray(x, dtype=float)
        out = {}
        for name, kind, n, off, k in self._entries:
            if kind == "sym":
                P = np.zeros((n, n))
                P[np.triu_indices(n)] = x[off:off + k]
                out[name] = P + np.triu(P, 1).T
            else:
                out[name] = float(x[off])
        return out

    def _basis(self):
        for name, kind, n, off, k in self._entries:
            if kind == "sym":
                for E in sym_basis(n):
                    yield name, E
            else:
                yield name, 1.0

    def zeros(self) -> dict:
        return self.unpack(np.zeros(self.size))

    def affine_lmi(self, fn: Callable[..., np.ndarray], strict: bool = False,
                   name: str = "") -> LmiConstraint:
        """Build an :class:`LmiConstraint` from an affine matrix function.

        `fn` is called with the variables as keyword arguments; its value at
        zero gives the constant block and unit perturbations give the
        coefficients.
        """
        zero = self.zeros()
        F0 = np.atleast_2d(np.asarray(fn(**zero), dtype=float))
        Fi = np.empty((self.size,) + F0.shape)
        for i, (vname, val) in enumerate(self._basis()):
            args = dict(zero)
            args[vname] = val
            Fi[i] = np.atleast_2d(fn(**args)) - F0
        return LmiConstraint(F0, Fi, strict=strict, name=name)

    def psd(self, name: str, strict: bool = False) -> LmiConstraint:
        """Constraint ``V >= 0`` (or ``> 0``) on one variable of the layout."""
        return self.affine_lmi(lambda **v: np.atleast_2d(v[name]), strict=strict,
                               name=f"{name} >= 0" if not strict else f"{name} > 0")


# ---------------------------------------------------------------- interior-point core

_RES_TOL = 1e-9
# stop on stagnation once all errors are below this
_REDUCED_TOL = 1e-6
# accept the best iterate of a stalled run if its errors are below this;
# any accepted point still has to pass the independent margin check
_ACCEPT_TOL = 1e-5
_STAGNATION = 8


class _Cone:
    """Dual-form data: maximize ``b^T y`` s.t. ``S_j = C_j - sum_i y_i A_ji >= 0``."""

    def __init__(self, Cs, As):
        keep = [j for j, C in enumerate(Cs) if C.shape[0]]
        self.Cs = [Cs[j] for j in keep]
        self.As = [As[j] for j in keep]
        self.n = sum(C.shape[0] for C in self.Cs)

    def slack(self, y):
        return [C - np.tensordot(y, A, axes=1) for C, A in zip(self.Cs, self.As)]

    def adj(self, Xs):
        return sum(np.einsum("kij,ij->k", A, X) for A, X in zip(self.As, Xs))

    def gram(self):
        return sum(np.einsum("iab,kab->ik", A, A) for A in self.As)


def _ball_block(k, nb, bound):
    """``[[I, x/B], [x^T/B, 1]] >= 0``, i.e. ``||x[:nb]|| <= B``."""
    C = np.eye(nb + 1)
    A = np.zeros((k, nb + 1, nb + 1))
    for i in range(nb):
        A[i, i, nb] = A[i, nb, i] = -1.0 / bound
    return C, A


def _max_step(X, dX) -> float:
    L = np.linalg.cholesky(X)
    Li = solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lmin = float(np.linalg.eigvalsh(Li @ dX @ Li.T)[0])
    return np.inf if lmin >= 0 else -1.0 / lmin


def _scaled_solver(M):
    # diagonal scaling keeps badly scaled variables (large tau) solvable
    dg = np.sqrt(np.maximum(np.abs(np.diag(M)), 1e-300))
    Ms = M / np.outer(dg, dg)
    try:
        L = np.linalg.cholesky(Ms)
        return lambda r: solve_triangular(
            L.T, solve_triangular(L, r / dg, lower=True), lower=False) / dg
    except np.linalg.LinAlgError:
        return lambda r: np.linalg.lstsq(Ms, r / dg, rcond=None)[0] / dg


def _interior_point(cone: _Cone, b, cfg: SolverConfig, watch=None):
    """Infeasible-start primal-dual path following (HKM direction, Mehrotra
    predictor-corrector).

    `watch(y, X)` may return a stop reason. Returns ``(y, X, reason, it)``
    with reason ``"converged"``, ``"reduced"`` (best iterate after stagnation,
    errors below ``_ACCEPT_TOL``), ``"budget"``, ``"stalled"`` or a watch
    reason.
    """
    K = b.size
    dims = [C.shape[0] for C in cone.Cs]
    bn = 1.0 + np.linalg.norm(b)
    Cn = 1.0 + np.sqrt(sum(np.sum(C * C) for C in cone.Cs))
    X, S = [], []
    for C, A, d in zip(cone.Cs, cone.As, dims):
        an = np.linalg.norm(A, axis=(1, 2))
        xi = max(10.0, np.sqrt(d), d * np.max((1.0 + np.abs(b)) / (1.0 + an)))
        eta = max(10.0, np.sqrt(d), np.linalg.norm(C), np.max(an))
        X.append(xi * np.eye(d))
        S.append(eta * np.eye(d))
    y = np.zeros(K)
    small = 0
    best = (np.inf, y, X, 0)

    def fallback(reason, it):
        if best[0] <= _ACCEPT_TOL:
            return best[1], best[2], "reduced", it
        return y, X, reason, it
    for it in range(cfg.max_iter + 1):
        if watch is not None:
            reason = watch(y, X)
            if reason:
                return y, X, reason, it
        Rd = [Sy - Sj for Sy, Sj in zip(cone.slack(y), S)]
        rp = b - cone.adj(X)
        mu = sum(np.sum(Xj * Sj) for Xj, Sj in zip(X, S)) / cone.n
        pobj = sum(np.sum(C * Xj) for C, Xj in zip(cone.Cs, X))
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / bn
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rd)) / Cn
        if gap <= cfg.gap_tol and pinf <= _RES_TOL and dinf <= _RES_TOL:
            return y, X, "converged", it
        # the objective gap carries rp^T y, which is large when y is; the
        # complementarity gap does not, so the fallback ranks by the smaller
        cgap = mu * cone.n / (1.0 + abs(pobj) + abs(dobj))
        err = max(min(gap, cgap), pinf, dinf)
        if err < 0.5 * best[0]:
            best = (err, y, X, it)
        elif best[0] <= _REDUCED_TOL and it - best[3] >= _STAGNATION:
            return fallback("stalled", it)
        if it == cfg.max_iter:
            break
        try:
            Si = [np.linalg.inv(np.linalg.cholesky(Sj)) for Sj in S]
            Si = [L.T @ L for L in Si]
        except np.linalg.LinAlgError:
            return fallback("stalled", it)
        M = np.zeros((K, K))
        for A, Xj, Sij in zip(cone.As, X, Si):
            M += np.einsum("iab,kab->ik", A, Xj @ A @ Sij)
        solve = _scaled_solver(0.5 * (M + M.T))

        def direction(sig, corr):
            H = [sig * mu * Sij - Xj - Xj @ R @ Sij
                 for Xj, Sij, R in zip(X, Si, Rd)]
            if corr is not None:
                H = [h - c for h, c in zip(H, corr)]
            dy = solve(rp - cone.adj(H))
            dS = [R - np.tensordot(dy, A, axes=1) for R, A in zip(Rd, cone.As)]
            dX = [sym(h + Xj @ (R - ds) @ Sij)
                  for h, Xj, R, ds, Sij in zip(H, X, Rd, dS, Si)]
            return dy, dX, [sym(ds) for ds in dS]

        def steps(dX, dS):
            ap = min([1.0] + [_max_step(Xj, d) for Xj, d in zip(X, dX)])
            ad = min([1.0] + [_max_step(Sj, d) for Sj, d in zip(S, dS)])
            return ap, ad

        try:
            dy, dX, dS = direction(0.0, None)
            ap, ad = steps(dX, dS)
            mu_aff = sum(np.sum((Xj + ap * a) * (Sj + ad * c))
                         for Xj, Sj, a, c in zip(X, S, dX, dS)) / cone.n
            sig = min(1.0, max(0.0, mu_aff / mu)) ** 3
            corr = [a @ c @ Sij for a, c, Sij in zip(dX, dS, Si)]
            gam = 0.9 + 0.09 * min(ap, ad)
            dy, dX, dS = direction(sig, corr)
            ap, ad = steps(dX, dS)
        except np.linalg.LinAlgError:
            return fallback("stalled", it)
        ap, ad = min(1.0, gam * ap), min(1.0, gam * ad)
        if not (np.isfinite(ap) and np.isfinite(ad) and np.all(np.isfinite(dy))):
            return fallback("stalled", it)
        X = [Xj + ap * a for Xj, a in zip(X, dX)]
        S = [Sj + ad * c for Sj, c in zip(S, dS)]
        y = y + ad * dy
        small = small + 1 if max(ap, ad) < 1e-8 else 0
        if small >= 3:
            return fallback("stalled", it + 1)
    return fallback("budget", cfg.max_iter)


def _normalized(p: SdpProblem, cfg: SolverConfig):
    G0s, Gis, scales = [], [], []
    for con in p.constraints:
        s = con.scale()
        G0 = con.F0 / s
        if con.strict:
            G0 = G0 - cfg.strict_eps * np.eye(con.dim)
        G0s.append(G0)
        Gis.append(con.Fi / s)
        scales.append(s)
    return G0s, Gis, scales


# ---------------------------------------------------------------- public API

def verify_solution(p: SdpProblem, x, cfg: SolverConfig | None = None) -> MarginReport:
    """Recompute every block's minimum eigenvalue at `x`."""
    from .numerics import lambda_min  # local to keep the call explicit

    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p.n_vars:
        raise ValueError(f"x has length {x.size}, expected {p.n_vars}")
    names, raw, rel = [], [], []
    for con in p.constraints:
        lm = lambda_min(con.evaluate(x)) if con.dim else np.inf
        names.append(con.name)
        raw.append(lm)
        rel.append(lm / con.scale() - (cfg.strict_eps if con.strict else 0.0))
    return MarginReport(names, np.array(raw), np.array(rel))


def _finish(p, x, status, cfg, objective=None, **kw) -> SdpSolution:
    rep = verify_solution(p, x, cfg)
    obj = float(p.c @ x) if objective is None else objective
    if status in (SdpStatus.OPTIMAL, SdpStatus.FEASIBLE) and not rep.ok(cfg.feas_tol):
        log.warning("witness failed independent margin check (%.3e)", rep.worst)
        kw["message"] = (kw.get("message", "") + " witness failed margin check").strip()
        status = SdpStatus.INACCURATE
    return SdpSolution(status, x, obj, rep.worst, rep, **kw)


def _true_margin(G0s, Gis, x) -> float:
    return min(float(np.linalg.eigvalsh(G0 + np.tensordot(x, Gi, 1))[0])
               for G0, Gi in zip(G0s, Gis) if G0.shape[0])


def _dual_bound(cone: _Cone, b, X, gram_solve) -> float:
    """Certified upper bound on ``max b^T y`` from a nearly feasible primal `X`.

    `X` is projected onto ``A(X) = b``; if the projection stays PSD, weak
    duality gives ``b^T y <= <C, X>`` for every feasible `y`.
    """
    z = gram_solve(b - cone.adj(X))
    Xc = [Xj + np.tensordot(z, A, axes=1) for Xj, A in zip(X, cone.As)]
    if any(np.linalg.eigvalsh(Xj)[0] < 0 for Xj in Xc):
        return np.inf
    return float(sum(np.sum(C * Xj) for C, Xj in zip(cone.Cs, Xc)))


def solve_feasibility(p: SdpProblem, cfg: SolverConfig | None = None,
                      x0=None) -> SdpSolution:
    """Decide feasibility of the LMI system via phase I.

    Returns ``feasible`` once some iterate satisfies every block with
    relative margin above ``infeas_tol``, ``infeasible`` when a weak-duality
    bound from the primal iterate shows ``t* < -infeas_tol``, and ``inaccurate`` if neither
    is established within the iteration budget. `x0` is accepted for
    interface symmetry; a strictly feasible `x0` is returned directly.
    """
    cfg = cfg or SolverConfig()
    k = p.n_vars
    G0s, Gis, _ = _normalized(p, cfg)
    if not G0s or all(G.shape[0] == 0 for G in G0s):
        return _finish(p, np.zeros(k), SdpStatus.FEASIBLE, cfg, phase1_t=np.inf)
    thr = cfg.infeas_tol
    if x0 is not None:
        x0 = np.asarray(x0, float).ravel()
        t0 = _true_margin(G0s, Gis, x0)
        if t0 > thr:
            return _finish(p, x0, SdpStatus.FEASIBLE, cfg, phase1_t=t0)
    # unknowns (x, t): F_j(x) - t I >= 0, the cap t <= 1 and the ball on x
    Cs = list(G0s) + [np.ones((1, 1))]
    As = [np.concatenate([-Gi, np.eye(G0.shape[0])[None]], axis=0)
          for G0, Gi in zip(G0s, Gis)]
    cap = np.zeros((k + 1, 1, 1))
    cap[-1] = 1.0
    As.append(cap)
    Cb, Ab = _ball_block(k + 1, k, cfg.x_bound)
    Cs.append(Cb)
    As.append(Ab)
    cone = _Cone(Cs, As)
    b = np.zeros(k + 1)
    b[-1] = 1.0
    gram_solve = _scaled_solver(cone.gram())
    best = {"t": -np.inf, "ub": np.inf, "x": np.zeros(k)}

    def watch(y, X):
        x = y[:k]
        t = _true_margin(G0s, Gis, x)
        if t > best["t"]:
            best["t"], best["x"] = t, x
        if t > thr:
            return "feasible"
        pobj = sum(np.sum(C * Xj) for C, Xj in zip(cone.Cs, X))
        if pobj < -thr:
            ub = _dual_bound(cone, b, X, gram_solve)
            if not np.isfinite(ub):
                # residual-corrected weak duality at the current dual scale
                ub = pobj + np.linalg.norm(b - cone.adj(X)) * (1.0 + np.linalg.norm(y))
            best["ub"] = min(best["ub"], ub)
            if best["ub"] < -thr:
                return "infeasible"
        return None

    y, X, reason, it = _interior_point(cone, b, cfg, watch)
    if reason == "feasible":
        return _finish(p, y[:k], SdpStatus.FEASIBLE, cfg, phase1_t=best["t"], iterations=it)
    if reason == "infeasible":
        return _finish(p, best["x"], SdpStatus.INFEASIBLE, cfg, phase1_t=best["ub"],
                       iterations=it, message=f"phase-I optimum below {best['ub']:.3e}")
    x = best["x"]
    if np.linalg.norm(y[:k]) > 0.99 * cfg.x_bound:
        msg = "phase-I iterate reached the variable bound"
    else:
        msg = f"phase-I undecided ({reason}): t = {best['t']:.3e}, bound {best['ub']:.3e}"
    return _finish(p, x, SdpStatus.INACCURATE, cfg, phase1_t=best["t"], iterations=it,
                   message=msg)


def solve_min_linear(p: SdpProblem, cfg: SolverConfig | None = None,
                     x0=None) -> SdpSolution:
    """Minimize ``c^T x`` over the LMI system.

    Feasibility is settled by phase I first, so an infeasible system is
    reported as such rather than as a failed optimization.
    """
    cfg = cfg or SolverConfig()
    k = p.n_vars
    ph1 = solve_feasibility(p, cfg, x0=x0)
    if ph1.status != SdpStatus.FEASIBLE:
        return SdpSolution(ph1.status, ph1.x, np.nan, ph1.worst_margin, ph1.margins,
                           ph1.phase1_t, ph1.iterations,
                           "no strictly feasible point: " + ph1.message)
    c = p.c
    if np.linalg.norm(c) == 0:
        return _finish(p, ph1.x, SdpStatus.OPTIMAL, cfg, phase1_t=ph1.phase1_t,
                       iterations=ph1.iterations)
    G0s, Gis, _ = _normalized(p, cfg)
    Cb, Ab = _ball_block(k, k, cfg.x_bound)
    cone = _Cone(list(G0s) + [Cb], [-Gi for Gi in Gis] + [Ab])
    y, X, reason, it = _interior_point(cone, -c, cfg)
    kw = dict(phase1_t=ph1.phase1_t, iterations=ph1.iterations + it)
    if float(c @ y) < cfg.objective_floor or np.linalg.norm(y) > 0.99 * cfg.x_bound:
        return _finish(p, y, SdpStatus.UNBOUNDED, cfg,
                       message="objective decreased past the floor or variable bound", **kw)
    if reason == "converged":
        return _finish(p, y, SdpStatus.OPTIMAL, cfg,
                       message=f"relative gap <= {cfg.gap_tol:.1e}", **kw)
    if reason == "reduced":
        return _finish(p, y, SdpStatus.OPTIMAL, cfg,
                       message=f"reduced accuracy: errors <= {_ACCEPT_TOL:.0e}", **kw)
    return _finish(p, y, SdpStatus.INACCURATE, cfg,
                   message=f"interior point stopped ({reason})", **kw)
