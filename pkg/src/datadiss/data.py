"""Measured trajectories, data matrices, excitation checks and noise bounds.

Sequences are stored time-major: ``u`` has shape ``(N, m)``, ``x`` has
shape ``(N + 1, n)`` and ``y`` has shape ``(N, p)``. Data matrices follow
the column convention, e.g. ``X`` is ``n x N`` with columns ``x_0 .. x_{N-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import DEF_TOL, RANK_TOL, as_matrix, lambda_max, lambda_min, psd_tol, rank_with_tol, sym


def _seq(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 1-D or 2-D sequence, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has NaN or Inf entries")
    return a


@dataclass(frozen=True)
class Trajectory:
    """One measured experiment.

    Parameters
    ----------
    u : array_like, shape (N, m)
    x : array_like, shape (N + 1, n), optional
    y : array_like, shape (N, p), optional
    dt : float, optional
        Sample period in seconds; metadata only.
    """

    u: np.ndarray
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    dt: float | None = None

    def __post_init__(self):
        u = _seq(self.u, "u")
        object.__setattr__(self, "u", u)
        if self.x is None and self.y is None:
            raise ValueError("a trajectory needs states, outputs or both")
        N = u.shape[0]
        if self.x is not None:
            x = _seq(self.x, "x")
            if x.shape[0] != N + 1:
                raise ValueError(f"x must have N+1 = {N + 1} samples, got {x.shape[0]}")
            object.__setattr__(self, "x", x)
        if self.y is not None:
            y = _seq(self.y, "y")
            if y.shape[0] != N:
                raise ValueError(f"y must have N = {N} samples, got {y.shape[0]}")
            object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def n(self) -> int | None:
        return None if self.x is None else self.x.shape[1]

    @property
    def p(self) -> int | None:
        return None if self.y is None else self.y.shape[1]


@dataclass(frozen=True)
class StateDataMatrices:
    X: np.ndarray
    Xp: np.ndarray
    U: np.ndarray
    Y: np.ndarray | None = None

    def __post_init__(self):
        N = self.X.shape[1]
        for name in ("Xp", "U") + (("Y",) if self.Y is not None else ()):
            if getattr(self, name).shape[1] != N:
                raise ValueError(f"{name} has {getattr(self, name).shape[1]} columns, X has {N}")
        if self.Xp.shape[0] != self.X.shape[0]:
            raise ValueError("X and Xp must have the same number of rows")

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def Z(self) -> np.ndarray:
        """Stacked ``(X; U)``."""
        return np.vstack([self.X, self.U])


class NoiseTarget(str, Enum):
    PROCESS_STATE = "process-state"
    PROCESS_OUTPUT = "process-output"


@dataclass(frozen=True)
class NoiseBoundQuadratic:
    """Quadratic bound on a stacked noise matrix ``W`` (width x span).

    ``W`` is admissible iff ``(W^T; I)^T [[Qn, Sn], [Sn^T, Rn]] (W^T; I) >= 0``
    with ``Qn`` span x span, ``Sn`` span x width and ``Rn`` width x width.
    """

    Qn: np.ndarray
    Sn: np.ndarray
    Rn: np.ndarray
    target: NoiseTarget = NoiseTarget.PROCESS_STATE

    def __post_init__(self):
        Qn = sym(as_matrix(self.Qn, "Qn"))
        Rn = sym(as_matrix(self.Rn, "Rn"))
        Sn = as_matrix(self.Sn, "Sn")
        if Sn.shape != (Qn.shape[0], Rn.shape[0]):
            raise ValueError(f"Sn must be {Qn.shape[0]}x{Rn.shape[0]}, got {Sn.shape}")
        if not lambda_max(Qn) < -psd_tol(Qn):
            raise ValueError("Qn must be negative definite")
        object.__setattr__(self, "Qn", Qn)
        object.__setattr__(self, "Rn", Rn)
        object.__setattr__(self, "Sn", Sn)
        object.__setattr__(self, "target", NoiseTarget(self.target))

    @property
    def span(self) -> int:
        return self.Qn.shape[0]

    @property
    def width(self) -> int:
        return self.Rn.shape[0]


def hankel(u, L: int) -> np.ndarray:
    """Block Hankel matrix of depth `L` from a time-major sequence.

    Block ``(i, j)`` is ``u_{i+j}``; the result is ``(m L) x (N - L + 1)``.
    """
    u = _seq(u, "u")
    N, m = u.shape
    if L < 1 or L > N:
        raise ValueError(f"Hankel depth must be in [1, N={N}], got {L}")
    cols = N - L + 1
    H = np.empty((m * L, cols))
    for i in range(L):
        H[i * m:(i + 1) * m] = u[i:i + cols].T
    return H


def pe_min_length(m: int, L: int) -> int:
    """Smallest N for which PE of order L is possible: ``N >= (m + 1) L - 1``."""
    return (m + 1) * L - 1


def is_persistently_exciting(u, L: int, rel_tol: float = RANK_TOL) -> bool:
    """True iff the depth-`L` Hankel matrix of `u` has full row rank ``m L``."""
    u = _seq(u, "u")
    N, m = u.shape
    if L < 1:
        raise ValueError("excitation order must be at least 1")
    if N < pe_min_length(m, L):
        return False
    return rank_with_tol(hankel(u, L), rel_tol) == m * L


def pe_order(u, rel_tol: float = RANK_TOL) -> int:
    """Largest L for which `u` is persistently exciting (0 if none)."""
    u = _seq(u, "u")
    L = 0
    while L + 1 <= u.shape[0] and is_persistently_exciting(u, L + 1, rel_tol):
        L += 1
    return L


def check_rank_condition(d: StateDataMatrices, rel_tol: float = RANK_TOL) -> bool:
    """True iff ``rank (X; U) = n + m``."""
    k = d.n + d.m
    if d.N < k:
        return False
    return rank_with_tol(d.Z, rel_tol) == k


def build_state_data(t: Trajectory) -> StateDataMatrices:
    if t.x is None:
        raise ValueError("state data matrices need measured states")
    return StateDataMatrices(X=t.x[:-1].T.copy(), Xp=t.x[1:].T.copy(), U=t.u.T.copy(),
                             Y=None if t.y is None else t.y.T.copy())


def norm_bound_noise_set(wbar: float, span: int, width: int,
                         target=NoiseTarget.PROCESS_STATE) -> NoiseBoundQuadratic:
    """Energy bound ``W W^T <= wbar^2 span I`` in quadratic form.

    This is implied by the per-sample bound ``|w_k| <= wbar``.
    """
    if not wbar >= 0:
        raise ValueError(f"noise bound must be nonnegative, got {wbar}")
    return NoiseBoundQuadratic(Qn=-np.eye(span), Sn=np.zeros((span, width)),
                               Rn=wbar**2 * span * np.eye(width), target=target)


def membership_form(nb: NoiseBoundQuadratic, W) -> np.ndarray:
    W = as_matrix(W, "W")
    if W.shape != (nb.width, nb.span):
        raise ValueError(f"W must be {nb.width}x{nb.span}, got {W.shape}")
    return sym(W @ nb.Qn @ W.T + W @ nb.Sn + nb.Sn.T @ W.T + nb.Rn)


def membership(nb: NoiseBoundQuadratic, W, tol: float = DEF_TOL) -> bool:
    """True iff `W` lies in the noise set (up to ``tol (1 + |form|)``)."""
    F = membership_form(nb, W)
    return lambda_min(F) >= -psd_tol(F, tol)


def sample_ball(rng, N: int, dim: int, radius: float) -> np.ndarray:
    """`N` samples uniform in the Euclidean ball of `radius` in R^dim, shape (N, dim)."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    v = rng.standard_normal((N, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    return v * radius * rng.random((N, 1)) ** (1.0 / dim)
