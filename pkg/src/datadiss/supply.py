"""Quadratic supply rates and their partitioned inverses.

A supply rate on input ``u`` (length m) and output ``y`` (length p) is

    s(u, y) = (u; y)^T [[R, S^T], [S, Q]] (u; y)

with ``Q`` p x p, ``S`` p x m and ``R`` m x m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, sym

#: Largest condition number accepted by :func:`invert`.
COND_CAP = 1e12


def _check_sym(M, name, tol=1e-10):
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got {M.shape}")
    if np.linalg.norm(M - M.T) > tol * (1.0 + np.linalg.norm(M)):
        raise ValueError(f"{name} must be symmetric")
    return sym(M)


@dataclass(frozen=True)
class SupplyRate:
    """Partition ``Pi = [[R, S^T], [S, Q]]``.

    Attributes
    ----------
    Q : ndarray, shape (p, p)
    S : ndarray, shape (p, m)
    R : ndarray, shape (m, m)
    name : str
        Template label used in messages.
    """

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        Q = _check_sym(as_matrix(self.Q, "Q"), "Q")
        R = _check_sym(as_matrix(self.R, "R"), "R")
        S = as_matrix(self.S, "S")
        if S.shape != (Q.shape[0], R.shape[0]):
            raise ValueError(
                f"S must be {Q.shape[0]}x{R.shape[0]} to match Q and R, got {S.shape}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    def matrix(self) -> np.ndarray:
        """The full ``(m+p) x (m+p)`` matrix Pi."""
        return np.block([[self.R, self.S.T], [self.S, self.Q]])

    @classmethod
    def from_matrix(cls, Pi, m: int, name: str = "custom") -> "SupplyRate":
        Pi = as_matrix(Pi, "Pi")
        return cls(Q=Pi[m:, m:], S=Pi[m:, :m], R=Pi[:m, :m], name=name)


@dataclass(frozen=True)
class InverseSupplyRate:
    """Blocks of ``Pi^{-1} = [[Rt, St^T], [St, Qt]]``."""

    Qt: np.ndarray
    St: np.ndarray
    Rt: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        Qt = _check_sym(as_matrix(self.Qt, "Qt"), "Qt")
        Rt = _check_sym(as_matrix(self.Rt, "Rt"), "Rt")
        St = as_matrix(self.St, "St")
        if St.shape != (Qt.shape[0], Rt.shape[0]):
            raise ValueError(f"St must be {Qt.shape[0]}x{Rt.shape[0]}, got {St.shape}")
        object.__setattr__(self, "Qt", Qt)
        object.__setattr__(self, "Rt", Rt)
        object.__setattr__(self, "St", St)

    @property
    def m(self) -> int:
        return self.Rt.shape[0]

    @property
    def p(self) -> int:
        return self.Qt.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.Rt, self.St.T], [self.St, self.Qt]])

    def as_supply(self) -> SupplyRate:
        """Reinterpret the inverse blocks as a supply rate (for involution checks)."""
        return SupplyRate(self.Qt, self.St, self.Rt, name=f"inv({self.name})")


def gain_supply(gamma: float, m: int, p: int) -> SupplyRate:
    """Operator-gain supply ``gamma^2 |u|^2 - |y|^2``."""
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return SupplyRate(Q=-np.eye(p), S=np.zeros((p, m)), R=gamma**2 * np.eye(m),
                      name=f"gain(gamma={gamma:g})")


def passivity_supply(rho: float, m: int, p: int | None = None) -> SupplyRate:
    """Input-feedforward passivity supply ``u^T y - rho |u|^2``.

    Raises
    ------
    ValueError
        If ``p`` is given and differs from ``m``.
    """
    if p is not None and p != m:
        raise ValueError(f"passivity supply needs a square channel, got m={m}, p={p}")
    I = np.eye(m)
    return SupplyRate(Q=np.zeros((m, m)), S=0.5 * I, R=-rho * I,
                      name=f"passivity(rho={rho:g})")


def evaluate(Pi: SupplyRate, u, y) -> float:
    """Value of the supply rate at one input/output pair."""
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    if u.size != Pi.m or y.size != Pi.p:
        raise ValueError(f"expected u of length {Pi.m} and y of length {Pi.p}")
    return float(u @ Pi.R @ u + 2.0 * y @ Pi.S @ u + y @ Pi.Q @ y)


def invert(Pi: SupplyRate, cond_cap: float = COND_CAP) -> InverseSupplyRate:
    """Partitioned inverse of Pi.

    Raises
    ------
    ValueError
        If Pi is singular or its condition number exceeds `cond_cap`.
    """
    M = Pi.matrix()
    c = np.linalg.cond(M)
    if not np.isfinite(c) or c > cond_cap:
        raise ValueError(
            f"supply rate {Pi.name} is singular or ill-conditioned (cond {c:.3g}); "
            "its inverse is needed by the noisy verifiers")
    Mi = sym(np.linalg.inv(M))
    m = Pi.m
    return InverseSupplyRate(Qt=Mi[m:, m:], St=Mi[m:, :m], Rt=Mi[:m, :m],
                             name=Pi.name)


def inverse_gain(mu: float, m: int, p: int) -> InverseSupplyRate:
    """Inverse of the gain supply written with ``mu = 1/gamma^2``."""
    return InverseSupplyRate(Qt=-np.eye(p), St=np.zeros((p, m)), Rt=mu * np.eye(m),
                             name=f"gain(mu={mu:g})")


def inverse_passivity(rho: float, m: int) -> InverseSupplyRate:
    """Inverse of the passivity supply: ``Rt = 0``, ``St = 2I``, ``Qt = 4 rho I``."""
    I = np.eye(m)
    return InverseSupplyRate(Qt=4.0 * rho * I, St=2.0 * I, Rt=np.zeros((m, m)),
                             name=f"passivity(rho={rho:g})")
