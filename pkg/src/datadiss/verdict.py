"""Verdict and certificate types shared by all verifiers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .sdp import MarginReport, SdpSolution


class Status(str, Enum):
    DISSIPATIVE = "dissipative"
    NOT_DISSIPATIVE = "not-dissipative"
    INCONCLUSIVE = "inconclusive"
    UNKNOWN = "unknown"


@dataclass
class Certificate:
    """Witness of a dissipative verdict.

    Attributes
    ----------
    P : ndarray
        Storage matrix (or its dual in the noisy verifiers).
    tau : float or None
        S-procedure multiplier for the noisy verifiers.
    value : float or None
        Performance value (gain bound or passivity index) if optimized.
    """

    P: np.ndarray
    tau: float | None = None
    value: float | None = None


@dataclass
class Verdict:
    status: Status
    certificate: Certificate | None = None
    margins: MarginReport | None = None
    notes: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    solution: SdpSolution | None = None

    def __post_init__(self):
        if (self.certificate is not None) != (self.status == Status.DISSIPATIVE):
            raise ValueError("a certificate is attached exactly to dissipative verdicts")

    @property
    def dissipative(self) -> bool:
        return self.status == Status.DISSIPATIVE


@dataclass
class Estimate:
    """Result of a performance optimization (gain bound or passivity index)."""

    value: float
    verdict: Verdict
    solution: SdpSolution | None = None

    @property
    def found(self) -> bool:
        return self.verdict.status == Status.DISSIPATIVE and np.isfinite(self.value)


def solver_note(sol: SdpSolution) -> str:
    return f"solver {sol.status.value} after {sol.iterations} steps: {sol.message}".strip()


def bisect(check: Callable[[float], Verdict], lo: float, hi: float,
           rel_tol: float = 1e-5, max_steps: int = 80, increasing: bool = True):
    """Bisect a monotone verdict on ``[lo, hi]``.

    With ``increasing=True`` the property is assumed to hold above a
    threshold (gain bounds); otherwise below it (passivity indices).
    Returns ``(threshold, last_certified_value, steps)``. A midpoint that
    is not certified counts as a fail, so the certified value stays sound
    even when the verdict near the threshold is inconclusive.
    """
    ok = lambda v: v.status == Status.DISSIPATIVE
    best = None
    steps = 0
    while steps < max_steps and hi - lo > rel_tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        v = check(mid)
        steps += 1
        if ok(v):
            best = mid
            if increasing:
                hi = mid
            else:
                lo = mid
        elif increasing:
            lo = mid
        else:
            hi = mid
    thr = 0.5 * (lo + hi)
    return thr, best, steps
