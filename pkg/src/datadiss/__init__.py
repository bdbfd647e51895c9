"""Dissipativity verification of linear time-invariant systems from measured data.

The top-level namespace re-exports the most used entry points; the
submodules hold the full API.
"""

from .data import (NoiseBoundQuadratic, StateDataMatrices, Trajectory, build_state_data,
                   hankel, is_persistently_exciting, norm_bound_noise_set, pe_order)
from .lti import LtiSystem, hinf_oracle, model_dissipativity_check, passivity_oracle, random_system, simulate
from .sdp import SdpProblem, SdpStatus, SolverConfig, solve_feasibility, solve_min_linear
from .supply import SupplyRate, gain_supply, invert, passivity_supply
from .verdict import Certificate, Estimate, Status, Verdict
from .verify_io import (build_extended_data, build_extended_system, optimize_gain_io_robust,
                        optimize_passivity_io_robust, verify_io_noisefree, verify_io_robust)
from .verify_state import (optimize_gain_robust, optimize_passivity_robust, sigma_xu_quadratic,
                           verify_noisefree, verify_robust)

__all__ = [
    "Certificate", "Estimate", "LtiSystem", "NoiseBoundQuadratic", "SdpProblem", "SdpStatus",
    "SolverConfig", "StateDataMatrices", "Status", "SupplyRate", "Trajectory", "Verdict",
    "build_extended_data", "build_extended_system", "build_state_data", "gain_supply",
    "hankel", "hinf_oracle", "invert", "is_persistently_exciting", "model_dissipativity_check",
    "norm_bound_noise_set", "optimize_gain_io_robust", "optimize_gain_robust",
    "optimize_passivity_io_robust", "optimize_passivity_robust", "passivity_oracle",
    "passivity_supply", "pe_order", "random_system", "sigma_xu_quadratic", "simulate",
    "solve_feasibility", "solve_min_linear", "verify_io_noisefree", "verify_io_robust",
    "verify_noisefree", "verify_robust",
]

__version__ = "0.1.0"
