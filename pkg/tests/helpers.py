"""Shared fixtures-as-functions for the test suite."""

import numpy as np

from datadiss.data import build_state_data, norm_bound_noise_set, sample_ball
from datadiss.lti import LtiSystem, random_system, simulate
from datadiss.verify_io import (build_extended_data, build_extended_system, io_noise_set,
                                sigma_uy_quadratic, simulate_difference)
from datadiss.verify_state import sigma_xu_quadratic

# scalar reference system: gain 2 (at z = 1), passivity index -2/3 (at z = -1)
S1 = LtiSystem(0.5, 1.0, 1.0, 0.0)
S1_GAIN = 2.0
S1_RHO = -2.0 / 3.0


def state_experiment(sys, N, wbar, seed, Bw=None):
    """Uniform inputs and initial state, process noise uniform in the wbar-ball."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, (N, sys.m))
    x0 = rng.uniform(-1, 1, sys.n)
    Bw = np.eye(sys.n) if Bw is None else Bw
    if wbar > 0:
        w = sample_ball(rng, N, Bw.shape[1], wbar)
        t = simulate(sys, u, x0, w, Bw)
    else:
        w = np.zeros((N, Bw.shape[1]))
        t = simulate(sys, u, x0)
    return t, w


def state_problem(sys, N, wbar, seed, set_bound=None):
    """Data matrices, noise set and consistency set for a state experiment."""
    t, w = state_experiment(sys, N, wbar, seed)
    d = build_state_data(t)
    nb = norm_bound_noise_set(wbar if set_bound is None else set_bound, N, sys.n)
    return d, nb, sigma_xu_quadratic(d, nb), w


def io_experiment(sys, l, N, vbar, seed):
    """IO data from the lifted model with output noise uniform in the vbar-ball."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, (N, sys.m))
    x0 = rng.uniform(-1, 1, sys.n)
    es = build_extended_system(sys, l)
    y_init = simulate(sys, u[:l], x0).y
    v = sample_ball(rng, N - l, sys.p, vbar) if vbar > 0 else None
    return simulate_difference(es, u, y_init, v), es, v


def io_problem(sys, l, N, vbar, seed, set_bound=None):
    t, es, v = io_experiment(sys, l, N, vbar, seed)
    ed = build_extended_data(t, l)
    nb = io_noise_set(vbar if set_bound is None else set_bound, N, l, sys.p)
    return ed, nb, sigma_uy_quadratic(ed, nb), es


def five_state_system(i):
    return random_system(5, 2, 2, seed=100 + i)


def four_state_system(i):
    return random_system(4, 2, 2, seed=300 + i)
