"""Command-line frontend.

Subcommands
-----------
verify     decide dissipativity for one supply rate
estimate   certified gain bound or passivity index
simulate   generate a trajectory CSV plus a ground-truth sidecar
checkdata  excitation and rank diagnostics
sweep      estimate over a grid of (samples, noise bound) cells

Exit codes: 0 dissipative, 1 not dissipative, 2 inconclusive or unknown,
3 usage error, 4 unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import lti
from .data import (NoiseBoundQuadratic, NoiseTarget, Trajectory, build_state_data,
                   check_rank_condition, is_persistently_exciting, norm_bound_noise_set,
                   pe_min_length, pe_order, sample_ball)
from .numerics import rank_with_tol
from .sdp import SolverConfig
from .supply import SupplyRate, gain_supply, passivity_supply
from .verdict import Estimate, Status, Verdict
from .verify_io import (build_extended_data, build_extended_system, gain_io_noisefree,
                        io_pe_ok, optimize_gain_io_robust,
                        optimize_passivity_io_robust, passivity_io_noisefree,
                        shift_structure, sigma_uy_quadratic, simulate_difference,
                        suspect_overestimated_lag,
                        verify_io_noisefree, verify_io_robust)
from .verify_state import (gain_noisefree, optimize_gain_robust, optimize_passivity_robust,
                           passivity_noisefree, sigma_xu_quadratic, verify_noisefree,
                           verify_robust)

log = logging.getLogger(__name__)

EXIT_CODES = {
    Status.DISSIPATIVE: 0,
    Status.NOT_DISSIPATIVE: 1,
    Status.INCONCLUSIVE: 2,
    Status.UNKNOWN: 2,
}
EXIT_USAGE = 3
EXIT_INPUT = 4


class UsageError(ValueError):
    code = EXIT_USAGE


class InputFileError(ValueError):
    code = EXIT_INPUT


def exit_code(status: Status) -> int:
    """Process exit code for a verdict status."""
    return EXIT_CODES[Status(status)]


# ------------------------------------------------------------------ files

def _fmt(v) -> str:
    return format(float(v), ".17g")


def read_blocks(path) -> dict:
    """Read named numeric blocks.

    Each block starts with a header line ``NAME ROWS COLS`` followed by
    ``ROWS`` lines of ``COLS`` numbers. Blank lines and ``#`` comments are
    ignored.
    """
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise InputFileError(f"{path}: {e.strerror or e}") from e
    body = [(i + 1, ln.split("#", 1)[0].split()) for i, ln in enumerate(lines)]
    body = [(i, tok) for i, tok in body if tok]
    out, pos = {}, 0
    while pos < len(body):
        lineno, tok = body[pos]
        if len(tok) != 3 or not tok[1].isdigit() or not tok[2].isdigit():
            raise InputFileError(f"{path}:{lineno}: expected a header 'NAME ROWS COLS', got {' '.join(tok)!r}")
        name, r, c = tok[0], int(tok[1]), int(tok[2])
        if name in out:
            raise InputFileError(f"{path}:{lineno}: duplicate block {name!r}")
        rows = body[pos + 1:pos + 1 + r]
        if len(rows) < r:
            raise InputFileError(f"{path}: block {name!r} needs {r} rows, file ends after {len(rows)}")
        M = np.zeros((r, c))
        for k, (ln, vals) in enumerate(rows):
            if len(vals) != c:
                raise InputFileError(f"{path}:{ln}: block {name!r} row {k + 1} has {len(vals)} values, expected {c}")
            try:
                M[k] = [float(v) for v in vals]
            except ValueError:
                raise InputFileError(f"{path}:{ln}: non-numeric value in block {name!r}") from None
        if not np.all(np.isfinite(M)):
            raise InputFileError(f"{path}: block {name!r} has NaN or Inf entries")
        out[name] = M
        pos += 1 + r
    return out


def write_blocks(path, blocks: dict, comments=()):
    with open(path, "w") as f:
        for c in comments:
            f.write(f"# {c}\n")
        for name, M in blocks.items():
            M = np.atleast_2d(np.asarray(M, dtype=float))
            f.write(f"{name} {M.shape[0]} {M.shape[1]}\n")
            for row in M:
                f.write(" ".join(_fmt(v) for v in row) + "\n")


def _need(blocks, names, path):
    missing = [n for n in names if n not in blocks]
    if missing:
        raise InputFileError(f"{path}: missing block(s) {', '.join(missing)}")
    return [blocks[n] for n in names]


def load_system(path) -> lti.LtiSystem:
    A, B, C, D = _need(read_blocks(path), ("A", "B", "C", "D"), path)
    try:
        return lti.LtiSystem(A, B, C, D)
    except ValueError as e:
        raise InputFileError(f"{path}: {e}") from e


_COL = re.compile(r"^([uxy])(\d+)$")


def load_trajectory_csv(path) -> Trajectory:
    """Parse a trajectory CSV with header columns ``u1.. x1.. y1..``.

    One sample per row. When states are present the file may carry one
    extra trailing row with only ``x`` filled in (the final state); without
    it the last row supplies the final state and its inputs are dropped.
    """
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise InputFileError(f"{path}: {e.strerror or e}") from e
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise InputFileError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    cols = {"u": {}, "x": {}, "y": {}}
    for j, h in enumerate(header):
        mt = _COL.match(h)
        if not mt:
            raise InputFileError(f"{path}: column {j + 1} has unknown header {h!r} (expected u*, x* or y*)")
        kind, idx = mt.group(1), int(mt.group(2))
        if idx in cols[kind]:
            raise InputFileError(f"{path}: duplicate column {h!r}")
        cols[kind][idx] = j
    for kind, cs in cols.items():
        for want in range(1, len(cs) + 1):
            if want not in cs:
                raise InputFileError(f"{path}: missing column {kind}{want}")
    if not cols["u"]:
        raise InputFileError(f"{path}: missing column u1")
    if not cols["x"] and not cols["y"]:
        raise InputFileError(f"{path}: need x* or y* columns")
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputFileError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        vals = []
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                vals.append(None)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise InputFileError(f"{path}: row {i}, column {header[j]}: {cell!r} is not a number") from None
            if not np.isfinite(v):
                raise InputFileError(f"{path}: row {i}, column {header[j]}: value is not finite")
            vals.append(v)
        data.append(vals)

    def pick(kind, vals):
        return [vals[cols[kind][k]] for k in range(1, len(cols[kind]) + 1)]

    trailing = False
    if cols["x"] and data:
        last = data[-1]
        if all(v is None for v in pick("u", last) + pick("y", last)) and None not in pick("x", last):
            trailing = True
    for r, vals in enumerate(data[:-1] if trailing else data):
        for j, v in enumerate(vals):
            if v is None:
                raise InputFileError(f"{path}: row {r + 2}, column {header[j]}: empty cell")
    if not data or (trailing and len(data) < 2):
        raise InputFileError(f"{path}: no samples")
    arr = lambda kind, rs: np.array([pick(kind, v) for v in rs], dtype=float)
    if cols["x"]:
        x = arr("x", data)
        body = data[:-1]
        if not trailing:
            log.info("%s: no trailing state row; last row taken as the final state", path)
        u = arr("u", body)
        y = arr("y", body) if cols["y"] else None
        if u.shape[0] == 0:
            raise InputFileError(f"{path}: need at least two rows of states")
    else:
        u, x, y = arr("u", data), None, arr("y", data)
    return Trajectory(u=u, x=x, y=y)


def write_trajectory_csv(path, t: Trajectory):
    """Write `t` with 17 significant digits; states get a trailing x_N row."""
    hdr = ([f"u{i + 1}" for i in range(t.m)]
           + ([f"x{i + 1}" for i in range(t.n)] if t.x is not None else [])
           + ([f"y{i + 1}" for i in range(t.p)] if t.y is not None else []))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(hdr)
        for k in range(t.N):
            row = [_fmt(v) for v in t.u[k]]
            if t.x is not None:
                row += [_fmt(v) for v in t.x[k]]
            if t.y is not None:
                row += [_fmt(v) for v in t.y[k]]
            w.writerow(row)
        if t.x is not None:
            w.writerow([""] * t.m + [_fmt(v) for v in t.x[t.N]] + [""] * (t.p or 0))


def _report_value(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_report_value(a) for a in np.ravel(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v).replace("\n", " ")


def format_report(rep: dict) -> str:
    return "".join(f"{k} = {_report_value(v)}\n" for k, v in rep.items())


def read_report(path) -> dict:
    """Parse a ``key = value`` report back into strings."""
    out = {}
    with open(path) as f:
        for ln in f:
            if "=" in ln and not ln.startswith("#"):
                k, v = ln.split("=", 1)
                out[k.strip()] = v.strip()
    return out


# ----------------------------------------------------------------- config

_KINDS = {"state": "state", "input-state": "state", "io": "io", "input-output": "io"}


@dataclass
class RunConfig:
    """Resolved options for one command.

    In state mode without a ``cd`` file the output map is taken as
    ``C = I, D = 0``. Input-output mode needs ``lag`` or ``order_bound``
    (the latter is a valid upper bound on the lag).
    """

    command: str
    data: str | None = None
    kind: str = "state"
    cd: str | None = None
    supply: str = "gain"
    gamma: float | None = None
    rho: float | None = None
    supply_file: str | None = None
    noise_bound: float | None = None
    noise_file: str | None = None
    lag: int | None = None
    order_bound: int | None = None
    bw: str = "identity"
    eps: float | None = None
    max_iter: int | None = None
    allow_sign_violation: bool = False
    seed: int | None = None
    out: str | None = None
    system: str | None = None
    random: str | None = None
    samples: int = 50
    grid_noise: list = field(default_factory=list)
    grid_samples: list = field(default_factory=list)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise UsageError(f"unknown data kind {self.kind!r}; use state or io")
        self.kind = _KINDS[self.kind]
        if self.supply not in ("gain", "passivity", "custom"):
            raise UsageError(f"unknown supply {self.supply!r}; use gain, passivity or custom")
        if self.supply == "custom" and not self.supply_file:
            raise UsageError("custom supply needs --supply-file with Q, S, R blocks")
        if self.noise_bound is not None and self.noise_bound < 0:
            raise UsageError("--noise-bound must be nonnegative")
        if self.noise_bound and self.noise_file:
            raise UsageError("give either --noise-bound or --noise-file, not both")
        for k in ("lag", "order_bound"):
            v = getattr(self, k)
            if v is not None and v < 1:
                raise UsageError(f"--{k.replace('_', '-')} must be at least 1")
        if self.samples < 1 or self.workers < 1:
            raise UsageError("--samples and --workers must be positive")

    @property
    def noisy(self) -> bool:
        return bool(self.noise_bound) or self.noise_file is not None

    def solver(self) -> SolverConfig:
        kw = {}
        if self.eps is not None:
            kw["strict_eps"] = self.eps
        if self.max_iter is not None:
            kw["max_iter"] = self.max_iter
        try:
            return SolverConfig(**kw)
        except ValueError as e:
            raise UsageError(str(e)) from e


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _ints(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional JSON config file with command-line flags (flags win)."""
    names = {f.name for f in fields(RunConfig)}
    merged = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                raw = json.load(f)
        except OSError as e:
            raise InputFileError(f"{args.config}: {e.strerror or e}") from e
        except json.JSONDecodeError as e:
            raise InputFileError(f"{args.config}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise InputFileError(f"{args.config}: expected a JSON object")
        for k, v in raw.items():
            k = k.replace("-", "_")
            if k not in names or k == "command":
                raise UsageError(f"{args.config}: unknown option {k!r}")
            merged[k] = v
    for k, v in vars(args).items():
        if k in names and v is not None:
            merged[k] = v
    for k in ("grid_noise", "grid_samples"):
        if isinstance(merged.get(k), str):
            merged[k] = (_floats if k == "grid_noise" else _ints)(merged[k])
    return RunConfig(**merged)


# --------------------------------------------------------------- plumbing

def _trajectory(cfg: RunConfig) -> Trajectory:
    if not cfg.data:
        raise UsageError("--data is required")
    t = load_trajectory_csv(cfg.data)
    if cfg.kind == "state" and t.x is None:
        raise InputFileError(f"{cfg.data}: state mode needs x* columns")
    if cfg.kind == "io" and t.y is None:
        raise InputFileError(f"{cfg.data}: input-output mode needs y* columns")
    return t


def _output_map(cfg: RunConfig, n: int, m: int):
    if not cfg.cd:
        return np.eye(n), np.zeros((n, m)), "output map assumed C = I, D = 0"
    C, D = _need(read_blocks(cfg.cd), ("C", "D"), cfg.cd)
    if C.shape[1] != n or D.shape != (C.shape[0], m):
        raise InputFileError(f"{cfg.cd}: C must be p x {n} and D p x {m}, got {C.shape} and {D.shape}")
    return C, D, None


def _input_matrix(spec: str, name: str, rows: int) -> np.ndarray:
    if spec == "identity":
        return np.eye(rows)
    (M,) = _need(read_blocks(spec), (name,), spec)
    if M.shape[0] != rows:
        raise InputFileError(f"{spec}: {name} must have {rows} rows, got {M.shape[0]}")
    return M


def _supply(cfg: RunConfig, m: int, p: int) -> SupplyRate:
    if cfg.supply == "gain":
        if cfg.gamma is None:
            raise UsageError("gain supply needs --gamma")
        return gain_supply(cfg.gamma, m, p)
    if cfg.supply == "passivity":
        if cfg.rho is None:
            raise UsageError("passivity supply needs --rho")
        if m != p:
            raise UsageError(f"passivity needs as many inputs as outputs (m={m}, p={p})")
        return passivity_supply(cfg.rho, m, p)
    Q, S, R = _need(read_blocks(cfg.supply_file), ("Q", "S", "R"), cfg.supply_file)
    Pi = SupplyRate(Q, S, R, name="custom")
    if Pi.m != m or Pi.p != p:
        raise InputFileError(f"{cfg.supply_file}: supply is for m={Pi.m}, p={Pi.p}; data has m={m}, p={p}")
    return Pi


def _noise_set(cfg: RunConfig, span: int, width: int, target) -> NoiseBoundQuadratic:
    if cfg.noise_file:
        Qn, Sn, Rn = _need(read_blocks(cfg.noise_file), ("Qn", "Sn", "Rn"), cfg.noise_file)
        nb = NoiseBoundQuadratic(Qn, Sn, Rn, target)
        if nb.span != span or nb.width != width:
            raise InputFileError(f"{cfg.noise_file}: noise set is {nb.width} x {nb.span}, "
                                 f"data needs {width} x {span}")
        return nb
    return norm_bound_noise_set(cfg.noise_bound, span, width, target)


def _io_window(cfg: RunConfig) -> int:
    l = cfg.lag or cfg.order_bound
    if l is None:
        raise UsageError("input-output mode needs --lag or --order-bound")
    return l


def _verdict_report(v: Verdict) -> dict:
    rep = {"status": v.status.value, "exit_code": exit_code(v.status)}
    if v.certificate is not None:
        rep["P_eigenvalues"] = np.linalg.eigvalsh(v.certificate.P)
        if v.certificate.tau is not None:
            rep["tau"] = v.certificate.tau
    if v.margins is not None:
        rep["worst_margin"] = v.margins.worst
        for name, val in zip(v.margins.names, v.margins.relative):
            rep[f"margin[{name}]"] = val
    if v.solution is not None:
        rep["solver_status"] = v.solution.status.value
        rep["solver_iterations"] = v.solution.iterations
    for k, val in v.diagnostics.items():
        rep[k] = val
    for i, note in enumerate(v.notes):
        rep[f"note{i + 1}"] = note
    return rep


class _Problem:
    """Data-side objects shared by verify and estimate."""

    def __init__(self, cfg: RunConfig, t: Trajectory, output_map=None):
        self.cfg, self.t = cfg, t
        self.notes = []
        self.solver = cfg.solver()
        if cfg.kind == "state":
            self.d = build_state_data(t)
            if output_map is None:
                self.C, self.D, note = _output_map(cfg, t.n, t.m)
                if note:
                    self.notes.append(note)
            else:
                self.C, self.D = output_map
            self.m, self.p = t.m, self.C.shape[0]
            if cfg.noisy:
                Bw = _input_matrix(cfg.bw, "Bw", t.n)
                nb = _noise_set(cfg, t.N, Bw.shape[1], NoiseTarget.PROCESS_STATE)
                self.qs = sigma_xu_quadratic(self.d, nb, Bw)
        else:
            self.l = _io_window(cfg)
            if t.N <= self.l:
                raise InputFileError(f"{cfg.data}: need more than l = {self.l} samples")
            self.ed = build_extended_data(t, self.l)
            self.m, self.p = t.m, t.p
            self.A1, self.B1 = shift_structure(self.m, self.p, self.l)
            self.pe_ok = bool(cfg.order_bound) and io_pe_ok(t.u, cfg.order_bound, self.l)
            if suspect_overestimated_lag(self.ed):
                self.notes.append(f"(Xi; U) is rank deficient; l = {self.l} may exceed the lag")
            if cfg.noisy:
                bv = _input_matrix(cfg.bw, "Bv", self.p)
                nb = _noise_set(cfg, t.N - self.l, bv.shape[1], NoiseTarget.PROCESS_OUTPUT)
                self.qs = sigma_uy_quadratic(self.ed, nb, bv)
                # noise can hide a rank deficit; flag directions no larger than the noise energy
                smin = np.linalg.svd(self.ed.Z, compute_uv=False)[-1]
                if cfg.noise_bound and smin <= 2.0 * cfg.noise_bound * np.sqrt(t.N - self.l) \
                        * np.linalg.norm(bv, 2):
                    self.notes.append(
                        f"(Xi; U) is rank deficient up to the noise level (sigma_min {smin:.3g}); "
                        "with l times p above the state dimension no robust bound exists")

    def verify(self, Pi: SupplyRate) -> Verdict:
        c = self.cfg
        if c.kind == "state":
            if c.noisy:
                return verify_robust(self.qs, self.C, self.D, Pi, self.solver, c.allow_sign_violation)
            return verify_noisefree(self.d, self.C, self.D, Pi, cfg=self.solver)
        if c.noisy:
            return verify_io_robust(self.qs, self.A1, self.B1, Pi, self.solver)
        return verify_io_noisefree(self.ed, Pi, self.pe_ok, cfg=self.solver)

    def estimate(self) -> Estimate:
        c = self.cfg
        gain = c.supply == "gain"
        if not gain and self.m != self.p:
            raise UsageError(f"passivity needs as many inputs as outputs (m={self.m}, p={self.p})")
        if c.noisy:
            if c.kind == "state":
                fn = optimize_gain_robust if gain else optimize_passivity_robust
                return fn(self.qs, self.C, self.D, self.solver)
            fn = optimize_gain_io_robust if gain else optimize_passivity_io_robust
            return fn(self.qs, self.A1, self.B1, self.solver)
        # noise-free: bisection returns a certified value; re-run it for the certificate
        if c.kind == "state":
            fn = gain_noisefree if gain else passivity_noisefree
            val = fn(self.d, self.C, self.D, cfg=self.solver)
        else:
            fn = gain_io_noisefree if gain else passivity_io_noisefree
            val = fn(self.ed, cfg=self.solver)
        if not np.isfinite(val):
            return Estimate(float(val), Verdict(Status.UNKNOWN, notes=["bisection found no bound"]))
        Pi = gain_supply(val, self.m, self.p) if gain else passivity_supply(val, self.m, self.p)
        v = self.verify(Pi)
        return Estimate(float(val), v, v.solution)


def _header(cfg: RunConfig, t: Trajectory) -> dict:
    rep = {"command": cfg.command, "kind": cfg.kind, "samples": t.N, "inputs": t.m}
    if t.n is not None:
        rep["states"] = t.n
    if t.p is not None:
        rep["outputs"] = t.p
    rep["noise"] = (f"file {cfg.noise_file}" if cfg.noise_file
                    else f"norm-ball {_fmt(cfg.noise_bound)}" if cfg.noise_bound else "none")
    return rep


# --------------------------------------------------------------- commands

def cmd_verify(cfg: RunConfig):
    """Returns ``(exit code, report dict)``."""
    t = _trajectory(cfg)
    prob = _Problem(cfg, t)
    Pi = _supply(cfg, prob.m, prob.p)
    rep = _header(cfg, t)
    rep["supply"] = cfg.supply
    if cfg.supply == "gain":
        rep["gamma"] = cfg.gamma
    elif cfg.supply == "passivity":
        rep["rho"] = cfg.rho
    v = prob.verify(Pi)
    rep.update(_verdict_report(v))
    for i, note in enumerate(prob.notes):
        rep[f"input_note{i + 1}"] = note
    return exit_code(v.status), rep


def cmd_estimate(cfg: RunConfig):
    if cfg.supply == "custom":
        raise UsageError("estimate works with the gain or passivity supply")
    t = _trajectory(cfg)
    prob = _Problem(cfg, t)
    rep = _header(cfg, t)
    rep["supply"] = cfg.supply
    est = prob.estimate()
    key = "gamma_hat" if cfg.supply == "gain" else "rho_hat"
    if est.found:
        rep[key] = est.value
        code = 0
    else:
        rep[key] = "none"
        rep["message"] = "no bound certifiable"
        code = 2
    rep.update(_verdict_report(est.verdict))
    rep["exit_code"] = code
    for i, note in enumerate(prob.notes):
        rep[f"input_note{i + 1}"] = note
    return code, rep


def _system(cfg: RunConfig, rng_seed) -> lti.LtiSystem:
    if cfg.system and cfg.random:
        raise UsageError("give either --system or --random, not both")
    if cfg.system:
        return load_system(cfg.system)
    if cfg.random:
        try:
            n, m, p = _ints(cfg.random)
        except ValueError:
            raise UsageError("--random expects n,m,p") from None
        return lti.random_system(n, m, p, seed=rng_seed)
    raise UsageError("give --system FILE or --random n,m,p")


def generate(sys_: lti.LtiSystem, kind: str, N: int, noise_bound: float, rng,
             l: int | None = None, bw=None):
    """Seeded experiment: inputs and initial state uniform in [-1, 1], noise
    uniform in the ball of radius `noise_bound`.

    Returns ``(trajectory, noise)`` where noise is ``(N, n_w)`` for state
    data or ``(N - l, m_v)`` for input-output data (``None`` if noise-free).
    """
    u = rng.uniform(-1.0, 1.0, (N, sys_.m))
    x0 = rng.uniform(-1.0, 1.0, sys_.n)
    if kind == "state":
        Bw = np.eye(sys_.n) if bw is None else bw
        w = sample_ball(rng, N, Bw.shape[1], noise_bound) if noise_bound else None
        t = lti.simulate(sys_, u, x0, w, Bw if w is not None else None)
        return t, w
    l = lti.lag(sys_) if l is None else l
    if N <= l:
        raise UsageError(f"need more than l = {l} samples")
    es = build_extended_system(sys_, l)
    y_init = lti.simulate(sys_, u[:l], x0).y
    bv = np.eye(sys_.p) if bw is None else bw
    v = sample_ball(rng, N - l, bv.shape[1], noise_bound) if noise_bound else None
    return simulate_difference(es, u, y_init, v, bv if v is not None else None), v


def _truth(sys_: lti.LtiSystem) -> dict:
    out = {}
    if sys_.spectral_radius() < 1:
        out["gamma_true"] = lti.hinf_oracle(sys_)
        if sys_.m == sys_.p:
            out["rho_true"] = lti.passivity_oracle(sys_)
    return out


def cmd_simulate(cfg: RunConfig):
    if not cfg.out:
        raise UsageError("simulate needs --out")
    seed = 0 if cfg.seed is None else cfg.seed
    sys_ = _system(cfg, seed)
    rng = np.random.default_rng(seed)
    wbar = cfg.noise_bound or 0.0
    rows = sys_.n if cfg.kind == "state" else sys_.p
    bw = None if cfg.bw == "identity" else _input_matrix(cfg.bw, "Bw" if cfg.kind == "state" else "Bv", rows)
    t, w = generate(sys_, cfg.kind, cfg.samples, wbar, rng, cfg.lag, bw)
    if w is not None:
        assert np.all(np.linalg.norm(w, axis=1) <= wbar * (1 + 1e-12))
    write_trajectory_csv(cfg.out, t)
    sidecar = cfg.out + ".truth.txt"
    blocks = {"A": sys_.A, "B": sys_.B, "C": sys_.C, "D": sys_.D}
    truth = _truth(sys_)
    blocks.update({k: [[v]] for k, v in truth.items()})
    blocks.update({"noise_bound": [[wbar]], "seed": [[seed]], "lag": [[lti.lag(sys_)]]})
    write_blocks(sidecar, blocks, comments=[f"ground truth for {cfg.out}"])
    rep = {"command": "simulate", "kind": cfg.kind, "samples": t.N, "out": cfg.out,
           "truth": sidecar, "noise_bound": wbar, "seed": seed}
    rep.update(truth)
    if w is not None:
        rep["max_noise_norm"] = float(np.max(np.linalg.norm(w, axis=1)))
    return 0, rep


def cmd_checkdata(cfg: RunConfig):
    t = _trajectory(cfg)
    rep = _header(cfg, t)
    L = pe_order(t.u)
    rep["pe_order"] = L
    rep["pe_min_length_next"] = pe_min_length(t.m, L + 1)
    ok = True
    if cfg.kind == "state":
        d = build_state_data(t)
        r, need = rank_with_tol(d.Z), t.n + t.m
        rep["rank_XU"] = r
        rep["rank_required"] = need
        ok = check_rank_condition(d)
        rep["rank_condition"] = ok
        if not ok:
            rep["rank_gap"] = need - r
            rep["note1"] = f"rank(X; U) = {r}, needs n + m = {need}"
    else:
        l = _io_window(cfg)
        rep["l"] = l
        if t.N > l:
            ed = build_extended_data(t, l)
            rep["rank_XiU"] = rank_with_tol(np.vstack([ed.Xi, ed.U]))
            rep["rank_XiU_rows"] = ed.Xi.shape[0] + t.m
        if cfg.order_bound:
            order = cfg.order_bound + l + 1
            rep["pe_order_required"] = order
            rep["pe_min_length"] = pe_min_length(t.m, order)
            ok = is_persistently_exciting(t.u, order)
            rep["pe_condition"] = ok
            if t.N < pe_min_length(t.m, order):
                rep["note1"] = (f"order {order} needs at least {pe_min_length(t.m, order)} samples, "
                                f"have {t.N}")
    return (0 if ok else 2), rep


def _sweep_cell(job):
    idx, sys_, kind, N, wbar, seed, supply, l, solver = job
    rng = np.random.default_rng([seed, idx])
    t, _ = generate(sys_, kind, N, wbar, rng, l)
    cfg = RunConfig(command="sweep", kind=kind, supply=supply, noise_bound=wbar or None,
                    lag=l if kind == "io" else None, eps=solver[0], max_iter=solver[1])
    try:
        est = _Problem(cfg, t, (sys_.C, sys_.D)).estimate()
    except ValueError as e:
        return idx, N, wbar, np.nan, f"error: {e}"
    return idx, N, wbar, est.value if est.found else np.nan, est.verdict.status.value


def cmd_sweep(cfg: RunConfig):
    if not cfg.out:
        raise UsageError("sweep needs --out")
    if cfg.supply == "custom":
        raise UsageError("sweep estimates the gain or passivity index")
    seed = 0 if cfg.seed is None else cfg.seed
    sys_ = _system(cfg, seed)
    grid_w = cfg.grid_noise or [cfg.noise_bound or 0.0]
    grid_n = cfg.grid_samples or [cfg.samples]
    l = (cfg.lag or lti.lag(sys_)) if cfg.kind == "io" else None
    jobs = [(i, sys_, cfg.kind, N, w, seed, cfg.supply, l, (cfg.eps, cfg.max_iter))
            for i, (N, w) in enumerate((N, w) for N in grid_n for w in grid_w)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    truth = _truth(sys_)
    key = "gamma_hat" if cfg.supply == "gain" else "rho_hat"
    ref = truth.get("gamma_true" if cfg.supply == "gain" else "rho_true", np.nan)
    with open(cfg.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["cell", "samples", "noise_bound", key, "status", "true_value"])
        for idx, N, wbar, val, status in results:
            w.writerow([idx, N, _fmt(wbar), _fmt(val), status, _fmt(ref)])
    n_ok = sum(1 for r in results if np.isfinite(r[3]))
    return 0, {"command": "sweep", "cells": len(results), "certified": n_ok, "out": cfg.out}


COMMANDS = {"verify": cmd_verify, "estimate": cmd_estimate, "simulate": cmd_simulate,
            "checkdata": cmd_checkdata, "sweep": cmd_sweep}


# ----------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="datadiss", description="Dissipativity verification from measured data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON file with option defaults")
        if data:
            sp.add_argument("--data", help="trajectory CSV (columns u*, x*, y*)")
        sp.add_argument("--kind", choices=sorted(_KINDS), help="data kind (default state)")
        sp.add_argument("--lag", type=int, help="lag l used for the extended state")
        sp.add_argument("--order-bound", type=int, dest="order_bound",
                        help="upper bound on the system order")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--seed", type=int)

    def method(sp):
        sp.add_argument("--supply", choices=["gain", "passivity", "custom"])
        sp.add_argument("--supply-file", dest="supply_file", help="blocks Q, S, R for a custom supply")
        sp.add_argument("--cd", help="blocks C, D of the known output map (state mode)")
        sp.add_argument("--noise-bound", type=float, dest="noise_bound",
                        help="per-sample noise norm bound")
        sp.add_argument("--noise-file", dest="noise_file", help="blocks Qn, Sn, Rn of a noise set")
        sp.add_argument("--bw", help="'identity' or a file with block Bw (state) or Bv (io)")
        sp.add_argument("--eps", type=float, help="relative strictness margin")
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--allow-sign-violation", action="store_true", default=None,
                        dest="allow_sign_violation")

    sp = sub.add_parser("verify", help="test one supply rate")
    common(sp)
    method(sp)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--rho", type=float)

    sp = sub.add_parser("estimate", help="certified gain bound or passivity index")
    common(sp)
    method(sp)

    for name, hlp in (("simulate", "generate a trajectory"), ("sweep", "grid of estimates")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, data=False)
        sp.add_argument("--system", help="blocks A, B, C, D")
        sp.add_argument("--random", help="random stable system n,m,p (seeded by --seed)")
        sp.add_argument("--samples", type=int)
        sp.add_argument("--noise-bound", type=float, dest="noise_bound")
        sp.add_argument("--bw")
        if name == "sweep":
            sp.add_argument("--supply", choices=["gain", "passivity"])
            sp.add_argument("--grid-noise", dest="grid_noise", help="comma-separated noise bounds")
            sp.add_argument("--grid-samples", dest="grid_samples", help="comma-separated N values")
            sp.add_argument("--workers", type=int)
            sp.add_argument("--eps", type=float)
            sp.add_argument("--max-iter", type=int, dest="max_iter")

    sp = sub.add_parser("checkdata", help="excitation and rank diagnostics")
    common(sp)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        code, rep = COMMANDS[cfg.command](cfg)
    except (UsageError, InputFileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = format_report(rep)
    if cfg.out and cfg.command in ("verify", "estimate", "checkdata"):
        with open(cfg.out, "w") as f:
            f.write(text)
    status = rep.get("status", "ok")
    extra = "".join(f", {k} {_report_value(rep[k])}" for k in ("gamma_hat", "rho_hat") if k in rep)
    print(f"# {cfg.command}: {status}{extra} (exit {code})")
    if not (cfg.out and cfg.command in ("verify", "estimate", "checkdata")):
        sys.stdout.write(text)
    return code
