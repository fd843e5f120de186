"""Command-line entry point: config parsing, experiment commands, CSV emission.

Config files are line-oriented ``key = value`` text; matrix/list values use
bracket syntax (``system.A = [[1, 1], [0, 1]]``) and a few keys accept bare
words (``gain.K = auto``).  Exit codes: 0 success, 2 infeasible or empty-set
result, 3 configuration error.
"""

import argparse
import ast
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import constraints, drprs, model, sim, smpc
from .errors import (
    AllocationError,
    ConfigError,
    DrsmpcError,
    InfeasibleRadius,
    TightenedSetEmpty,
)
from .linalg import lqr_gain

_WORD_KEYS = {"gain.K": {"auto"}, "dr.mode": {"var", "cvar"},
              "sampling.mode": {"stationary", "recursion"}}


@dataclass
class ExperimentConfig:
    """Flat bag of experiment parameters read from a config file."""

    A: np.ndarray = None
    B: np.ndarray = None
    noise_cov: np.ndarray = None
    K: object = "auto"
    Q: np.ndarray = None
    R: np.ndarray = None
    horizon: int = 30
    H: np.ndarray = None
    h: np.ndarray = None
    L: Optional[np.ndarray] = None
    l: Optional[np.ndarray] = None
    p_x: float = 0.8
    p_u: Optional[float] = None
    theta: float = 0.0
    M: int = 30
    M_list: Optional[list] = None
    theta_grid: Optional[list] = None
    N_s: int = 100
    T: int = 100
    N_mc: int = 100
    N_v: int = 10000
    seed: int = 0
    dr_mode: str = "var"
    lambda_min: float = 1.0
    sampling: str = "stationary"
    x0: np.ndarray = None
    prs_coord: int = 2
    region_x1: Optional[list] = None
    region_x2: Optional[list] = None
    lines: dict = field(default_factory=dict, repr=False)


_KEYS = {
    "system.A": ("A", "matrix"),
    "system.B": ("B", "matrix"),
    "noise.cov": ("noise_cov", "matrix"),
    "gain.K": ("K", "matrix_or_word"),
    "weights.Q": ("Q", "matrix"),
    "weights.R": ("R", "matrix"),
    "horizon": ("horizon", "int"),
    "state.H": ("H", "matrix"),
    "state.h": ("h", "vector"),
    "input.L": ("L", "matrix"),
    "input.l": ("l", "vector"),
    "p_x": ("p_x", "float"),
    "p_u": ("p_u", "float"),
    "theta": ("theta", "float"),
    "M": ("M", "int"),
    "M_list": ("M_list", "int_list"),
    "theta_grid": ("theta_grid", "float_list"),
    "N_s": ("N_s", "int"),
    "T": ("T", "int"),
    "N_mc": ("N_mc", "int"),
    "N_v": ("N_v", "int"),
    "seed": ("seed", "int"),
    "dr.mode": ("dr_mode", "word"),
    "dr.lambda_min": ("lambda_min", "float"),
    "sampling.mode": ("sampling", "word"),
    "x0": ("x0", "vector"),
    "prs.coord": ("prs_coord", "int"),
    "region.x1": ("region_x1", "float_list"),
    "region.x2": ("region_x2", "float_list"),
}


def _convert(key, raw, kind, line_no):
    if kind in ("word", "matrix_or_word") and raw in _WORD_KEYS.get(key, set()):
        return raw
    if kind == "word":
        allowed = sorted(_WORD_KEYS.get(key, set()))
        raise ConfigError(f"{key} must be one of {allowed}, got {raw!r}", line_no)
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        raise ConfigError(f"cannot parse value for {key}: {raw!r}", line_no) from None
    try:
        if kind == "int":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError
            return value
        if kind == "float":
            return float(value)
        if kind in ("matrix", "matrix_or_word"):
            arr = np.asarray(value, dtype=float)
            if arr.ndim != 2:
                raise ValueError
            return arr
        if kind == "vector":
            arr = np.asarray(value, dtype=float).reshape(-1)
            return arr
        if kind == "int_list":
            return [int(v) for v in value]
        if kind == "float_list":
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"value for {key} has the wrong shape/type: {raw!r}", line_no) from None
    raise ConfigError(f"unhandled kind {kind}", line_no)


def parse_config(path):
    cfg = ExperimentConfig()
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", line_no)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", line_no)
        attr, kind = _KEYS[key]
        setattr(cfg, attr, _convert(key, raw, kind, line_no))
        cfg.lines[attr] = line_no
    _validate(cfg)
    return cfg


def _fail(cfg, attr, message):
    raise ConfigError(message, cfg.lines.get(attr))


def _validate(cfg):
    for attr in ("A", "B", "noise_cov", "Q", "R", "H", "h", "x0"):
        if getattr(cfg, attr) is None:
            raise ConfigError(f"missing required key for {attr!r}")
    n_x = cfg.A.shape[0]
    if cfg.A.shape != (n_x, n_x):
        _fail(cfg, "A", "system.A must be square")
    if cfg.B.shape[0] != n_x:
        _fail(cfg, "B", "system.B row count must match system.A")
    n_u = cfg.B.shape[1]
    if cfg.noise_cov.shape != (n_x, n_x):
        _fail(cfg, "noise_cov", "noise.cov must be n_x by n_x")
    if isinstance(cfg.K, np.ndarray) and cfg.K.shape != (n_u, n_x):
        _fail(cfg, "K", "gain.K must be n_u by n_x")
    if cfg.Q.shape != (n_x, n_x) or cfg.R.shape != (n_u, n_u):
        _fail(cfg, "Q", "weight dimensions must match the plant")
    if cfg.H.shape[1] != n_x or cfg.h.size != cfg.H.shape[0]:
        _fail(cfg, "H", "state constraint rows are inconsistent")
    if (cfg.L is None) != (cfg.l is None):
        _fail(cfg, "L", "input.L and input.l must be given together")
    if cfg.L is not None and (cfg.L.shape[1] != n_u or cfg.l.size != cfg.L.shape[0]):
        _fail(cfg, "L", "input constraint rows are inconsistent")
    if not 0.0 < cfg.p_x < 1.0:
        _fail(cfg, "p_x", "p_x must lie in (0, 1)")
    if cfg.p_u is not None and not 0.0 < cfg.p_u < 1.0:
        _fail(cfg, "p_u", "p_u must lie in (0, 1)")
    if cfg.theta < 0.0:
        _fail(cfg, "theta", "theta must be nonnegative")
    if cfg.x0.size != n_x:
        _fail(cfg, "x0", "x0 must have n_x entries")
    if not 1 <= cfg.prs_coord <= n_x:
        _fail(cfg, "prs_coord", "prs.coord is 1-based and must address a state")
    if cfg.seed < 0:
        _fail(cfg, "seed", "seed must be a nonnegative integer")
    for attr in ("horizon", "M", "N_s", "T", "N_mc", "N_v"):
        if getattr(cfg, attr) < 1:
            _fail(cfg, attr, f"{attr} must be >= 1")
    for attr in ("region_x1", "region_x2"):
        grid = getattr(cfg, attr)
        if grid is not None and (len(grid) != 3 or int(grid[2]) < 2 or grid[1] <= grid[0]):
            _fail(cfg, attr, f"{attr} must be [min, max, count] with count >= 2")


def build_plant(cfg):
    system = model.LtiSystem(A=cfg.A, B=cfg.B)
    if isinstance(cfg.K, str):
        K = lqr_gain(cfg.A, cfg.B, cfg.Q, cfg.R)
    else:
        K = cfg.K
    gain = model.TubeGain.from_gain(system, K)
    noise = model.NoiseModel.from_covariance(cfg.noise_cov)
    return system, gain, noise


def state_set(cfg):
    return constraints.Halfspaces.constraint_set(cfg.H, cfg.h)


def mpc_from_eta(cfg, system, gain, eta):
    X = state_set(cfg)
    Z = constraints.tighten(X, np.full(X.n_rows, float(eta)))
    V = None
    if cfg.L is not None:
        U = constraints.Halfspaces.constraint_set(cfg.L, cfg.l)
        V = constraints.tighten(U, np.zeros(U.n_rows))
    return smpc.MpcConfig.from_lyapunov(system, gain, cfg.horizon, cfg.Q, cfg.R, Z, V)


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_samples_csv(path, samples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(samples):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_samples_csv(path, n_x):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read sample file {path}: {exc}") from exc
    if data.shape[1] != n_x:
        raise ConfigError(
            f"sample file has {data.shape[1]} columns, expected {n_x}")
    return drprs.SampleSet(data)


def cmd_prs_true(cfg, args):
    system, gain, noise = build_plant(cfg)
    sigma_e = model.stationary_error_cov(gain, noise)
    coord = cfg.prs_coord - 1
    eta = model.true_gaussian_prs(gain, noise, coord, cfg.p_x, sigma_e)
    var = float(sigma_e[coord, coord])
    if args.out:
        write_csv(args.out, ["coord", "variance", "eta_true"],
                  [(cfg.prs_coord, var, eta)])
    print(f"prs-true: Sigma_e[{cfg.prs_coord},{cfg.prs_coord}]={var:.6f} "
          f"eta_star={eta:.6f} (p={cfg.p_x})")
    return 0


def cmd_dr_prs(cfg, args):
    if not args.samples:
        raise ConfigError("dr-prs requires --samples PATH")
    samples = load_samples_csv(args.samples, cfg.A.shape[0])
    theta = cfg.theta if args.theta is None else args.theta
    mode = {"var": "var_byproduct", "cvar": "cvar"}[args.mode or cfg.dr_mode]
    rows = state_set(cfg)
    try:
        result = drprs.synthesize_halfspace_prs(
            samples, rows, cfg.p_x, theta, symmetric_pairs=True, mode=mode,
            lambda_min=cfg.lambda_min)
    except (InfeasibleRadius, AllocationError) as exc:
        print(f"dr-prs: infeasible: {exc}")
        return 2
    if args.out:
        write_csv(args.out, ["row", "epsilon", "eta"],
                  [(i, result.epsilons[i], result.etas[i])
                   for i in range(rows.n_rows)])
    etas = " ".join(f"{v:.6f}" for v in result.etas)
    print(f"dr-prs: theta={theta} M={samples.m} eta=[{etas}]")
    return 0


def cmd_reliability(cfg, args):
    _, gain, noise = build_plant(cfg)
    m_list = cfg.M_list if cfg.M_list else [cfg.M]
    grid = cfg.theta_grid if cfg.theta_grid else [cfg.theta]
    rows = sim.reliability_experiment(
        gain, noise, m_list, grid, cfg.N_mc, cfg.N_v, cfg.p_x, cfg.seed,
        coord=cfg.prs_coord - 1, lambda_min=cfg.lambda_min, sampling=cfg.sampling)
    if args.out:
        write_csv(args.out, ["M", "theta", "r", "eta_q05", "eta_q50", "eta_q95"],
                  [(r.M, r.theta, r.r, r.eta_q05, r.eta_q50, r.eta_q95)
                   for r in rows])
    if args.samples:
        v_rng = sim.RngStream(cfg.seed, 0).generator()
        validation = sim.draw_error_samples(gain, noise, cfg.sampling, cfg.N_v, v_rng)
        write_samples_csv(args.samples, validation.samples)
    head = rows[0]
    tail = rows[-1]
    print(f"reliability: {len(rows)} rows; r(M={head.M}, theta={head.theta})="
          f"{head.r:.3f} .. r(M={tail.M}, theta={tail.theta})={tail.r:.3f}")
    return 0


def cmd_simulate(cfg, args):
    system, gain, noise = build_plant(cfg)
    if args.eta is None:
        eta = model.true_gaussian_prs(gain, noise, cfg.prs_coord - 1, cfg.p_x)
    else:
        eta = args.eta
    try:
        mpc_cfg = mpc_from_eta(cfg, system, gain, eta)
        experiment = sim.ClosedLoopExperiment(
            system=system, gain=gain, mpc=mpc_cfg, noise=noise, x0=cfg.x0,
            T=cfg.T, seed=cfg.seed)
        metrics = sim.monte_carlo(experiment, cfg.N_s)
    except TightenedSetEmpty:
        metrics = sim.SimMetrics(float("nan"), 0, 0, cfg.N_s, cfg.N_s)
    if args.out:
        write_csv(args.out,
                  ["eta", "runs", "steps", "avg_cost", "violations",
                   "total_samples", "infeasible_runs"],
                  [(eta, metrics.runs, cfg.T, metrics.avg_cost,
                    metrics.violation_count, metrics.total_state_samples,
                    metrics.infeasible_at_start)])
    print(f"simulate: eta={eta:.4f} runs={metrics.runs} avg_cost={metrics.avg_cost:.4f} "
          f"violations={metrics.violation_count}/{metrics.total_state_samples} "
          f"infeasible={metrics.infeasible_at_start}")
    return 2 if metrics.infeasible_at_start == metrics.runs else 0


def cmd_region(cfg, args):
    system, gain, noise = build_plant(cfg)
    if cfg.region_x1 is None or cfg.region_x2 is None:
        raise ConfigError("region requires region.x1 and region.x2 grids")
    if args.eta is None:
        eta = model.true_gaussian_prs(gain, noise, cfg.prs_coord - 1, cfg.p_x)
    else:
        eta = args.eta
    x1 = np.linspace(cfg.region_x1[0], cfg.region_x1[1], int(cfg.region_x1[2]))
    x2 = np.linspace(cfg.region_x2[0], cfg.region_x2[1], int(cfg.region_x2[2]))
    grid = np.array([(a, b) for a in x1 for b in x2])
    try:
        mpc_cfg = mpc_from_eta(cfg, system, gain, eta)
        flags = smpc.feasible_region_scan(grid, mpc_cfg)
    except TightenedSetEmpty:
        flags = np.zeros(grid.shape[0], dtype=bool)
    if args.out:
        write_csv(args.out, ["x1", "x2", "feasible"],
                  [(grid[i, 0], grid[i, 1], bool(flags[i]))
                   for i in range(grid.shape[0])])
    count = int(flags.sum())
    print(f"region: eta={eta:.4f} feasible {count}/{flags.size} grid points")
    return 0 if count else 2


_COMMANDS = {
    "prs-true": cmd_prs_true,
    "dr-prs": cmd_dr_prs,
    "reliability": cmd_reliability,
    "simulate": cmd_simulate,
    "region": cmd_region,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="drsmpc",
        description="Distributionally robust reachable sets and stochastic MPC",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--theta", type=float, default=None, help="override the radius")
        p.add_argument("--eta", type=float, default=None, help="tightening radius")
        p.add_argument("--samples", default=None,
                       help="sample CSV: input for dr-prs, validation dump for reliability")
        p.add_argument("--mode", choices=["var", "cvar"], default=None)
    return parser


def run_command(argv):
    """Dispatch one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"drsmpc: config error: {exc}", file=sys.stderr)
        return 3
    except DrsmpcError as exc:
        print(f"drsmpc: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
