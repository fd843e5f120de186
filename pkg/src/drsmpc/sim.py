"""Seeded noise streams, closed-loop Monte-Carlo, and the radius-reliability experiment.

Every random quantity is drawn from a stream derived from ``(master seed,
stream index)``, and aggregation is fixed in index order, so results are
bit-reproducible regardless of how the work is scheduled.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constraints import contains
from .drprs import DrConfig, SampleSet, budget_infeasible, wc_cvar_program
from .errors import DomainError, InitialInfeasible, TightenedSetEmpty
from .model import error_step, stationary_error_cov
from .linalg import psd_factor
from .smpc import ControllerState, mpc_step

_BURN_IN = 100


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: same (seed, index) yields the same bits."""

    seed: int
    index: int = 0

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class SimMetrics:
    avg_cost: float
    violation_count: int
    total_state_samples: int
    infeasible_at_start: int
    runs: int


@dataclass(frozen=True)
class ReliabilityRow:
    M: int
    theta: float
    r: float
    eta_q05: float
    eta_q50: float
    eta_q95: float
    feasible: bool = True


@dataclass(frozen=True)
class RunResult:
    xs: np.ndarray
    us: np.ndarray
    zs: np.ndarray
    cost: float
    violations: int
    identity_residual: float
    fallback_steps: int
    feasible: bool


@dataclass(frozen=True)
class ClosedLoopExperiment:
    """Everything one Monte-Carlo study needs besides the replicate index."""

    system: object
    gain: object
    mpc: object
    noise: object
    x0: np.ndarray
    T: int
    seed: int


def sample_noise(noise, rng):
    """One disturbance draw ``w = G xi`` with standard normal ``xi``."""
    return noise.G @ rng.standard_normal(noise.rank)


def draw_error_samples(gain, noise, mode, count, rng, sigma_e=None):
    """Closed-loop error samples, either i.i.d. stationary or by running the recursion.

    Stationary mode draws from the exact stationary Gaussian; recursion mode
    burns in 100 steps of the error dynamics and records successive states.
    """
    count = int(count)
    if mode == "stationary":
        if sigma_e is None:
            sigma_e = stationary_error_cov(gain, noise)
        G = psd_factor(sigma_e)
        xi = rng.standard_normal((count, G.shape[1]))
        return SampleSet(xi @ G.T)
    if mode == "recursion":
        n = noise.dim
        e = np.zeros(n)
        for _ in range(_BURN_IN):
            e = error_step(gain, e, sample_noise(noise, rng))
        out = np.empty((count, n))
        for i in range(count):
            e = error_step(gain, e, sample_noise(noise, rng))
            out[i] = e
        return SampleSet(out)
    raise DomainError(f"unknown sampling mode {mode!r}")


def run_closed_loop(system, gain, cfg, noise, T, rng, x0):
    """One closed-loop run of ``T`` steps; cost is the time-averaged stage cost.

    Violations are counted against the untightened state constraint set.  An
    infeasible first step is reported through the ``feasible`` flag rather
    than raised.
    """
    T = int(T)
    if T < 1:
        raise DomainError("T must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_x, n_u = system.n_x, system.n_u
    xs = np.empty((T + 1, n_x))
    us = np.empty((T, n_u))
    zs = np.empty((T + 1, n_x))
    xs[0] = x0
    state = ControllerState.initial(x0)
    zs[0] = state.z
    X = cfg.Z.base
    cost = 0.0
    violations = 0
    residual = 0.0
    fallback_steps = 0
    for k in range(T):
        x_k = xs[k]
        try:
            step = mpc_step(x_k, state, cfg)
        except InitialInfeasible:
            return RunResult(xs[:1], us[:0], zs[:1], np.nan, 0, 0.0, 0, False)
        w = sample_noise(noise, rng)
        x_next = system.A @ x_k + system.B @ step.u + w
        xs[k + 1] = x_next
        zs[k + 1] = state.z
        us[k] = step.u
        cost += float(x_k @ (cfg.Q @ x_k) + step.u @ (cfg.R @ step.u))
        if not contains(X, x_k):
            violations += 1
        pred = gain.A_K @ (x_k - zs[k]) + w
        residual = max(residual, float(np.abs((x_next - zs[k + 1]) - pred).max()))
        if step.used_fallback:
            fallback_steps += 1
    return RunResult(xs, us, zs, cost / T, violations, residual, fallback_steps, True)


def monte_carlo(experiment, n_runs):
    """Aggregate closed-loop metrics over seeded replicates, in replicate order."""
    n_runs = int(n_runs)
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    total_cost = 0.0
    completed = 0
    violations = 0
    samples = 0
    infeasible = 0
    for r in range(n_runs):
        rng = RngStream(experiment.seed, r).generator()
        run = run_closed_loop(
            experiment.system, experiment.gain, experiment.mpc,
            experiment.noise, experiment.T, rng, experiment.x0,
        )
        if not run.feasible:
            infeasible += 1
            continue
        completed += 1
        total_cost += run.cost
        violations += run.violations
        samples += experiment.T
    avg = total_cost / completed if completed else float("nan")
    return SimMetrics(avg_cost=avg, violation_count=violations,
                      total_state_samples=samples, infeasible_at_start=infeasible,
                      runs=n_runs)


def reliability_experiment(gain, noise, M_list, theta_grid, n_mc, n_v, p, seed,
                           coord=1, lambda_min=1.0, sampling="stationary",
                           keep_etas=False):
    """Out-of-sample reliability of the radius over resampled training sets.

    For each data size and resample, the two-sided radius of the chosen error
    coordinate is synthesized at every radius on the grid, validated against
    one shared validation set, and summarized as the fraction of resamples
    whose empirical coverage reaches ``p``.
    """
    if n_mc < 1 or n_v < 1:
        raise DomainError("n_mc and n_v must be >= 1")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    eps = 1.0 - p
    theta_grid = [float(t) for t in theta_grid]
    sigma_e = stationary_error_cov(gain, noise)

    v_rng = RngStream(seed, 0).generator()
    validation = draw_error_samples(gain, noise, sampling, n_v, v_rng, sigma_e)
    v_sorted = np.sort(np.abs(validation.column(coord)))

    rows = []
    etas_by_m = {}
    for mi, M in enumerate(M_list):
        M = int(M)
        etas = np.full((n_mc, len(theta_grid)), np.nan)
        for i in range(n_mc):
            rng = RngStream(seed, 1 + mi * n_mc + i).generator()
            train = draw_error_samples(gain, noise, sampling, M, rng, sigma_e)
            losses = np.abs(train.column(coord))
            for j, theta in enumerate(theta_grid):
                if budget_infeasible(eps, theta, lambda_min):
                    continue
                cfg = DrConfig(epsilon=eps, theta=theta, lambda_min=lambda_min)
                etas[i, j] = wc_cvar_program(losses, cfg).eta
        etas_by_m[M] = etas
        for j, theta in enumerate(theta_grid):
            col = etas[:, j]
            if np.isnan(col).all():
                rows.append(ReliabilityRow(M, theta, float("nan"), float("nan"),
                                           float("nan"), float("nan"), feasible=False))
                continue
            p_tilde = np.searchsorted(v_sorted, col, side="right") / float(n_v)
            r = float(np.mean(p_tilde >= p))
            q05, q50, q95 = (float(np.quantile(col, q)) for q in (0.05, 0.5, 0.95))
            rows.append(ReliabilityRow(M, theta, r, q05, q50, q95))
    if keep_etas:
        return rows, etas_by_m
    return rows
