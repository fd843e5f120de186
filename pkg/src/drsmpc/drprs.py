"""Empirical and distributionally robust risk functionals and reachable-set synthesis.

The worst-case CVaR program over a Wasserstein ball with a fixed dual
multiplier is one-dimensional and piecewise linear in the threshold, so it is
solved exactly by sorting: the optimizer is ``max(q, tau_c)`` where ``q`` is
the empirical quantile (left endpoint of the unconstrained argmin) and
``tau_c`` is the smallest threshold whose mean excess fits the transport
budget.  At ``theta = 0`` the budget constraint is vacuous and the program
reduces to the plain sample-average CVaR/VaR.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constraints import Halfspaces
from .errors import (
    AllocationError,
    DimensionMismatch,
    DomainError,
    EmptySampleSet,
    InfeasibleRadius,
)

MODES = ("var_byproduct", "cvar")


@dataclass(frozen=True)
class SampleSet:
    """M x n_x matrix whose rows are i.i.d. closed-loop error samples."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise DimensionMismatch(f"samples must be 2-D, got shape {samples.shape}")
        if samples.shape[0] < 1:
            raise EmptySampleSet("at least one sample is required")
        if not np.all(np.isfinite(samples)):
            raise DomainError("samples contain non-finite entries")
        object.__setattr__(self, "samples", samples)

    @property
    def m(self):
        return self.samples.shape[0]

    @property
    def n_x(self):
        return self.samples.shape[1]

    def column(self, i):
        return self.samples[:, int(i)]


@dataclass(frozen=True)
class DrConfig:
    """Risk level, Wasserstein radius, and dual-multiplier floor for one direction."""

    epsilon: float
    theta: float = 0.0
    lambda_min: float = 1.0
    mode: str = "var_byproduct"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.theta < 0.0:
            raise DomainError(f"theta must be nonnegative, got {self.theta}")
        if self.lambda_min <= 0.0:
            raise DomainError(f"lambda_min must be positive, got {self.lambda_min}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class RiskResult:
    """Radius (VaR byproduct), worst-case CVaR value, and the multiplier used."""

    eta: float
    cvar: float
    lambda_: float
    feasible: bool


@dataclass(frozen=True)
class DrPrsResult:
    """Per-direction radii of a distributionally robust probabilistic reachable set."""

    etas: np.ndarray
    epsilons: np.ndarray
    theta: float
    p: float
    kind: str
    coords: Optional[tuple] = None


def _sorted_losses(losses):
    a = np.asarray(losses, dtype=float).reshape(-1)
    if a.size == 0:
        raise EmptySampleSet("loss vector is empty")
    if not np.all(np.isfinite(a)):
        raise DomainError("losses contain non-finite entries")
    return np.sort(a)


def _quantile_index(m, epsilon):
    # ceil((1 - eps) * M), guarded against FP noise at exact-integer boundaries.
    k = int(math.ceil((1.0 - epsilon) * m - 1e-9))
    return min(max(k, 1), m)


def _mean_excess(a, tau):
    return float(np.maximum(a - tau, 0.0).mean())


def _budget_crossing(a, slack):
    """Smallest tau with mean positive excess of the samples over tau <= slack."""
    m = a.size
    if slack <= 0.0:
        return float(a[-1])
    suffix = np.cumsum(a[::-1])[::-1]
    counts = m - np.arange(m)
    gbar = (suffix - counts * a) / m
    idx = int(np.argmax(gbar <= slack))  # gbar is nonincreasing; last value is 0
    if idx == 0 and gbar[0] > slack:  # unreachable, argmax guard
        idx = m - 1
    if idx == 0:
        return float((suffix[0] - m * slack) / m)
    return float((suffix[idx] - m * slack) / (m - idx))


def budget_infeasible(epsilon, theta, lambda_min):
    """True when the transport budget exceeds the risk level (beyond FP noise)."""
    return theta * lambda_min > epsilon * (1.0 + 1e-12)


def _cvar_core(a, epsilon, theta, lambda_min):
    budget = theta * lambda_min
    if budget_infeasible(epsilon, theta, lambda_min):
        raise InfeasibleRadius(
            f"theta * lambda_min = {budget} exceeds epsilon = {epsilon}"
        )
    q = float(a[_quantile_index(a.size, epsilon) - 1])
    if theta == 0.0:
        eta = q
    else:
        eta = max(q, _budget_crossing(a, epsilon - budget))
    cvar = eta + (budget + _mean_excess(a, eta)) / epsilon
    return eta, cvar


def empirical_cvar(losses, epsilon):
    """Sample-average CVaR at level ``epsilon``; ``eta`` is the empirical VaR.

    ``eta`` is the left endpoint of the Rockafellar-Uryasev argmin, i.e. the
    ``ceil((1 - epsilon) M)``-th order statistic.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    a = _sorted_losses(losses)
    eta, cvar = _cvar_core(a, epsilon, 0.0, 1.0)
    return RiskResult(eta=eta, cvar=cvar, lambda_=0.0, feasible=True)


def wc_cvar_program(losses, cfg):
    """Worst-case CVaR over a Wasserstein ball, dual multiplier fixed at its floor.

    Raises :class:`InfeasibleRadius` when ``theta * lambda_min > epsilon``; at
    ``theta = 0`` the result equals :func:`empirical_cvar` bit for bit.
    """
    a = _sorted_losses(losses)
    eta, cvar = _cvar_core(a, cfg.epsilon, cfg.theta, cfg.lambda_min)
    return RiskResult(eta=eta, cvar=cvar, lambda_=cfg.lambda_min, feasible=True)


def dr_cvar_closed_form(losses, epsilon, theta):
    """Wasserstein-robust CVaR upper bound: empirical CVaR plus ``theta / epsilon``.

    Independent of :func:`wc_cvar_program`; used as a cross-check oracle and
    for the ``cvar`` synthesis mode.
    """
    base = empirical_cvar(losses, epsilon)
    return base.cvar + theta / epsilon


def _check_allocation(epsilons, p, count):
    epsilons = np.asarray(epsilons, dtype=float).reshape(-1)
    if epsilons.size != count:
        raise DimensionMismatch(
            f"allocation has {epsilons.size} entries, expected {count}"
        )
    if np.any(epsilons <= 0.0):
        raise AllocationError("every allocated risk level must be positive")
    if float(epsilons.sum()) > (1.0 - p) * (1.0 + 1e-12):
        raise AllocationError(
            f"allocated risk {epsilons.sum()} exceeds the budget {1.0 - p}"
        )
    return epsilons


def synthesize_box_prs(
    samples,
    p,
    theta,
    allocation=None,
    coords: Optional[Sequence[int]] = None,
    mode="var_byproduct",
    lambda_min=1.0,
):
    """Symmetric box reachable set: one radius per listed coordinate.

    Marginal losses ``|e_i|`` are pushed through the worst-case CVaR program
    at the allocated risk level (default: the budget ``1 - p`` split uniformly
    over the listed coordinates).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if coords is None:
        coords = tuple(range(samples.n_x))
    else:
        coords = tuple(int(c) for c in coords)
    if allocation is None:
        allocation = np.full(len(coords), (1.0 - p) / len(coords))
    epsilons = _check_allocation(allocation, p, len(coords))

    etas = np.empty(len(coords))
    for j, (c, eps) in enumerate(zip(coords, epsilons)):
        result = wc_cvar_program(
            np.abs(samples.column(c)),
            DrConfig(epsilon=float(eps), theta=theta, lambda_min=lambda_min, mode=mode),
        )
        etas[j] = result.eta if mode == "var_byproduct" else result.cvar
    return DrPrsResult(
        etas=etas, epsilons=epsilons, theta=float(theta), p=float(p), kind="box",
        coords=coords,
    )


def _symmetric_pairs(H):
    """Greedy pairing of rows (i, j) with H_j = -H_i; unpaired rows stay one-sided."""
    n = H.shape[0]
    partner = [-1] * n
    for i in range(n):
        if partner[i] >= 0:
            continue
        for j in range(i + 1, n):
            if partner[j] < 0 and np.allclose(H[j], -H[i], rtol=1e-12, atol=1e-14):
                partner[i] = j
                partner[j] = i
                break
    return partner


def synthesize_halfspace_prs(
    samples,
    rows,
    p,
    theta,
    allocation=None,
    symmetric_pairs=False,
    mode="var_byproduct",
    lambda_min=1.0,
):
    """Halfspace reachable set on the given constraint rows.

    Each row ``H_i`` gets the one-sided loss ``H_i e`` at its allocated risk
    level.  With ``symmetric_pairs`` enabled, rows detected as negatives of
    each other share a single two-sided loss ``|H_i e|`` at their combined
    risk level and receive equal radii.
    """
    if not isinstance(rows, Halfspaces):
        raise DimensionMismatch("rows must be a Halfspaces value")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    H = rows.H
    if H.shape[1] != samples.n_x:
        raise DimensionMismatch(
            f"rows act on R^{H.shape[1]} but samples live in R^{samples.n_x}"
        )
    n_rows = H.shape[0]
    if allocation is None:
        allocation = np.full(n_rows, (1.0 - p) / n_rows)
    epsilons = _check_allocation(allocation, p, n_rows)

    partner = _symmetric_pairs(H) if symmetric_pairs else [-1] * n_rows
    projected = samples.samples @ H.T
    etas = np.empty(n_rows)
    done = [False] * n_rows
    for i in range(n_rows):
        if done[i]:
            continue
        j = partner[i]
        if j >= 0:
            losses = np.abs(projected[:, i])
            eps = float(epsilons[i] + epsilons[j])
        else:
            losses = projected[:, i]
            eps = float(epsilons[i])
        result = wc_cvar_program(
            losses, DrConfig(epsilon=eps, theta=theta, lambda_min=lambda_min, mode=mode)
        )
        value = result.eta if mode == "var_byproduct" else result.cvar
        etas[i] = value
        done[i] = True
        if j >= 0:
            etas[j] = value
            done[j] = True
    return DrPrsResult(
        etas=etas, epsilons=epsilons, theta=float(theta), p=float(p), kind="halfspace",
    )
