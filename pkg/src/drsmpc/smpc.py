"""Indirect-feedback stochastic MPC: condensed QP, receding-horizon stepping,
and feasible-region scanning.

The decision vector is the nominal input sequence ``v(0..N-1)``; nominal
states are eliminated by condensing.  Constraints bind the nominal trajectory
only (tightened sets, terminal state pinned to the origin), while the measured
error enters the cost through the predicted state/input means.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraints import TightenedSet
from .errors import DimensionMismatch, DomainError, InitialInfeasible, TightenedSetEmpty
from .linalg import _as_matrix, _as_vector, _require_symmetric
from .qp import QpProblem, feasibility_slack, solve_qp


@dataclass(eq=False)
class MpcConfig:
    """Horizon, weights, and tightened constraint sets for one controller."""

    system: object
    gain: object
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Z: TightenedSet
    V: Optional[TightenedSet] = None
    terminal_equality: bool = True
    _cache: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise DomainError(f"horizon must be >= 1, got {self.horizon}")
        Q = _require_symmetric(_as_matrix(self.Q, "Q"), "Q")
        R = _require_symmetric(_as_matrix(self.R, "R"), "R")
        P = _require_symmetric(_as_matrix(self.P, "P"), "P")
        n_x, n_u = self.system.n_x, self.system.n_u
        if Q.shape != (n_x, n_x) or P.shape != (n_x, n_x) or R.shape != (n_u, n_u):
            raise DimensionMismatch("weight dimensions do not match the plant")
        if np.linalg.eigvalsh(Q)[0] < -1e-10:
            raise DomainError("Q must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise DomainError("R must be positive definite") from None
        A_K, K = self.gain.A_K, self.gain.K
        residual = np.abs(A_K.T @ P @ A_K + Q + K.T @ R @ K - P).max()
        if residual > 1e-8 * (1.0 + np.abs(P).max()):
            raise DomainError(
                f"terminal weight violates its Lyapunov equation (residual {residual:.3e})"
            )
        if self.Z.dim != n_x:
            raise DimensionMismatch("state constraint set dimension mismatch")
        if self.V is not None and self.V.dim != n_u:
            raise DimensionMismatch("input constraint set dimension mismatch")
        self.Q, self.R, self.P = Q, R, P

    @classmethod
    def from_lyapunov(cls, system, gain, horizon, Q, R, Z, V=None, terminal_equality=True):
        """Build the terminal weight from its Lyapunov equation."""
        from .linalg import solve_discrete_lyapunov

        Q = _as_matrix(Q, "Q")
        R = _as_matrix(R, "R")
        P = solve_discrete_lyapunov(gain.A_K.T, Q + gain.K.T @ R @ gain.K)
        return cls(system=system, gain=gain, horizon=horizon, Q=Q, R=R, P=P, Z=Z,
                   V=V, terminal_equality=terminal_equality)


class _Condensed:
    """Static parts of the condensed QP for a fixed configuration."""

    def __init__(self, cfg):
        A, B = cfg.system.A, cfg.system.B
        K, A_K = cfg.gain.K, cfg.gain.A_K
        N = cfg.horizon
        n_x, n_u = cfg.system.n_x, cfg.system.n_u
        d = N * n_u

        Apow = [np.eye(n_x)]
        Akpow = [np.eye(n_x)]
        for _ in range(N):
            Apow.append(A @ Apow[-1])
            Akpow.append(A_K @ Akpow[-1])

        G = [np.zeros((n_x, d))]
        for t in range(1, N + 1):
            Gt = np.zeros((n_x, d))
            for j in range(t):
                Gt[:, j * n_u:(j + 1) * n_u] = Apow[t - 1 - j] @ B
            G.append(Gt)

        hess = np.zeros((d, d))
        Wz = np.zeros((d, n_x))
        We = np.zeros((d, n_x))
        for t in range(N):
            hess += G[t].T @ cfg.Q @ G[t]
            sl = slice(t * n_u, (t + 1) * n_u)
            hess[sl, sl] += cfg.R
            Wz += G[t].T @ cfg.Q @ Apow[t]
            We += G[t].T @ cfg.Q @ Akpow[t]
            We[sl] += cfg.R @ K @ Akpow[t]
        hess += G[N].T @ cfg.P @ G[N]
        Wz += G[N].T @ cfg.P @ Apow[N]
        We += G[N].T @ cfg.P @ Akpow[N]

        self.P_cost = hess + hess.T  # 2x, symmetrized
        self.Wz = 2.0 * Wz
        self.We = 2.0 * We

        blocks_A = []
        blocks_F = []
        HZ, hz = cfg.Z.H, cfg.Z.h_tight
        for t in range(1, N):
            blocks_A.append(HZ @ G[t])
            blocks_F.append(HZ @ Apow[t])
        self.state_A = np.vstack(blocks_A) if blocks_A else np.zeros((0, d))
        self.state_F = np.vstack(blocks_F) if blocks_F else np.zeros((0, n_x))
        self.state_h = np.tile(hz, max(N - 1, 0))

        if cfg.V is not None and cfg.V.n_rows:
            LV, lv = cfg.V.H, cfg.V.h_tight
            in_A = np.zeros((N * LV.shape[0], d))
            for t in range(N):
                in_A[t * LV.shape[0]:(t + 1) * LV.shape[0], t * n_u:(t + 1) * n_u] = LV
            self.input_A = in_A
            self.input_h = np.tile(lv, N)
        else:
            self.input_A = np.zeros((0, d))
            self.input_h = np.zeros(0)

        self.A_in = np.vstack([self.state_A, self.input_A])
        if cfg.terminal_equality:
            self.A_eq = G[N]
            self.F_N = Apow[N]
        else:
            self.A_eq = np.zeros((0, d))
            self.F_N = np.zeros((0, n_x))
        self.Apow = Apow
        self.Akpow = Akpow
        self.cfg = cfg
        self.n_u = n_u

    def parts(self, z0, e):
        q = self.Wz @ z0 + self.We @ e
        b_in = np.concatenate([self.state_h - self.state_F @ z0, self.input_h])
        b_eq = -self.F_N @ z0 if self.A_eq.shape[0] else np.zeros(0)
        return q, b_in, b_eq

    def cost_offset(self, z0, e):
        """Constant cost terms dropped from the QP objective."""
        cfg = self.cfg
        total = 0.0
        for t in range(cfg.horizon):
            mu = self.Apow[t] @ z0 + self.Akpow[t] @ e
            ke = cfg.gain.K @ (self.Akpow[t] @ e)
            total += float(mu @ (cfg.Q @ mu) + ke @ (cfg.R @ ke))
        mu = self.Apow[cfg.horizon] @ z0 + self.Akpow[cfg.horizon] @ e
        return total + float(mu @ (cfg.P @ mu))


def _condensed(cfg):
    if cfg._cache is None:
        cfg._cache = _Condensed(cfg)
    return cfg._cache


def _check_nonempty(cfg):
    if cfg.Z.empty_flag:
        raise TightenedSetEmpty("tightened state set is empty")
    if cfg.V is not None and cfg.V.empty_flag:
        raise TightenedSetEmpty("tightened input set is empty")


def build_mpc_qp(x_k, z_k, cfg):
    """Condensed QP in the nominal input sequence for the current states."""
    _check_nonempty(cfg)
    x_k = _as_vector(x_k, "x_k")
    z_k = _as_vector(z_k, "z_k")
    if x_k.size != cfg.system.n_x or z_k.size != cfg.system.n_x:
        raise DimensionMismatch("state vectors do not match the plant dimension")
    cond = _condensed(cfg)
    q, b_in, b_eq = cond.parts(z_k, x_k - z_k)
    return QpProblem(cond.P_cost, q, cond.A_in, b_in,
                     cond.A_eq if cond.A_eq.shape[0] else None,
                     b_eq if cond.A_eq.shape[0] else None)


@dataclass
class ControllerState:
    """Mutable per-run controller memory: nominal state, shift fallback, step count."""

    z: np.ndarray
    k: int = 0
    fallback: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, x0):
        # The nominal state starts at the plant state, so e(0) = 0.
        return cls(z=_as_vector(x0, "x0").copy(), k=0, fallback=None)


@dataclass(frozen=True)
class StepResult:
    u: np.ndarray
    v0: np.ndarray
    status: str
    used_fallback: bool
    objective: float
    solution: object = None


def mpc_step(x_k, state, cfg):
    """One receding-horizon step: solve, apply the tube law, advance the nominal state.

    Solver failures after a feasible start fall back to the shifted previous
    optimal sequence (appending a zero terminal input), which keeps the
    nominal trajectory inside its constraints.
    """
    x_k = _as_vector(x_k, "x_k")
    if not np.all(np.isfinite(x_k)):
        raise DomainError("plant state is not finite")
    try:
        prob = build_mpc_qp(x_k, state.z, cfg)
    except TightenedSetEmpty as exc:
        if state.k == 0:
            raise InitialInfeasible(str(exc)) from exc
        raise
    sol = solve_qp(prob)
    used_fallback = False
    if sol.status == "optimal":
        v_seq = sol.x_star
    elif state.k == 0:
        raise InitialInfeasible(f"first MPC problem returned status {sol.status}")
    else:
        v_seq = state.fallback
        used_fallback = True

    n_u = cfg.system.n_u
    v0 = v_seq[:n_u].copy()
    e_k = x_k - state.z
    u = v0 + cfg.gain.K @ e_k
    objective = np.nan
    if sol.status == "optimal":
        objective = sol.objective + _condensed(cfg).cost_offset(state.z, e_k)

    state.fallback = np.concatenate([v_seq[n_u:], np.zeros(n_u)])
    state.z = cfg.system.A @ state.z + cfg.system.B @ v0
    state.k += 1
    return StepResult(u=u, v0=v0, status=sol.status, used_fallback=used_fallback,
                      objective=objective, solution=sol)


def feasible_region_scan(grid, cfg, slack_tol=1e-6):
    """Initial-state feasibility over a list of points (nominal state pinned there)."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    try:
        _check_nonempty(cfg)
    except TightenedSetEmpty:
        return np.zeros(grid.shape[0], dtype=bool)
    cond = _condensed(cfg)
    out = np.zeros(grid.shape[0], dtype=bool)
    for i, x0 in enumerate(grid):
        _, b_in, b_eq = cond.parts(x0, np.zeros_like(x0))
        slack = feasibility_slack(
            cond.A_in, b_in,
            cond.A_eq if cond.A_eq.shape[0] else None,
            b_eq if cond.A_eq.shape[0] else None,
        )
        out[i] = slack <= slack_tol
    return out
