"""LTI plant, tube error dynamics, and the Gaussian ground-truth reachable set."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .linalg import (
    _as_matrix,
    _as_vector,
    _require_symmetric,
    psd_factor,
    solve_discrete_lyapunov,
    std_normal_quantile,
)


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant ``x(k+1) = A x(k) + B u(k) + w(k)``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class TubeGain:
    """Error-feedback gain ``K`` with the cached closed-loop matrix ``A_K = A + B K``."""

    K: np.ndarray
    A_K: np.ndarray

    @classmethod
    def from_gain(cls, system, K):
        K = _as_matrix(K, "K")
        if K.shape != (system.n_u, system.n_x):
            raise DimensionMismatch(
                f"K must be {system.n_u}x{system.n_x}, got {K.shape}"
            )
        A_K = system.A + system.B @ K
        # Schur stability check: the Lyapunov fixed point exists iff rho(A_K) < 1.
        solve_discrete_lyapunov(A_K, np.eye(system.n_x))
        return cls(K=K, A_K=A_K)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise ``w = G xi`` with ``xi`` i.i.d. standard normal."""

    G: np.ndarray

    def __post_init__(self):
        G = _as_matrix(self.G, "G")
        object.__setattr__(self, "G", G)

    @classmethod
    def from_covariance(cls, cov):
        return cls(G=psd_factor(_require_symmetric(cov, "cov")))

    @property
    def cov(self):
        return self.G @ self.G.T

    @property
    def rank(self):
        return self.G.shape[1]

    @property
    def dim(self):
        return self.G.shape[0]


def error_step(gain, e, w):
    """One step of the closed-loop error recursion ``e+ = A_K e + w``."""
    e = _as_vector(e, "e")
    w = _as_vector(w, "w")
    n = gain.A_K.shape[0]
    if e.size != n or w.size != n:
        raise DimensionMismatch(f"expected length-{n} vectors, got {e.size} and {w.size}")
    return gain.A_K @ e + w


def predicted_error(gain, e0, t):
    """Noise-free ``t``-step error propagation ``A_K^t e0``."""
    e0 = _as_vector(e0, "e0")
    t = int(t)
    if t < 0:
        raise DomainError("step index must be nonnegative")
    if e0.size != gain.A_K.shape[0]:
        raise DimensionMismatch(f"e0 has length {e0.size}, expected {gain.A_K.shape[0]}")
    return np.linalg.matrix_power(gain.A_K, t) @ e0


def stationary_error_cov(gain, noise):
    """Stationary covariance of the closed-loop error process."""
    return solve_discrete_lyapunov(gain.A_K, noise.cov)


def true_gaussian_prs(gain, noise, coord, p, sigma_e=None):
    """Exact symmetric reachable-set radius for one coordinate of Gaussian error.

    Returns the radius ``eta`` with ``P(|e_coord| <= eta) = p`` under the
    stationary Gaussian error distribution.  ``coord`` is zero-based.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if sigma_e is None:
        sigma_e = stationary_error_cov(gain, noise)
    coord = int(coord)
    if not 0 <= coord < sigma_e.shape[0]:
        raise DomainError(f"coordinate {coord} out of range")
    return float(np.sqrt(sigma_e[coord, coord]) * std_normal_quantile((1.0 + p) / 2.0))
