"""Dense linear-algebra kernels and scalar special functions.

Matrices and vectors are plain ``numpy.ndarray`` values with finite entries;
every function validates its inputs and returns freshly allocated arrays.
"""

import numpy as np
from scipy.special import ndtri

from .errors import DimensionMismatch, DomainError, NoConvergence, NonContractive, NotPsd

_SYM_TOL = 1e-12


def _as_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    return A


def _as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite entries")
    return v


def _require_square(A, name="matrix"):
    A = _as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    return A


def _require_symmetric(A, name="matrix", tol=_SYM_TOL):
    A = _require_square(A, name)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if float(np.abs(A - A.T).max(initial=0.0)) > tol * scale:
        raise DomainError(f"{name} is not symmetric within {tol}")
    return 0.5 * (A + A.T)


def solve_discrete_lyapunov(A, W, max_doublings=200):
    """Solve ``S = A S A^T + W`` for Schur-stable ``A`` and symmetric PSD ``W``.

    Uses the doubling fixed point ``S <- S + M S M^T``, ``M <- M^2``, which
    converges super-geometrically whenever the spectral radius of ``A`` is
    below one.  Divergence of the iterates signals a non-contractive ``A``.
    """
    A = _require_square(A, "A")
    W = _require_symmetric(W, "W")
    if A.shape != W.shape:
        raise DimensionMismatch(f"A is {A.shape} but W is {W.shape}")

    S = W.copy()
    M = A.copy()
    for _ in range(max_doublings):
        term = M @ S @ M.T
        S = S + term
        norm_s = float(np.abs(S).max(initial=0.0))
        if not np.isfinite(norm_s) or norm_s > 1e100:
            raise NonContractive("Lyapunov iteration diverged; spectral radius >= 1")
        if float(np.abs(term).max(initial=0.0)) <= 1e-15 * (1.0 + norm_s):
            S = 0.5 * (S + S.T)
            residual = float(np.abs(S - A @ S @ A.T - W).max(initial=0.0))
            if residual > 1e-10 * (1.0 + norm_s):
                raise NonContractive(
                    f"Lyapunov residual {residual:.3e} did not reach tolerance"
                )
            return S
        M = M @ M
    raise NonContractive("Lyapunov iteration failed to converge; spectral radius >= 1")


def psd_factor(S, neg_tol=1e-10):
    """Factor a symmetric PSD matrix as ``S = G G^T`` with ``G`` of full column rank.

    Rank deficiency is tolerated: eigenvalues below the numerical-rank cutoff
    are dropped, so ``G`` has one column per significant eigenvalue.
    """
    S = _require_symmetric(S, "S")
    n = S.shape[0]
    w, V = np.linalg.eigh(S)
    if w.size and float(w[0]) < -neg_tol:
        raise NotPsd(f"eigenvalue {w[0]:.3e} below -{neg_tol:.0e}")
    cutoff = max(float(w[-1]) if w.size else 0.0, 0.0) * n * np.finfo(float).eps
    keep = w > cutoff
    # Largest eigenvalue first, for a deterministic column order.
    idx = np.nonzero(keep)[0][::-1]
    G = V[:, idx] * np.sqrt(w[idx])
    return G.reshape(n, idx.size)


def std_normal_quantile(p):
    """Inverse standard normal CDF, exactly antisymmetric about ``p = 0.5``."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if p > 0.5:
        return float(-ndtri(1.0 - p))
    return float(ndtri(p))


def lqr_gain(A, B, Q, R, tol=1e-13, max_iter=200000):
    """Infinite-horizon discrete LQR gain via Riccati value iteration.

    Returns ``K`` such that ``u = K x`` minimizes the quadratic cost and
    ``A + B K`` is Schur stable.
    """
    A = _require_square(A, "A")
    B = _as_matrix(B, "B")
    Q = _require_symmetric(Q, "Q")
    R = _require_symmetric(R, "R")
    n = A.shape[0]
    if B.shape[0] != n or Q.shape[0] != n or R.shape[0] != B.shape[1]:
        raise DimensionMismatch("inconsistent LQR dimensions")

    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain_term = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ (BtP.T @ gain_term)
        P_next = 0.5 * (P_next + P_next.T)
        norm_p = float(np.abs(P_next).max(initial=0.0))
        if not np.isfinite(norm_p) or norm_p > 1e100:
            raise NoConvergence("Riccati iteration diverged; (A, B) not stabilizable?")
        if float(np.abs(P_next - P).max(initial=0.0)) <= tol * (1.0 + norm_p):
            P = P_next
            break
        P = P_next
    else:
        raise NoConvergence("Riccati iteration did not converge")

    BtP = B.T @ P
    K = -np.linalg.solve(R + BtP @ B, BtP @ A)
    if float(np.abs(np.linalg.eigvals(A + B @ K)).max(initial=0.0)) >= 1.0:
        raise NoConvergence("Riccati fixed point does not stabilize the plant")
    return K
