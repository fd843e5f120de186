"""Dense convex quadratic programming with KKT certification.

Solves ``min 0.5 x' P x + q' x  s.t.  A_in x <= b_in, A_eq x = b_eq`` with a
dual active-set method (Goldfarb-Idnani): start at the unconstrained minimum,
force the equalities active, then add violated inequalities one at a time
while keeping the working set dually feasible.  Every returned optimum is
certified by its scaled KKT residuals; infeasible problems return a Farkas
certificate ``(y, z)`` with ``y >= 0``, ``y'A_in + z'A_eq = 0`` and
``y'b_in + z'b_eq < 0``.  Identical inputs produce bit-identical outputs.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import BadProblem

KKT_TOL = 1e-6

_EQ = 0
_IN = 1


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def max(self):
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass(frozen=True)
class QpProblem:
    """Dense convex QP data; ``P_cost`` must be symmetric PSD."""

    P_cost: np.ndarray
    q: np.ndarray
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.asarray(self.P_cost, dtype=float)
        q = np.asarray(self.q, dtype=float).reshape(-1)
        d = q.size
        if P.shape != (d, d):
            raise BadProblem(f"P_cost is {P.shape}, expected ({d}, {d})")
        A_in = np.zeros((0, d)) if self.A_in is None else np.asarray(self.A_in, float)
        b_in = np.zeros(0) if self.b_in is None else np.asarray(self.b_in, float).reshape(-1)
        A_eq = np.zeros((0, d)) if self.A_eq is None else np.asarray(self.A_eq, float)
        b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).reshape(-1)
        if A_in.ndim != 2 or A_in.shape[1] != d or A_in.shape[0] != b_in.size:
            raise BadProblem("inequality block has inconsistent dimensions")
        if A_eq.ndim != 2 or A_eq.shape[1] != d or A_eq.shape[0] != b_eq.size:
            raise BadProblem("equality block has inconsistent dimensions")
        for name, arr in (("P_cost", P), ("q", q), ("A_in", A_in), ("b_in", b_in),
                          ("A_eq", A_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise BadProblem(f"{name} has non-finite entries")
        scale = max(1.0, float(np.abs(P).max(initial=0.0)))
        if float(np.abs(P - P.T).max(initial=0.0)) > 1e-10 * scale:
            raise BadProblem("P_cost is not symmetric within 1e-10")
        object.__setattr__(self, "P_cost", 0.5 * (P + P.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A_in", A_in)
        object.__setattr__(self, "b_in", b_in)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def d(self):
        return self.q.size

    @property
    def m(self):
        return self.A_in.shape[0]

    @property
    def n_eq(self):
        return self.A_eq.shape[0]


@dataclass(frozen=True)
class QpSolution:
    x_star: np.ndarray
    status: str  # optimal | primal_infeasible | max_iter
    objective: float
    kkt: Optional[KktResiduals]
    y: np.ndarray
    z: np.ndarray
    certificate: Optional[tuple] = None
    iterations: int = 0


class _Infeasible(Exception):
    def __init__(self, y, z):
        self.y = y
        self.z = z


class _Stalled(Exception):
    pass


class _ActiveSet:
    """Working set of tight constraints with dense re-solves per change."""

    def __init__(self, chol, A_in, A_eq):
        self.chol = chol
        self.A_in = A_in
        self.A_eq = A_eq
        self.kinds = []   # _EQ or _IN
        self.idxs = []
        self.u = []       # multipliers, aligned with kinds/idxs

    def gradients(self):
        rows = [self.A_eq[i] if k == _EQ else self.A_in[i]
                for k, i in zip(self.kinds, self.idxs)]
        return np.array(rows) if rows else np.zeros((0, self.A_in.shape[1]))

    def directions(self, g):
        """Primal/dual step directions for pushing constraint gradient ``g`` active."""
        gig = cho_solve(self.chol, g)
        if self.kinds:
            N = self.gradients()
            GN = cho_solve(self.chol, N.T)
            S = N @ GN
            try:
                w = np.linalg.solve(S, N @ gig)
            except np.linalg.LinAlgError as exc:
                raise _Stalled("degenerate working set") from exc
            xdir = -(gig - GN @ w)
            udir = -w
        else:
            xdir = -gig
            udir = np.zeros(0)
        denom = -float(g @ xdir)  # g H g' >= 0
        return xdir, udir, denom


def _farkas_from_directions(active, udir, kind, idx, sign, m, n_eq):
    y = np.zeros(m)
    z = np.zeros(n_eq)
    if kind == _IN:
        y[idx] = 1.0
    else:
        z[idx] = sign
    for coeff, (k, i) in zip(udir, zip(active.kinds, active.idxs)):
        value = sign * coeff if kind == _EQ else coeff
        if k == _IN:
            y[i] = max(value, 0.0)
        else:
            z[i] = value
    norm = max(float(np.abs(y).max(initial=0.0)), float(np.abs(z).max(initial=0.0)), 1.0)
    return y / norm, z / norm


def _dual_active_set(prob, chol, q, max_iter):
    d = prob.d
    x = -cho_solve(chol, q)
    active = _ActiveSet(chol, prob.A_in, prob.A_eq)
    feas_scale = 1.0 + max(
        float(np.abs(prob.b_in).max(initial=0.0)),
        float(np.abs(prob.b_eq).max(initial=0.0)),
    )
    feas_tol = 1e-10 * feas_scale
    iters = 0

    def take_step(t, xdir, udir):
        nonlocal x
        x = x + t * xdir
        for j in range(len(active.u)):
            active.u[j] += t * udir[j]

    # Phase 1: force every equality active (multipliers unrestricted in sign).
    for i in range(prob.n_eq):
        g = prob.A_eq[i]
        entering = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise _Stalled("iteration cap reached")
            v = float(g @ x - prob.b_eq[i])
            if abs(v) <= feas_tol:
                active.kinds.append(_EQ)
                active.idxs.append(i)
                active.u.append(entering)
                break
            xdir, udir, denom = active.directions(g)
            gscale = 1.0 + abs(float(g @ cho_solve(chol, g)))
            if denom <= 1e-12 * gscale:
                # Gradient lies in the span of the working set: the row is
                # either redundant (handled above) or inconsistent.
                raise _Infeasible(*_farkas_from_directions(
                    active, udir, _EQ, i, -1.0 if v < 0 else 1.0, prob.m, prob.n_eq))
            t = v / denom
            take_step(t, xdir, udir)
            entering += t

    # Phase 2: add violated inequalities, dropping blockers as needed.
    while True:
        iters += 1
        if iters > max_iter:
            raise _Stalled("iteration cap reached")
        viol = prob.A_in @ x - prob.b_in if prob.m else np.zeros(0)
        p = int(np.argmax(viol)) if prob.m else -1
        if p < 0 or viol[p] <= feas_tol:
            return x, active, iters
        g = prob.A_in[p]
        entering = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise _Stalled("iteration cap reached")
            v = float(g @ x - prob.b_in[p])
            if v <= feas_tol:
                break  # satisfied by a partial step; do not activate
            xdir, udir, denom = active.directions(g)
            t1 = np.inf
            blocker = -1
            for j, (k, _) in enumerate(zip(active.kinds, active.idxs)):
                if k == _IN and udir[j] < -1e-13:
                    ratio = -active.u[j] / udir[j]
                    if ratio < t1:
                        t1 = ratio
                        blocker = j
            gscale = 1.0 + abs(float(g @ cho_solve(chol, g)))
            t2 = v / denom if denom > 1e-12 * gscale else np.inf
            if not np.isfinite(min(t1, t2)):
                raise _Infeasible(*_farkas_from_directions(
                    active, udir, _IN, p, 1.0, prob.m, prob.n_eq))
            if t2 <= t1:
                take_step(t2, xdir, udir)
                entering += t2
                active.kinds.append(_IN)
                active.idxs.append(p)
                active.u.append(entering)
                break
            take_step(t1, xdir, udir)
            entering += t1
            del active.kinds[blocker], active.idxs[blocker], active.u[blocker]


def _multipliers(prob, active):
    y = np.zeros(prob.m)
    z = np.zeros(prob.n_eq)
    for k, i, u in zip(active.kinds, active.idxs, active.u):
        if k == _IN:
            y[i] = u
        else:
            z[i] = u
    return y, z


def kkt_residuals(prob, x, y, z):
    """Scaled KKT residuals of a candidate primal-dual point."""
    Px = prob.P_cost @ x
    terms = [Px, prob.q]
    stat_vec = Px + prob.q
    if prob.m:
        Aty = prob.A_in.T @ y
        stat_vec = stat_vec + Aty
        terms.append(Aty)
    if prob.n_eq:
        Atz = prob.A_eq.T @ z
        stat_vec = stat_vec + Atz
        terms.append(Atz)
    stat_scale = 1.0 + max(float(np.abs(t).max(initial=0.0)) for t in terms)
    stationarity = float(np.abs(stat_vec).max(initial=0.0)) / stat_scale

    prim_scale = 1.0 + max(
        float(np.abs(prob.b_in).max(initial=0.0)),
        float(np.abs(prob.b_eq).max(initial=0.0)),
        float(np.abs(prob.A_in @ x).max(initial=0.0)) if prob.m else 0.0,
        float(np.abs(prob.A_eq @ x).max(initial=0.0)) if prob.n_eq else 0.0,
    )
    res_in = float(np.maximum(prob.A_in @ x - prob.b_in, 0.0).max(initial=0.0)) if prob.m else 0.0
    res_eq = float(np.abs(prob.A_eq @ x - prob.b_eq).max(initial=0.0)) if prob.n_eq else 0.0
    primal = max(res_in, res_eq) / prim_scale

    dual = max(0.0, -float(y.min(initial=0.0))) / (1.0 + float(np.abs(y).max(initial=0.0)))

    if prob.m:
        comp_scale = 1.0 + float(np.abs(y).max(initial=0.0)) * prim_scale
        complementarity = float(np.abs(y * (prob.A_in @ x - prob.b_in)).max(initial=0.0)) / comp_scale
    else:
        complementarity = 0.0
    return KktResiduals(stationarity, primal, dual, complementarity)


def _certificate_valid(prob, y, z):
    if np.any(y < -1e-9):
        return False
    comb = y @ prob.A_in + z @ prob.A_eq
    scale = max(float(np.abs(y).max(initial=0.0)), float(np.abs(z).max(initial=0.0)))
    if scale <= 0.0:
        return False
    row_scale = 1.0 + max(
        float(np.abs(prob.A_in).max(initial=0.0)),
        float(np.abs(prob.A_eq).max(initial=0.0)),
    )
    if float(np.abs(comb).max(initial=0.0)) > 1e-7 * scale * row_scale:
        return False
    value = float(y @ prob.b_in + z @ prob.b_eq)
    bound_scale = 1.0 + max(
        float(np.abs(prob.b_in).max(initial=0.0)),
        float(np.abs(prob.b_eq).max(initial=0.0)),
    )
    return value < -1e-9 * scale * bound_scale


def _objective(prob, x):
    return float(0.5 * x @ (prob.P_cost @ x) + prob.q @ x)


def solve_qp(prob, max_iter=None):
    """Solve a convex QP; never returns an uncertified optimum.

    Returns a :class:`QpSolution` whose status is ``optimal`` only when all
    scaled KKT residuals are below ``1e-6``, ``primal_infeasible`` only with a
    verified Farkas certificate, and ``max_iter`` otherwise.
    """
    if not isinstance(prob, QpProblem):
        prob = QpProblem(*prob)
    d = prob.d
    if max_iter is None:
        max_iter = 200 + 10 * (prob.m + prob.n_eq)

    p_scale = float(np.abs(prob.P_cost).max(initial=0.0))
    try:
        chol = cho_factor(prob.P_cost, lower=True)
        singular = False
    except np.linalg.LinAlgError:
        singular = True
    if singular:
        # Proximal regularization for semidefinite costs: iterate the strictly
        # convex shifted problem until the fixed point certifies the original.
        rho = 1e-8 * (1.0 + p_scale)
        chol = cho_factor(prob.P_cost + rho * np.eye(d), lower=True)
        x_prev = np.zeros(d)
        total_iters = 0
        for _ in range(100):
            try:
                x, active, iters = _dual_active_set(
                    prob, chol, prob.q - rho * x_prev, max_iter)
            except _Infeasible as exc:
                if _certificate_valid(prob, exc.y, exc.z):
                    return QpSolution(np.full(d, np.nan), "primal_infeasible",
                                      np.nan, None, exc.y, exc.z,
                                      certificate=(exc.y, exc.z))
                return QpSolution(np.full(d, np.nan), "max_iter", np.nan, None,
                                  np.zeros(prob.m), np.zeros(prob.n_eq))
            except _Stalled:
                return QpSolution(np.full(d, np.nan), "max_iter", np.nan, None,
                                  np.zeros(prob.m), np.zeros(prob.n_eq))
            total_iters += iters
            if float(np.abs(x - x_prev).max(initial=0.0)) <= 1e-10 * (1.0 + float(np.abs(x).max())):
                x_prev = x
                break
            x_prev = x
        x = x_prev
        y, z = _multipliers(prob, active)
        kkt = kkt_residuals(prob, x, y, z)
        status = "optimal" if kkt.max <= KKT_TOL else "max_iter"
        return QpSolution(x, status, _objective(prob, x), kkt, y, z,
                          iterations=total_iters)

    try:
        x, active, iters = _dual_active_set(prob, chol, prob.q, max_iter)
    except _Infeasible as exc:
        if _certificate_valid(prob, exc.y, exc.z):
            return QpSolution(np.full(d, np.nan), "primal_infeasible", np.nan,
                              None, exc.y, exc.z, certificate=(exc.y, exc.z))
        return QpSolution(np.full(d, np.nan), "max_iter", np.nan, None,
                          np.zeros(prob.m), np.zeros(prob.n_eq))
    except _Stalled:
        return QpSolution(np.full(d, np.nan), "max_iter", np.nan, None,
                          np.zeros(prob.m), np.zeros(prob.n_eq))
    y, z = _multipliers(prob, active)
    kkt = kkt_residuals(prob, x, y, z)
    status = "optimal" if kkt.max <= KKT_TOL else "max_iter"
    return QpSolution(x, status, _objective(prob, x), kkt, y, z, iterations=iters)


def feasibility_slack(A_in=None, b_in=None, A_eq=None, b_eq=None):
    """Minimal uniform slack making the constraint system solvable.

    Solves ``min s^2 + 1e-8 ||x||^2`` subject to ``A_in x <= b_in + s`` and
    ``|A_eq x - b_eq| <= s`` with ``s >= 0``; the auxiliary QP is always
    strictly feasible.  A point is customarily declared feasible when the
    returned slack is at most ``1e-6``.
    """
    A_in = np.zeros((0, 0)) if A_in is None else np.asarray(A_in, dtype=float)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).reshape(-1)
    A_eq = np.zeros((0, 0)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if A_in.size == 0 and A_eq.size == 0 and b_in.size == 0 and b_eq.size == 0:
        return 0.0
    dims = {A.shape[1] for A in (A_in, A_eq) if A.shape[0]}
    if len(dims) > 1:
        raise BadProblem("inequality and equality blocks disagree on dimension")
    d = dims.pop() if dims else 0
    m, n_eq = A_in.shape[0], A_eq.shape[0]
    if m != b_in.size or n_eq != b_eq.size:
        raise BadProblem("right-hand sides do not match their constraint blocks")

    P = np.diag(np.concatenate([np.full(d, 2e-8), [2.0]]))
    q = np.zeros(d + 1)
    ones = lambda k: -np.ones((k, 1))
    rows = []
    rhs = []
    if m:
        rows.append(np.hstack([A_in, ones(m)]))
        rhs.append(b_in)
    if n_eq:
        rows.append(np.hstack([A_eq, ones(n_eq)]))
        rhs.append(b_eq)
        rows.append(np.hstack([-A_eq, ones(n_eq)]))
        rhs.append(-b_eq)
    rows.append(np.hstack([np.zeros((1, d)), ones(1)]))
    rhs.append(np.zeros(1))
    sol = solve_qp(QpProblem(P, q, np.vstack(rows), np.concatenate(rhs)))
    if sol.status != "optimal":
        raise BadProblem(f"slack problem did not certify: status {sol.status}")
    s = float(sol.x_star[-1])
    return s if s > 0.0 else 0.0
