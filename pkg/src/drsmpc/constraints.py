"""Halfspace polytopes and reachable-set constraint tightening."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DomainError
from .linalg import _as_matrix, _as_vector


@dataclass(frozen=True)
class Halfspaces:
    """Polytope ``{x : H x <= h}`` in halfspace form."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2:
            raise DimensionMismatch(f"H must be 2-D, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise DomainError("H has non-finite entries")
        h = _as_vector(self.h, "h")
        if h.size != H.shape[0]:
            raise DimensionMismatch(f"h has {h.size} entries for {H.shape[0]} rows")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @classmethod
    def constraint_set(cls, H, h):
        """Constructor for state/input constraint sets: origin must be interior."""
        out = cls(H=_as_matrix(H, "H"), h=np.asarray(h, dtype=float))
        if out.n_rows and not np.all(out.h > 0.0):
            raise DomainError("constraint sets must contain the origin in their interior")
        return out

    @classmethod
    def all_space(cls, dim):
        return cls(H=np.zeros((0, dim)), h=np.zeros(0))

    @property
    def n_rows(self):
        return self.H.shape[0]

    @property
    def dim(self):
        return self.H.shape[1]


@dataclass(frozen=True)
class TightenedSet:
    """Row-wise tightened polytope ``{x : H x <= h - offsets}``."""

    base: Halfspaces
    offsets: np.ndarray
    h_tight: np.ndarray = field(init=False)
    empty_flag: bool = field(init=False)

    def __post_init__(self):
        offsets = _as_vector(self.offsets, "offsets")
        if offsets.size != self.base.n_rows:
            raise DimensionMismatch(
                f"{offsets.size} offsets for {self.base.n_rows} rows"
            )
        h_tight = self.base.h - offsets
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "h_tight", h_tight)
        # Conservative interior test: a nonpositive tightened bound on any
        # required row certifies emptiness of the interior.
        object.__setattr__(self, "empty_flag", bool(np.any(h_tight <= 0.0)))

    @property
    def H(self):
        return self.base.H

    @property
    def n_rows(self):
        return self.base.n_rows

    @property
    def dim(self):
        return self.base.dim


def tighten(X, etas):
    """Tighten each row bound by its radius: ``h'_i = h_i - eta_i``."""
    return TightenedSet(base=X, offsets=etas)


def tighten_with_box(X, box):
    """Tighten by a symmetric box via its exact support function per row.

    ``box`` must be a box-kind :class:`~drsmpc.drprs.DrPrsResult`; coordinates
    the box does not bound may only appear with zero coefficient in ``X``.
    """
    if getattr(box, "kind", None) != "box":
        raise DomainError("tighten_with_box requires a box-kind reachable set")
    coords = box.coords if box.coords is not None else tuple(range(X.dim))
    eta_full = np.zeros(X.dim)
    bounded = np.zeros(X.dim, dtype=bool)
    for c, eta in zip(coords, box.etas):
        eta_full[c] = eta
        bounded[c] = True
    uses_unbounded = np.abs(X.H[:, ~bounded]).sum() if not bounded.all() else 0.0
    if uses_unbounded > 0.0:
        raise DimensionMismatch(
            "constraint rows touch coordinates the box does not bound"
        )
    offsets = np.abs(X.H) @ eta_full
    return TightenedSet(base=X, offsets=offsets)


def contains(S, x, tol=1e-9):
    """Membership test ``H x <= h`` (componentwise, with tolerance)."""
    x = _as_vector(x, "x")
    H = S.H
    h = S.h_tight if isinstance(S, TightenedSet) else S.h
    if x.size != H.shape[1]:
        raise DimensionMismatch(f"point has dimension {x.size}, set has {H.shape[1]}")
    if H.shape[0] == 0:
        return True
    return bool(np.all(H @ x <= h + tol))
