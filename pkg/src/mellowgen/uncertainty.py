"""Reward-uncertainty sets dual to the regularizer family.

A regularized policy objective is worst-case optimal against reward
perturbations delta with conjugate value at most zero.  For this family
the membership test has the canonical closed form

    sum_a d(a)^q * exp(-omega * delta(a)) <= 1,

with d^q = 1 for the pure-entropy case.  Multi-step (Minkowski-sum)
sets reduce to the per-step test at delta / k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

BOUNDARY_TOL = 1e-9

_KINDS = ("neg-shannon", "kl", "gm")


class Membership(NamedTuple):
    status: str  # "inside" | "boundary" | "outside"
    margin: float  # sum_a d^q exp(-omega delta) - 1


@dataclass(frozen=True)
class UncertaintySetSpec:
    """One per-state reward perturbation set.

    kind selects the regularizer: "neg-shannon" behaves as q=0, "kl" as
    q=1, and "gm" uses the explicit q.  The reference distribution d is
    required for kl/gm; r0 is the nominal reward the set is centered on
    (zero when omitted).
    """

    kind: str
    omega: float = 1.0
    q: float = None
    d: tuple = None
    r0: tuple = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        if not (self.omega > 0) or not np.isfinite(self.omega):
            raise ValueError("omega must be positive and finite")
        if self.kind in ("kl", "gm"):
            if self.d is None:
                raise ValueError(f"kind {self.kind!r} requires a reference d")
            d = np.asarray(self.d, dtype=float)
            if np.any(d < 0) or abs(float(d.sum()) - 1.0) > 1e-9:
                raise ValueError("d is not a distribution")
            object.__setattr__(self, "d", tuple(float(v) for v in d))
        if self.kind == "gm":
            if self.q is None or not (0.0 <= self.q <= 1.0):
                raise ValueError("gm kind requires q in [0, 1]")
        if self.r0 is not None:
            r0 = np.asarray(self.r0, dtype=float)
            if not np.all(np.isfinite(r0)):
                raise ValueError("r0 must be finite")
            object.__setattr__(self, "r0", tuple(float(v) for v in r0))

    @property
    def effective_q(self) -> float:
        if self.kind == "neg-shannon":
            return 0.0
        if self.kind == "kl":
            return 1.0
        return float(self.q)

    def weights(self, arity: int) -> np.ndarray:
        """The d^q factors of the membership sum (0^0 := 1)."""
        if self.d is not None:
            d = np.asarray(self.d, dtype=float)
            if len(d) != arity:
                raise ValueError(f"reference d has arity {len(d)}, reward has {arity}")
            return d ** self.effective_q
        return np.ones(arity)

    def nominal(self, arity: int) -> np.ndarray:
        if self.r0 is None:
            return np.zeros(arity)
        r0 = np.asarray(self.r0, dtype=float)
        if len(r0) != arity:
            raise ValueError(f"r0 has arity {len(r0)}, reward has {arity}")
        return r0


def _margin(spec: UncertaintySetSpec, delta: np.ndarray) -> float:
    w = spec.weights(len(delta))
    with np.errstate(over="ignore"):
        m = float(np.sum(w * np.exp(-spec.omega * delta)))
    return m - 1.0


def _classify(margin: float, tol: float = BOUNDARY_TOL) -> Membership:
    if abs(margin) <= tol:
        return Membership("boundary", margin)
    if margin < 0:
        return Membership("inside", margin)
    return Membership("outside", margin)


def membership(spec: UncertaintySetSpec, r) -> Membership:
    """Classify a reward vector against the set, with its margin.

    margin < 0 means strictly inside, ~0 on the boundary, > 0 outside.
    """
    r = np.asarray(r, dtype=float)
    if np.any(np.isnan(r)):
        raise ValueError("reward vector contains NaN")
    delta = r - spec.nominal(len(r))
    return _classify(_margin(spec, delta))


def minkowski_membership(spec: UncertaintySetSpec, k: int, r) -> Membership:
    """Membership in the k-fold Minkowski sum of the per-step set.

    A vector lies in the sum of k copies exactly when its per-step
    average lies in one copy, so this tests delta/k with
    delta = r - k*r0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(np.isnan(r)):
        raise ValueError("reward vector contains NaN")
    delta = r - k * spec.nominal(len(r))
    return _classify(_margin(spec, delta / k))


def boundary_trace_2d(spec: UncertaintySetSpec, grid: int, lo: float, hi: float,
                      steps: int = 1) -> list:
    """Margin of the (k-step) set over a 2-action delta grid.

    Returns rows (delta1, delta2, margin) in row-major order (delta1
    varies slowest).  With steps > 1, the margin is that of the k-fold
    Minkowski sum, i.e. the per-step margin at delta/steps.
    """
    if spec.d is not None and len(spec.d) != 2:
        raise ValueError("2D trace requires two actions")
    if grid < 2:
        raise ValueError("grid must have at least 2 points per axis")
    if not (hi > lo):
        raise ValueError("need hi > lo")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    axis = np.linspace(lo, hi, grid)
    rows = []
    for d1 in axis:
        for d2 in axis:
            delta = np.array([d1, d2])
            rows.append((float(d1), float(d2), _margin(spec, delta / steps)))
    return rows
