"""The general-mellowmax regularizer family and its convex conjugates.

The regularizer on a policy simplex interpolates, with weight q, between
negative Shannon entropy (q=0) and the KL divergence to a reference
distribution (q=1), the whole thing scaled by 1/omega.  With the
reference fixed to a softmax of the Q-values themselves, the associated
Bellman backup and optimal policy have the closed forms implemented
here.  All log-domain quantities are computed with max-shifted
log-sum-exp; log-softmax terms are never taken as log of a computed
softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.special import log_softmax as _log_softmax

CONJUGATE_KINDS = ("neg-shannon", "kl", "gm")


@dataclass(frozen=True)
class GmParams:
    """Regularizer parameters (q, alpha, omega) plus the reward scale beta.

    q in [0, 1] trades entropy against KL-to-reference; alpha is the
    inverse temperature of the reference softmax; omega > 0 is the
    inverse regularization strength; beta > 0 multiplies raw rewards
    (consumed by reward-model constructors, not by the operators).
    """

    q: float = 0.0
    alpha: float = 0.0
    omega: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ValueError(f"q must be in [0, 1], got {self.q}")
        if not (self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        for name in ("q", "alpha", "omega", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def policy_temperature(self) -> float:
        """Inverse temperature q*alpha + omega of the optimal policy."""
        return self.q * self.alpha + self.omega


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def _xlogx(v: np.ndarray) -> np.ndarray:
    # 0*log(0) := 0 throughout
    out = np.zeros_like(v)
    mask = v > 0
    out[mask] = v[mask] * np.log(v[mask])
    return out


def softmax(v, tau: float) -> np.ndarray:
    """Softmax with inverse temperature tau; tau = 0 gives the uniform.

    Computed with max subtraction, so arbitrarily shifted inputs are
    safe.  Reduces over the last axis for batched input.
    """
    v = _require_finite("softmax input", v)
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    z = tau * v
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(v, tau: float) -> np.ndarray:
    """log of softmax(v, tau), computed as tau*v - logsumexp(tau*v)."""
    v = _require_finite("log_softmax input", v)
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    return _log_softmax(tau * v, axis=-1)


def _check_simplex(name: str, p: np.ndarray) -> np.ndarray:
    p = _require_finite(name, p)
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"{name} is not a distribution")
    return p


def omega_gm(pi, d, params: GmParams) -> float:
    """Regularizer value (1/omega)[q*KL(pi, d) + (1-q)*(-H(pi))]."""
    pi = _check_simplex("pi", pi)
    d = _check_simplex("d", d)
    if params.q > 0 and np.any((pi > 0) & (d == 0)):
        raise ValueError("KL undefined: pi puts mass where d is zero")
    neg_entropy = float(_xlogx(pi).sum())
    mask = pi > 0
    kl = float((_xlogx(pi)[mask] - pi[mask] * np.log(d[mask])).sum()) if params.q > 0 else 0.0
    return (params.q * kl + (1.0 - params.q) * neg_entropy) / params.omega


def tilted_decomposition(pi, d, params: GmParams) -> tuple:
    """Rewrite the regularizer as a single KL to a tilted reference.

    Returns (kl_term, log_Zq) with
        omega_gm(pi, d) = kl_term/omega - log_Zq/omega,
    where Z_q = sum_a d(a)^q (0^0 := 1) and the tilted reference is
    d^q / Z_q.
    """
    pi = _check_simplex("pi", pi)
    d = _check_simplex("d", d)
    if params.q > 0 and np.any((pi > 0) & (d == 0)):
        raise ValueError("KL undefined: pi puts mass where d is zero")
    weights = d ** params.q
    z_q = float(weights.sum())
    tilted = weights / z_q
    mask = pi > 0
    kl_term = float((_xlogx(pi)[mask] - pi[mask] * np.log(tilted[mask])).sum())
    return kl_term, float(np.log(z_q))


def gm_backup(q_values, params: GmParams):
    """Regularized Bellman backup of one state's action values.

    Equals max over policies of <pi, Q> - omega_gm(pi, softmax(Q, alpha))
    and has the closed form
        (1/omega) * [LSE((q*alpha+omega)*Q) - q*LSE(alpha*Q)].
    Reduces over the last axis, so a (states, actions) matrix yields the
    vector of state values.
    """
    q_values = _require_finite("Q", q_values)
    tau = params.policy_temperature
    top = logsumexp(tau * q_values, axis=-1)
    if params.q == 0.0:
        return top / params.omega
    ref = logsumexp(params.alpha * q_values, axis=-1)
    return (top - params.q * ref) / params.omega


def gm_optimal_policy(q_values, params: GmParams) -> np.ndarray:
    """The unique maximizing policy: softmax(Q, q*alpha + omega)."""
    q_values = _require_finite("Q", q_values)
    return softmax(q_values, params.policy_temperature)


def gm_consistency_vector(q_values, params: GmParams) -> np.ndarray:
    """Per-action consistency terms g(Q, a) for every action at once.

    g(Q, a) = (1/omega)[log softmax(Q, q*alpha+omega)[a]
                        - q * log softmax(Q, alpha)[a]]
    and satisfies g(Q, a) = Q[a] - gm_backup(Q) identically.
    """
    q_values = _require_finite("Q", q_values)
    top = log_softmax(q_values, params.policy_temperature)
    if params.q == 0.0:
        return top / params.omega
    ref = log_softmax(q_values, params.alpha)
    return (top - params.q * ref) / params.omega


def gm_consistency_term(q_values, action: int, params: GmParams) -> float:
    q_values = np.asarray(q_values, dtype=float)
    if not (0 <= action < q_values.shape[-1]):
        raise ValueError(f"action index {action} out of range for arity "
                         f"{q_values.shape[-1]}")
    return float(gm_consistency_vector(q_values, params)[..., action])


def gm_consistency_gradient(q_values, action: int, params: GmParams) -> np.ndarray:
    """Gradient of g(Q, action) with respect to the Q vector."""
    q_values = _require_finite("Q", q_values)
    if not (0 <= action < q_values.shape[-1]):
        raise ValueError(f"action index {action} out of range")
    tau = params.policy_temperature
    grad = -(tau * softmax(q_values, tau)
             - params.q * params.alpha * softmax(q_values, params.alpha)) / params.omega
    grad[action] += 1.0
    return grad


def conjugate_table(kind: str, argument, d=None, params: GmParams = None) -> float:
    """Convex conjugate of the named regularizer at the given argument.

    neg-shannon -> logsumexp(arg)
    kl          -> log sum_a d(a) * exp(arg[a])
    gm          -> (1/omega) * log sum_a d(a)^q * exp(omega * arg[a])
    """
    argument = _require_finite("argument", argument)
    if kind == "neg-shannon":
        return float(logsumexp(argument))
    if kind == "kl":
        d = _check_simplex("d", d)
        return float(logsumexp(argument, b=d))
    if kind == "gm":
        if params is None:
            raise ValueError("gm conjugate requires params")
        d = _check_simplex("d", d)
        return float(logsumexp(params.omega * argument, b=d ** params.q)) / params.omega
    raise ValueError(f"unknown regularizer kind {kind!r}; expected one of "
                     f"{CONJUGATE_KINDS}")
