"""Online training of a tabular Q-function with the trajectory variance loss.

Each sampled trajectory contributes the statistic
    sum_i g(Q_{s_i}, a_i) - r(x),
where g is the per-action consistency term of the regularized operator.
The loss is the batch (population) variance of that statistic:
trajectory consistency holds exactly when all statistics equal minus
the root value, so the variance needs no separate root-value parameter.
Gradients are computed analytically and applied with Adam after
global-norm clipping; data collection mixes a little uniform
exploration into the current greedy-regularized policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .regularizers import GmParams, gm_consistency_vector, softmax
from .spaces import (
    PolicyProvider,
    RewardModel,
    SequenceSpace,
    State,
    Trajectory,
    render_sequence,
    rollout,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite; carries the step and culprit."""

    def __init__(self, step: int, trajectory: Trajectory):
        self.step = step
        self.trajectory = trajectory
        super().__init__(
            f"non-finite loss at step {step} "
            f"(trajectory ending at {render_sequence(trajectory.terminal_object)!r})")


class QFunction:
    """Lazily grown map from state to a learnable action-value vector.

    Entries are created at init_value (default 0) the first time a state
    is written; reads of unseen states return a fresh default vector
    without growing the table, so evaluation passes leave no trace.
    """

    def __init__(self, space: SequenceSpace, init_value: float = 0.0):
        self.space = space
        self.init_value = float(init_value)
        self.table: dict = {}

    def n_actions(self, state: State) -> int:
        return len(self.space.legal_actions(state))

    def values(self, state: State) -> np.ndarray:
        entry = self.table.get(state)
        if entry is None:
            return np.full(self.n_actions(state), self.init_value)
        return entry

    def ensure(self, state: State) -> np.ndarray:
        entry = self.table.get(state)
        if entry is None:
            entry = np.full(self.n_actions(state), self.init_value)
            self.table[state] = entry
        return entry

    def load(self, mapping: dict) -> "QFunction":
        for state, q in mapping.items():
            q = np.asarray(q, dtype=float)
            if q.shape != (self.n_actions(state),):
                raise ValueError(f"Q entry for {state.prefix!r} has wrong arity")
            self.table[state] = q.copy()
        return self

    @classmethod
    def from_table(cls, space: SequenceSpace, mapping: dict,
                   init_value: float = 0.0) -> "QFunction":
        return cls(space, init_value).load(mapping)


@dataclass(frozen=True)
class TrainConfig:
    params: GmParams
    batch_size: int = 16
    learning_rate: float = 1e-2
    steps: int = 1000
    explore_eps: float = 0.01
    grad_clip: float = 10.0
    adam_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (variance needs 2 samples)")
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not (0.0 <= self.explore_eps < 1.0):
            raise ValueError("explore_eps must be in [0, 1)")
        if not (self.grad_clip > 0):
            raise ValueError("grad_clip must be positive")
        if not (self.adam_eps > 0):
            raise ValueError("adam_eps must be positive")


@dataclass
class TrainLog:
    """Per-step records plus diagnostics gathered during training.

    rows hold (step, loss, mean_reward, samples_so_far); terminals and
    visit_counts are in-memory diagnostics and are not serialized.
    """

    rows: list = field(default_factory=list)
    terminals: list = field(default_factory=list)
    visit_counts: dict = field(default_factory=dict)


def trajectory_statistic(traj: Trajectory, qfunc: QFunction, params: GmParams,
                         _cache: dict = None) -> float:
    """sum of consistency terms along the trajectory, minus its reward."""
    total = 0.0
    for state, action in traj.steps:
        if _cache is not None and state in _cache:
            g_vec = _cache[state]
        else:
            g_vec = gm_consistency_vector(qfunc.values(state), params)
            if _cache is not None:
                _cache[state] = g_vec
        total += float(g_vec[qfunc.space.action_position(state, action)])
    return total - traj.reward


def vargrad_loss(batch: list, qfunc: QFunction, params: GmParams) -> tuple:
    """Population variance of the per-trajectory statistic over a batch.

    Returns (loss, statistics).  Zero exactly when all statistics agree,
    which at the optimum they do: every statistic equals minus the root
    value.
    """
    if len(batch) < 2:
        raise ValueError("variance undefined for batches smaller than 2")
    cache: dict = {}
    stats = [trajectory_statistic(t, qfunc, params, cache) for t in batch]
    arr = np.asarray(stats)
    return float(np.mean((arr - arr.mean()) ** 2)), stats


def _state_gradients(batch: list, qfunc: QFunction, params: GmParams) -> tuple:
    """(loss, stats, per-state gradient arrays) for one batch."""
    if len(batch) < 2:
        raise ValueError("variance undefined for batches smaller than 2")
    space = qfunc.space
    tau = params.policy_temperature
    g_cache: dict = {}
    sm_cache: dict = {}
    visited = []  # per trajectory: list of (state, position)
    stats = []
    for traj in batch:
        total = 0.0
        positions = []
        for state, action in traj.steps:
            pos = space.action_position(state, action)
            if state not in g_cache:
                q = qfunc.values(state)
                g_cache[state] = gm_consistency_vector(q, params)
                # gradient of g(Q, a) is onehot(a) minus this common part
                sm_cache[state] = (tau * softmax(q, tau)
                                   - params.q * params.alpha * softmax(q, params.alpha)
                                   ) / params.omega
            total += float(g_cache[state][pos])
            positions.append((state, pos))
        stats.append(total - traj.reward)
        visited.append(positions)
    arr = np.asarray(stats)
    mean = arr.mean()
    loss = float(np.mean((arr - mean) ** 2))
    coefs = 2.0 * (arr - mean) / len(batch)
    grads: dict = {}
    for coef, positions in zip(coefs, visited):
        if coef == 0.0:
            continue
        for state, pos in positions:
            g = grads.get(state)
            if g is None:
                g = np.zeros(len(sm_cache[state]))
                grads[state] = g
            g -= coef * sm_cache[state]
            g[pos] += coef
    return loss, stats, grads


def vargrad_gradient(batch: list, qfunc: QFunction, params: GmParams) -> dict:
    """Exact loss gradient, keyed by (state, position in legal-action list).

    Entries not touched by the batch are absent (i.e. zero).
    """
    _, _, grads = _state_gradients(batch, qfunc, params)
    return {(state, pos): float(vec[pos])
            for state, vec in grads.items()
            for pos in range(len(vec))}


def mixture_policy(qfunc: QFunction, params: GmParams,
                   explore_eps: float) -> PolicyProvider:
    """(1 - eps) * greedy-regularized policy + eps * uniform."""
    tau = params.policy_temperature

    def provider(state: State) -> np.ndarray:
        dist = softmax(qfunc.values(state), tau)
        if explore_eps:
            dist = (1.0 - explore_eps) * dist + explore_eps / len(dist)
        return dist

    return provider


def policy_from_q(qfunc: QFunction, params: GmParams,
                  temperature_modifier: float = 1.0) -> PolicyProvider:
    """Sampling policy softmax(Q, (q*alpha + omega) * t), no exploration.

    t = 1 reproduces the training policy; large t approaches argmax.
    """
    if not (temperature_modifier > 0):
        raise ValueError("temperature modifier must be positive")
    tau = params.policy_temperature * temperature_modifier

    def provider(state: State) -> np.ndarray:
        return softmax(qfunc.values(state), tau)

    return provider


def train(space: SequenceSpace, reward: RewardModel,
          config: TrainConfig) -> tuple:
    """Run the online training loop; returns (QFunction, TrainLog).

    Deterministic given config.seed: trajectory j of step i draws from
    the stream seeded by (seed, i, j).
    """
    params = config.params
    qfunc = QFunction(space)
    log = TrainLog()
    adam_m: dict = {}
    adam_v: dict = {}
    adam_t: dict = {}
    samples = 0
    for step in range(config.steps):
        policy = mixture_policy(qfunc, params, config.explore_eps)
        batch = [
            rollout(space, reward, policy,
                    np.random.SeedSequence([config.seed, step, j]))
            for j in range(config.batch_size)
        ]
        for traj in batch:
            log.terminals.append(traj.terminal_object)
            for state, _ in traj.steps:
                log.visit_counts[state] = log.visit_counts.get(state, 0) + 1
        loss, stats, grads = _state_gradients(batch, qfunc, params)
        if not np.isfinite(loss):
            bad = next((i for i, s in enumerate(stats) if not np.isfinite(s)), 0)
            raise TrainingDivergedError(step, batch[bad])

        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = config.grad_clip / norm if norm > config.grad_clip else 1.0
        for state, grad in grads.items():
            if scale != 1.0:
                grad = grad * scale
            entry = qfunc.ensure(state)
            m = adam_m.get(state)
            if m is None:
                m = adam_m[state] = np.zeros_like(entry)
                adam_v[state] = np.zeros_like(entry)
                adam_t[state] = 0
            v = adam_v[state]
            adam_t[state] += 1
            t = adam_t[state]
            m += (1 - ADAM_BETA1) * (grad - m)
            v += (1 - ADAM_BETA2) * (grad * grad - v)
            m_hat = m / (1 - ADAM_BETA1 ** t)
            v_hat = v / (1 - ADAM_BETA2 ** t)
            entry -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)

        samples += len(batch)
        mean_reward = float(np.mean([t.reward for t in batch]))
        log.rows.append((step, loss, mean_reward, samples))
    return qfunc, log
