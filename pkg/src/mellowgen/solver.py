"""Exact solving of sequence MDPs by backward recursion on the prefix tree.

States are processed grouped by prefix length, longest first, which is
an inverse topological order for trees.  Terminal states have value 0;
the reward beta*Phi(x) sits on the terminating transition.  Everything
here is exact up to float64 log-sum-exp error, which makes these
routines usable as oracles for the trainers.
"""

from __future__ import annotations

import numpy as np

from .regularizers import GmParams, gm_backup, gm_consistency_vector, gm_optimal_policy
from .spaces import (
    RewardModel,
    SequenceSpace,
    State,
    check_enumerable,
    children,
    level_prefixes,
    render_sequence,
    validate_distribution,
)

# ValueTable: dict[State, float] with terminal entries exactly 0.
# PolicyTable: dict[State, np.ndarray] over the state's legal actions.


def solve_backward(space: SequenceSpace, reward: RewardModel,
                   params: GmParams) -> tuple:
    """Optimal value and policy tables for the regularized objective.

    Returns (values, policy) where values maps every reachable state to
    its optimal value (terminals to 0.0) and policy maps every
    non-terminal state to the optimal action distribution.
    """
    check_enumerable(space)
    values: dict = {}
    policy: dict = {}
    b = space.n_tokens
    v_next = None  # values of non-terminal states one level deeper, lex order
    for length in range(space.max_len, -1, -1):
        prefixes = list(level_prefixes(space, length))
        n_states = len(prefixes)
        stop_here = (length == space.max_len) or (
            space.variable_length and length >= space.min_len)
        cols = []
        if length < space.max_len:
            cols.append(v_next.reshape(n_states, b))
        if stop_here:
            stop_rewards = np.fromiter(
                (reward.reward(p) for p in prefixes), dtype=float, count=n_states)
            if not np.all(np.isfinite(stop_rewards)):
                bad = prefixes[int(np.argmax(~np.isfinite(stop_rewards)))]
                raise ValueError(
                    f"non-finite reward for sequence {render_sequence(bad)!r}")
            cols.append(stop_rewards.reshape(n_states, 1))
        q_matrix = np.hstack(cols)
        v_level = np.atleast_1d(gm_backup(q_matrix, params))
        pol_level = gm_optimal_policy(q_matrix, params)
        for i, prefix in enumerate(prefixes):
            state = State(prefix, False)
            values[state] = float(v_level[i])
            policy[state] = pol_level[i]
            if stop_here:
                values[State(prefix, True)] = 0.0
        v_next = v_level
    return values, policy


def q_from_values(space: SequenceSpace, reward: RewardModel, values: dict) -> dict:
    """Action-value table Q[s][a] = v(child) + r(s, a) from a value table."""
    out: dict = {}
    stack = [space.root()]
    while stack:
        state = stack.pop()
        kids = children(space, state)
        q = np.empty(len(kids))
        for pos, (_, child) in enumerate(kids):
            if child.terminal:
                q[pos] = values[child] + reward.reward(child.prefix)
            else:
                q[pos] = values[child]
                stack.append(child)
        out[state] = q
    return out


def terminal_distribution(space: SequenceSpace, policy: dict) -> dict:
    """Probability of each completed sequence under a policy table.

    The tree structure means each terminal has a unique path, so its
    probability is simply the product of edge probabilities.
    """
    check_enumerable(space)
    dist: dict = {}
    stack = [(space.root(), 1.0)]
    while stack:
        state, prob = stack.pop()
        try:
            action_dist = policy[state]
        except KeyError:
            raise ValueError(f"missing policy entry for state {state.prefix!r}")
        kids = children(space, state)
        action_dist = validate_distribution(action_dist, len(kids))
        for pos, (_, child) in enumerate(kids):
            p = prob * float(action_dist[pos])
            if child.terminal:
                dist[child.prefix] = p
            else:
                stack.append((child, p))
    return dist


def expected_terminal_reward(space: SequenceSpace, reward: RewardModel,
                             policy: dict) -> float:
    dist = terminal_distribution(space, policy)
    return float(sum(p * reward.reward(x) for x, p in dist.items()))


def check_trajectory_consistency(space: SequenceSpace, reward: RewardModel,
                                 params: GmParams, q_table: dict) -> float:
    """Max absolute trajectory residual of a candidate Q table.

    For each root-to-terminal trajectory the residual is
        v*(root) + sum_i g(Q_{s_i}, a_i) - sum_i r(s_i, a_i),
    which vanishes for all trajectories exactly when the policy induced
    by the Q table is optimal.  v*(root) comes from solve_backward.
    """
    values, _ = solve_backward(space, reward, params)
    v_root = values[space.root()]
    worst = 0.0
    # acc carries sum of g - r along the path so far
    stack = [(space.root(), 0.0)]
    while stack:
        state, acc = stack.pop()
        try:
            g_vec = gm_consistency_vector(q_table[state], params)
        except KeyError:
            raise ValueError(f"missing Q entry for state {state.prefix!r}")
        for pos, (_, child) in enumerate(children(space, state)):
            step = acc + float(g_vec[pos])
            if child.terminal:
                residual = v_root + step - reward.reward(child.prefix)
                worst = max(worst, abs(residual))
            else:
                stack.append((child, step))
    return worst


def quantile_mass_report(space: SequenceSpace, reward: RewardModel,
                         policy: dict, buckets: int = 10) -> list:
    """Terminal probability mass bucketed by reward quantile.

    Terminals are ranked by reward (ties broken lexicographically) and
    split into equal-count rank buckets, so under a uniform policy each
    bucket holds its share of terminals.  Returns rows
    (quantile_lo, quantile_hi, mass).
    """
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    dist = terminal_distribution(space, policy)
    ranked = sorted(dist, key=lambda x: (reward.reward(x), x))
    n = len(ranked)
    rows = []
    for i in range(buckets):
        lo_idx = (i * n) // buckets
        hi_idx = ((i + 1) * n) // buckets
        mass = float(sum(dist[x] for x in ranked[lo_idx:hi_idx]))
        rows.append((i / buckets, (i + 1) / buckets, mass))
    return rows
