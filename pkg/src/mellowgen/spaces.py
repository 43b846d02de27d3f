"""Tree-structured sequence-generation MDPs.

States are token prefixes grown one token at a time from an empty root.
A reserved STOP action terminates a sequence; the completed object is
scored by a reward model, and that reward is attached to the STOP
transition (all other transitions carry zero reward).
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

DISTRIBUTION_TOL = 1e-9


class State(NamedTuple):
    """A node of the prefix tree: the token prefix plus a terminal flag.

    Prefixes identify nodes uniquely (the tree has a single path to any
    node); the flag distinguishes a completed sequence from the same
    prefix still open for extension.
    """

    prefix: tuple
    terminal: bool = False


class Trajectory(NamedTuple):
    """A root-to-terminal path: (state, action) steps plus the outcome."""

    steps: tuple
    terminal_object: tuple
    reward: float


PolicyProvider = Callable[[State], np.ndarray]


@dataclass(frozen=True)
class SequenceSpace:
    """Token alphabet and length rules defining one prefix tree.

    If ``variable_length`` is true, STOP becomes legal once the prefix
    reaches ``min_len``; otherwise sequences run to ``max_len`` exactly.
    At ``max_len`` the only legal action is STOP either way.  STOP uses
    the reserved action index ``len(alphabet)``.
    """

    alphabet: tuple
    min_len: int
    max_len: int
    variable_length: bool = False
    enumeration_cap: int = 2 ** 24

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        object.__setattr__(self, "alphabet", alphabet)
        if len(alphabet) < 1:
            raise ValueError("alphabet must contain at least one token")
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet tokens must be distinct")
        if not (1 <= self.min_len <= self.max_len):
            raise ValueError("need 1 <= min_len <= max_len")
        if self.enumeration_cap < 1:
            raise ValueError("enumeration_cap must be positive")

    @property
    def n_tokens(self) -> int:
        return len(self.alphabet)

    @property
    def stop_action(self) -> int:
        """Reserved index of the STOP action (always last)."""
        return len(self.alphabet)

    def root(self) -> State:
        return State((), False)

    def stop_legal(self, state: State) -> bool:
        length = len(state.prefix)
        if length == self.max_len:
            return True
        return self.variable_length and length >= self.min_len

    def legal_actions(self, state: State) -> list:
        """Canonical action list: tokens in alphabet order, STOP last."""
        if state.terminal:
            raise ValueError("no children of terminal state")
        length = len(state.prefix)
        actions = []
        if length < self.max_len:
            actions.extend(range(self.n_tokens))
        if self.stop_legal(state):
            actions.append(self.stop_action)
        return actions

    def action_position(self, state: State, action: int) -> int:
        """Position of a canonical action index in the legal-action list."""
        length = len(state.prefix)
        if action == self.stop_action:
            if not self.stop_legal(state):
                raise ValueError(f"STOP not legal at length {length}")
            return self.n_tokens if length < self.max_len else 0
        if not (0 <= action < self.n_tokens) or length >= self.max_len:
            raise ValueError(f"action {action} not legal at length {length}")
        return action


def children(space: SequenceSpace, state: State) -> list:
    """All (action, child-state) pairs of a non-terminal state.

    Token actions extend the prefix; STOP maps to the terminal copy of
    the same prefix.  Raises on terminal input.
    """
    if state.terminal:
        raise ValueError("no children of terminal state")
    out = []
    if len(state.prefix) < space.max_len:
        for i, tok in enumerate(space.alphabet):
            out.append((i, State(state.prefix + (tok,), False)))
    if space.stop_legal(state):
        out.append((space.stop_action, State(state.prefix, True)))
    return out


def n_terminals(space: SequenceSpace) -> int:
    """Number of completed sequences in the space."""
    b = space.n_tokens
    if not space.variable_length:
        return b ** space.max_len
    return sum(b ** length for length in range(space.min_len, space.max_len + 1))


def check_enumerable(space: SequenceSpace) -> int:
    count = n_terminals(space)
    if count > space.enumeration_cap:
        raise ValueError(
            f"space too large for enumeration: {count} terminals exceeds cap "
            f"{space.enumeration_cap}"
        )
    return count


def enumerate_terminals(space: SequenceSpace) -> Iterator[tuple]:
    """Yield every completed sequence exactly once, lexicographically.

    A prefix sorts before its extensions, so in variable-length spaces
    ("0",) is yielded before ("0", "0").
    """
    check_enumerable(space)

    def walk(prefix):
        length = len(prefix)
        if length == space.max_len or (space.variable_length and length >= space.min_len):
            yield prefix
        if length < space.max_len:
            for tok in space.alphabet:
                yield from walk(prefix + (tok,))

    yield from walk(())


def level_prefixes(space: SequenceSpace, length: int) -> Iterator[tuple]:
    """All prefixes of a given length, in lexicographic token order."""
    return itertools.product(space.alphabet, repeat=length)


def render_sequence(x: Sequence) -> str:
    """Flatten a token sequence to its string form."""
    if isinstance(x, str):
        return x
    return "".join(x)


class RewardModel(ABC):
    """Deterministic scorer of completed sequences.

    ``evaluate`` returns the (normalized) proxy score of an object; the
    reward seen by solvers and trainers is ``beta * evaluate(x)``.
    """

    beta: float = 1.0

    @abstractmethod
    def evaluate(self, x: Sequence) -> float:
        ...

    def reward(self, x: Sequence) -> float:
        return self.beta * self.evaluate(x)


def validate_distribution(dist: np.ndarray, arity: int,
                          tol: float = DISTRIBUTION_TOL) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (arity,):
        raise ValueError(
            f"policy distribution has arity {dist.shape}, expected ({arity},)")
    if np.any(dist < 0) or not np.all(np.isfinite(dist)):
        raise ValueError("policy distribution has negative or non-finite entries")
    if abs(float(dist.sum()) - 1.0) > tol:
        raise ValueError(f"policy distribution sums to {dist.sum()!r}, not 1")
    return dist


def uniform_policy(space: SequenceSpace) -> PolicyProvider:
    def provider(state: State) -> np.ndarray:
        n = len(space.legal_actions(state))
        return np.full(n, 1.0 / n)

    return provider


def rollout(space: SequenceSpace, reward: RewardModel, policy: PolicyProvider,
            seed) -> Trajectory:
    """Sample one trajectory from root to a terminal state.

    ``seed`` may be an int, a ``numpy.random.SeedSequence`` or a
    ``Generator``; the result is deterministic given the seed.  The
    policy must return a valid distribution over the legal actions of
    every state it is queried at.
    """
    rng = np.random.default_rng(seed)
    state = space.root()
    steps = []
    while not state.terminal:
        kids = children(space, state)
        dist = validate_distribution(policy(state), len(kids))
        u = rng.random()
        pick = int(np.searchsorted(np.cumsum(dist), u, side="right"))
        pick = min(pick, len(kids) - 1)
        action, child = kids[pick]
        steps.append((state, action))
        state = child
    x = state.prefix
    return Trajectory(steps=tuple(steps), terminal_object=x, reward=reward.reward(x))


def rollout_batch(space: SequenceSpace, reward: RewardModel, policy: PolicyProvider,
                  n: int, seed: int) -> list:
    """n independent rollouts with per-trajectory counter-based streams.

    Trajectory i uses the stream seeded by (seed, i), so results are
    reproducible and independent of batch partitioning.
    """
    return [
        rollout(space, reward, policy, np.random.SeedSequence([int(seed), i]))
        for i in range(n)
    ]
