"""Benchmark reward models, distance metrics and diversity-aware evaluation.

Two task families are provided: bit-sequence generation, where the
reward is one minus the normalized edit distance to the nearest of a
set of target modes, and table lookup, where scores for every sequence
come from a TSV file (optionally standardized by precomputed mean and
std).  Evaluation sweeps sampling temperatures, pools the samples and
greedily extracts the best pairwise-separated subset.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .regularizers import GmParams
from .spaces import (
    RewardModel,
    SequenceSpace,
    render_sequence,
    rollout,
)
from .training import QFunction, policy_from_q

MODE_FOUND_RADIUS = 28
EVAL_TEMPERATURES = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
EVAL_SAMPLES_PER_TEMPERATURE = 512
EVAL_TOP_K = 100


def levenshtein(x, y) -> int:
    """Unit-cost edit distance (insert/delete/substitute) between sequences."""
    if len(x) < len(y):
        x, y = y, x
    if not y:
        return len(x)
    prev = list(range(len(y) + 1))
    for i, cx in enumerate(x, start=1):
        cur = [i]
        for j, cy in enumerate(y, start=1):
            cur.append(min(prev[j] + 1,
                           cur[j - 1] + 1,
                           prev[j - 1] + (cx != cy)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class BitSequenceTask:
    """Generate n-bit strings k bits at a time toward hidden target modes."""

    n: int
    k: int
    modes: tuple

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.n % self.k != 0:
            raise ValueError("k must divide n and both must be positive")
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if len(set(modes)) != len(modes):
            raise ValueError("modes must be distinct")
        for m in modes:
            if len(m) != self.n or set(m) - {"0", "1"}:
                raise ValueError(f"mode {m!r} is not an n-bit string")

    @property
    def alphabet(self) -> tuple:
        """The 2^k words of k bits, in binary order."""
        return tuple("".join(bits) for bits in itertools.product("01", repeat=self.k))

    def space(self, enumeration_cap: int = 2 ** 24) -> SequenceSpace:
        return SequenceSpace(self.alphabet, self.n // self.k, self.n // self.k,
                             variable_length=False, enumeration_cap=enumeration_cap)


def generate_modes(n: int, num_modes: int, seed: int) -> tuple:
    """Seeded draw of distinct random n-bit target strings."""
    if num_modes > 2 ** n:
        raise ValueError("cannot draw that many distinct modes")
    rng = np.random.default_rng(seed)
    modes = []
    seen = set()
    while len(modes) < num_modes:
        m = "".join("1" if b else "0" for b in rng.integers(0, 2, n))
        if m not in seen:
            seen.add(m)
            modes.append(m)
    return tuple(modes)


def bitseq_reward(task: BitSequenceTask, x) -> float:
    """1 - (edit distance to the nearest mode) / n, in [0, 1]."""
    bits = render_sequence(x)
    if len(bits) != task.n:
        raise ValueError(f"sequence has {len(bits)} bits, expected {task.n}")
    return 1.0 - min(levenshtein(bits, m) for m in task.modes) / task.n


class BitSequenceReward(RewardModel):
    def __init__(self, task: BitSequenceTask, beta: float = 1.0):
        if not (beta > 0):
            raise ValueError("beta must be positive")
        self.task = task
        self.beta = float(beta)
        self._cache: dict = {}

    def evaluate(self, x) -> float:
        key = render_sequence(x)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = bitseq_reward(self.task, key)
        return hit


class RewardTable(RewardModel):
    """Score lookup over a fixed terminal set, optionally standardized.

    With stats (mu, sigma) present, evaluate returns (phi - mu) / sigma;
    the solver-facing reward is beta times that.
    """

    def __init__(self, scores: dict, beta: float = 1.0, mu: float = None,
                 sigma: float = None):
        if not (beta > 0):
            raise ValueError("beta must be positive")
        if (mu is None) != (sigma is None):
            raise ValueError("provide both mu and sigma or neither")
        if sigma is not None and not (sigma > 0):
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.scores = dict(scores)
        self.beta = float(beta)
        self.mu = mu
        self.sigma = sigma

    def evaluate(self, x) -> float:
        key = render_sequence(x)
        try:
            phi = self.scores[key]
        except KeyError:
            raise ValueError(f"sequence not in reward table: {key!r}")
        if self.mu is None:
            return float(phi)
        return (float(phi) - self.mu) / self.sigma


def normalize_reward(table: RewardTable, x) -> float:
    """Standardized, beta-scaled reward beta * (phi(x) - mu) / sigma."""
    if table.mu is None or table.sigma is None:
        raise ValueError("reward table has no normalization stats")
    return table.reward(x)


def greedy_diverse_topk(candidates: list, k: int, delta: float, metric) -> list:
    """Best-first selection of up to k pairwise-separated candidates.

    Candidates are (object, reward) pairs; duplicates are collapsed
    first.  Scanning by descending reward (ties broken by object), a
    candidate is kept iff its distance to everything already kept
    exceeds delta.  May return fewer than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    best: dict = {}
    for obj, r in candidates:
        prev = best.get(obj)
        if prev is None or r > prev:
            best[obj] = r
    ordered = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    selected = []
    for obj, r in ordered:
        if all(metric(obj, s) > delta for s, _ in selected):
            selected.append((obj, r))
            if len(selected) == k:
                break
    return selected


@dataclass(frozen=True)
class ModeMetrics:
    modes_found: int
    avg_min_distance: float
    per_mode_min_distance: tuple


def mode_metrics(task: BitSequenceTask, samples: list,
                 found_radius: int = MODE_FOUND_RADIUS) -> ModeMetrics:
    """Per-mode nearest-sample distances and the found count.

    A mode counts as found when some sample lies within found_radius of
    it by edit distance.  With no samples every distance defaults to n.
    """
    rendered = [render_sequence(s) for s in samples]
    minima = []
    for mode in task.modes:
        if rendered:
            minima.append(min(levenshtein(s, mode) for s in rendered))
        else:
            minima.append(task.n)
    found = sum(1 for m in minima if m <= found_radius)
    return ModeMetrics(modes_found=found,
                       avg_min_distance=float(np.mean(minima)),
                       per_mode_min_distance=tuple(minima))


def default_separation(space: SequenceSpace) -> int:
    """Separation threshold: a quarter of the mean rendered length.

    Lengths are measured on rendered strings (bits for bit-sequence
    tasks), matching the edit-distance metric used for selection.
    """
    token_lengths = {len(tok) for tok in space.alphabet}
    unit = token_lengths.pop() if len(token_lengths) == 1 else 1
    return math.ceil(0.25 * (space.min_len * unit + space.max_len * unit) / 2)


@dataclass(frozen=True)
class EvalProtocol:
    """Temperature sweep, pool sizes and the diversity constraint."""

    temperatures: tuple = EVAL_TEMPERATURES
    samples_per_temperature: int = EVAL_SAMPLES_PER_TEMPERATURE
    k: int = EVAL_TOP_K
    delta: float = None  # None -> default_separation of the space
    seed: int = 0

    def __post_init__(self):
        if not self.temperatures or any(t <= 0 for t in self.temperatures):
            raise ValueError("temperatures must be positive")
        if self.samples_per_temperature < 1 or self.k < 1:
            raise ValueError("samples_per_temperature and k must be >= 1")
        object.__setattr__(self, "temperatures",
                           tuple(float(t) for t in self.temperatures))


@dataclass
class EvalReport:
    mean_mode_reward: float
    k_selected: int
    objects: list = field(default_factory=list)  # (rendered sequence, reward)
    protocol: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "mean_mode_reward": self.mean_mode_reward,
            "k_selected": self.k_selected,
            "objects": [{"seq": seq, "reward": r} for seq, r in self.objects],
        }


def evaluate_sampler(space: SequenceSpace, reward: RewardModel, qfunc: QFunction,
                     params: GmParams, protocol: EvalProtocol = None) -> EvalReport:
    """Temperature-swept sampling followed by diverse top-k selection.

    For each temperature modifier the policy derived from the Q-function
    is sampled; the pooled, deduplicated objects are ranked by reward
    and filtered to a pairwise separation above delta.  The report's
    mean_mode_reward is the mean reward of the selected set.
    """
    protocol = protocol or EvalProtocol()
    delta = protocol.delta if protocol.delta is not None else default_separation(space)
    pool: dict = {}
    for t_index, t in enumerate(protocol.temperatures):
        policy = policy_from_q(qfunc, params, t)
        # per-trajectory streams keyed by (seed, sweep index, sample index)
        batch = [
            rollout(space, reward, policy,
                    np.random.SeedSequence([protocol.seed, t_index, i]))
            for i in range(protocol.samples_per_temperature)
        ]
        for traj in batch:
            pool[render_sequence(traj.terminal_object)] = traj.reward
    selected = greedy_diverse_topk(list(pool.items()), protocol.k, delta,
                                   metric=levenshtein)
    mean = float(np.mean([r for _, r in selected])) if selected else float("nan")
    return EvalReport(
        mean_mode_reward=mean,
        k_selected=len(selected),
        objects=selected,
        protocol={
            "temperatures": list(protocol.temperatures),
            "samples_per_temperature": protocol.samples_per_temperature,
            "k": protocol.k,
            "delta": delta,
            "seed": protocol.seed,
        },
    )


def read_reward_table(path) -> dict:
    """Parse a SEQUENCE<TAB>SCORE file; '#'-prefixed lines are comments."""
    scores: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected SEQUENCE<TAB>SCORE")
            scores[parts[0]] = float(parts[1])
    if not scores:
        raise ValueError(f"{path}: empty reward table")
    return scores


def read_stats(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return float(data["mu"]), float(data["sigma"])


def read_modes(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        modes = [line.strip() for line in fh if line.strip()]
    return tuple(modes)
