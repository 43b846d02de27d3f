"""File output helpers shared by the CLI: deterministic and atomic.

Floats render with 17 significant digits so values round-trip exactly;
all files use '\\n' line endings and are written to a temp name then
renamed, so an interrupted run never leaves a partial file behind.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from .spaces import SequenceSpace, State, render_sequence
from .training import QFunction, TrainLog


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path, content: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)
    os.replace(tmp, path)


def write_csv(path, header: Iterable, rows: Iterable) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            fmt_float(v) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_values_csv(path, values: dict) -> None:
    """Non-terminal state values, sorted by depth then prefix; terminals
    are identically zero and omitted."""
    rows = [
        (render_sequence(state.prefix), float(v))
        for state, v in values.items() if not state.terminal
    ]
    rows.sort(key=lambda r: (len(r[0]), r[0]))
    write_csv(path, ("state", "value"), rows)


def write_terminal_dist_csv(path, dist: dict, reward) -> None:
    rows = [
        (render_sequence(x), float(p), float(reward.reward(x)))
        for x, p in sorted(dist.items())
    ]
    write_csv(path, ("sequence", "prob", "reward"), rows)


def write_quantiles_csv(path, rows: Iterable) -> None:
    write_csv(path, ("quantile_lo", "quantile_hi", "mass"),
              [(float(lo), float(hi), float(m)) for lo, hi, m in rows])


def write_boundary_csv(path, rows: Iterable) -> None:
    write_csv(path, ("delta1", "delta2", "margin"),
              [(float(a), float(b), float(m)) for a, b, m in rows])


def write_trainlog_csv(path, log: TrainLog) -> None:
    write_csv(path, ("step", "loss", "mean_reward", "samples"),
              [(step, float(loss), float(mr), n) for step, loss, mr, n in log.rows])


def _token_width(space: SequenceSpace) -> int:
    widths = {len(tok) for tok in space.alphabet}
    if len(widths) != 1:
        raise ValueError("snapshot serialization needs fixed-width tokens")
    return widths.pop()


def write_q_snapshot(path, qfunc: QFunction) -> None:
    """Q table as TSV rows (state, action, value); action indices are
    canonical (STOP = alphabet size)."""
    space = qfunc.space
    rows = []
    for state, q in qfunc.table.items():
        actions = space.legal_actions(state)
        prefix = render_sequence(state.prefix)
        for pos, action in enumerate(actions):
            rows.append((prefix, action, q[pos]))
    rows.sort(key=lambda r: (len(r[0]), r[0], r[1]))
    lines = ["state\taction\tvalue"]
    for prefix, action, value in rows:
        lines.append(f"{prefix}\t{action}\t{fmt_float(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_q_snapshot(path, space: SequenceSpace, init_value: float = 0.0) -> QFunction:
    width = _token_width(space)
    entries: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "state\taction\tvalue":
            raise ValueError(f"{path}: not a Q snapshot")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rendered, action, value = parts[0], int(parts[1]), float(parts[2])
            if len(rendered) % width:
                raise ValueError(f"{path}:{lineno}: prefix {rendered!r} does not "
                                 f"split into {width}-wide tokens")
            prefix = tuple(rendered[i:i + width]
                           for i in range(0, len(rendered), width))
            entries.setdefault(prefix, {})[action] = value
    qfunc = QFunction(space, init_value)
    for prefix, by_action in entries.items():
        state = State(prefix, False)
        actions = space.legal_actions(state)
        q = np.full(len(actions), init_value)
        for pos, action in enumerate(actions):
            if action in by_action:
                q[pos] = by_action[action]
        qfunc.table[state] = q
    return qfunc
