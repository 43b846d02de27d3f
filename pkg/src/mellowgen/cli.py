"""Command-line front end: solve / train / eval / uset / gen-modes.

Jobs are configured by a JSON file plus flag overrides (flags win);
every run writes the fully resolved configuration next to its outputs.
All commands are deterministic given (config, seed): repeating a run
reproduces its artifacts byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime
numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import io as mio
from .regularizers import GmParams
from .solver import quantile_mass_report, solve_backward, terminal_distribution
from .spaces import SequenceSpace
from .tasks import (
    BitSequenceReward,
    BitSequenceTask,
    EvalProtocol,
    RewardTable,
    evaluate_sampler,
    generate_modes,
    mode_metrics,
    read_modes,
    read_reward_table,
    read_stats,
)
from .training import TrainConfig, TrainingDivergedError, train
from .uncertainty import UncertaintySetSpec, boundary_trace_2d, membership


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


DEFAULT_CONFIG = {
    "task": None,
    "gm": {"q": 0.0, "alpha": 0.0, "omega": 1.0, "beta": 1.0},
    "train": {
        "batch_size": 16,
        "learning_rate": 0.01,
        "steps": 1000,
        "explore_eps": 0.01,
        "grad_clip": 10.0,
        "adam_eps": 1e-5,
    },
    "eval": {
        "temperatures": [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
        "samples_per_temperature": 512,
        "k": 100,
        "delta": None,
        "found_radius": 28,
    },
    "seed": 0,
    "threads": 1,
    "enumeration_cap": 2 ** 24,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config is not valid JSON: {exc}")
        cfg = _merge(cfg, user)
    for name in ("q", "alpha", "omega", "beta"):
        value = getattr(args, name, None)
        if value is not None:
            cfg["gm"][name] = value
    for name in ("seed", "threads"):
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    if getattr(args, "threads", None) is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def gm_params(cfg: dict) -> GmParams:
    gm = cfg["gm"]
    try:
        return GmParams(q=gm["q"], alpha=gm["alpha"], omega=gm["omega"],
                        beta=gm["beta"])
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad gm parameters: {exc}")


def build_task(cfg: dict):
    """Returns (space, reward model, task object or None)."""
    task_cfg = cfg.get("task")
    if not task_cfg or "kind" not in task_cfg:
        raise UsageError("config must declare task.kind")
    kind = task_cfg["kind"]
    beta = cfg["gm"]["beta"]
    cap = cfg.get("enumeration_cap", DEFAULT_CONFIG["enumeration_cap"])
    if kind == "bitseq":
        try:
            n, k = int(task_cfg["n"]), int(task_cfg["k"])
        except KeyError as exc:
            raise UsageError(f"bitseq task missing field {exc}")
        if "modes" in task_cfg:
            modes = tuple(task_cfg["modes"])
        elif "modes_file" in task_cfg:
            if not os.path.exists(task_cfg["modes_file"]):
                raise UsageError(f"modes file not found: {task_cfg['modes_file']}")
            modes = read_modes(task_cfg["modes_file"])
        else:
            raise UsageError("bitseq task needs 'modes' or 'modes_file'")
        try:
            task = BitSequenceTask(n=n, k=k, modes=modes)
        except ValueError as exc:
            raise UsageError(str(exc))
        return task.space(enumeration_cap=cap), BitSequenceReward(task, beta), task
    if kind == "reward-table":
        path = task_cfg.get("table_file")
        if not path or not os.path.exists(path):
            raise UsageError(f"reward table file not found: {path}")
        scores = read_reward_table(path)
        mu = sigma = None
        if task_cfg.get("stats_file"):
            if not os.path.exists(task_cfg["stats_file"]):
                raise UsageError(f"stats file not found: {task_cfg['stats_file']}")
            mu, sigma = read_stats(task_cfg["stats_file"])
        alphabet = task_cfg.get("alphabet")
        if alphabet is None:
            alphabet = sorted({ch for seq in scores for ch in seq})
        lengths = {len(seq) for seq in scores}
        min_len = int(task_cfg.get("min_len", min(lengths)))
        max_len = int(task_cfg.get("max_len", max(lengths)))
        variable = bool(task_cfg.get("variable_length", min_len != max_len))
        try:
            space = SequenceSpace(tuple(alphabet), min_len, max_len,
                                  variable_length=variable, enumeration_cap=cap)
            model = RewardTable(scores, beta=beta, mu=mu, sigma=sigma)
        except ValueError as exc:
            raise UsageError(str(exc))
        return space, model, None
    raise UsageError(f"unknown task kind {kind!r}")


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _dump_resolved(out: str, cfg: dict, command: str) -> None:
    resolved = copy.deepcopy(cfg)
    resolved["command"] = command
    mio.write_json(os.path.join(out, "resolved_config.json"), resolved)


def cmd_solve(args) -> int:
    cfg = load_config(args)
    params = gm_params(cfg)
    space, reward, _ = build_task(cfg)
    out = _outdir(args)
    values, policy = solve_backward(space, reward, params)
    dist = terminal_distribution(space, policy)
    quantiles = quantile_mass_report(space, reward, policy)
    mio.write_values_csv(os.path.join(out, "values.csv"), values)
    mio.write_terminal_dist_csv(os.path.join(out, "terminal_dist.csv"), dist, reward)
    mio.write_quantiles_csv(os.path.join(out, "quantiles.csv"), quantiles)
    _dump_resolved(out, cfg, "solve")
    root_value = values[space.root()]
    print(f"solved {len(dist)} terminals; root value {root_value:.6g}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args)
    params = gm_params(cfg)
    space, reward, _ = build_task(cfg)
    out = _outdir(args)
    tr = cfg["train"]
    try:
        config = TrainConfig(params=params,
                             batch_size=int(tr["batch_size"]),
                             learning_rate=float(tr["learning_rate"]),
                             steps=int(tr["steps"]),
                             explore_eps=float(tr["explore_eps"]),
                             grad_clip=float(tr["grad_clip"]),
                             adam_eps=float(tr["adam_eps"]),
                             seed=int(cfg["seed"]))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}")
    if params.q == 0.0 and params.omega == 1.0:
        print("GFN mode: q=0, omega=1 trains the proportional-sampling objective")
    qfunc, log = train(space, reward, config)
    mio.write_trainlog_csv(os.path.join(out, "trainlog.csv"), log)
    mio.write_q_snapshot(os.path.join(out, "qvalues.tsv"), qfunc)
    _dump_resolved(out, cfg, "train")
    final = log.rows[-1] if log.rows else (0, float("nan"), float("nan"), 0)
    print(f"trained {config.steps} steps; final loss {final[1]:.6g}, "
          f"mean reward {final[2]:.6g}, {final[3]} samples")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args)
    params = gm_params(cfg)
    space, reward, task = build_task(cfg)
    if not os.path.exists(args.snapshot):
        raise UsageError(f"snapshot not found: {args.snapshot}")
    out = _outdir(args)
    qfunc = mio.read_q_snapshot(args.snapshot, space)
    ev = cfg["eval"]
    protocol = EvalProtocol(
        temperatures=tuple(ev["temperatures"]),
        samples_per_temperature=int(ev["samples_per_temperature"]),
        k=int(ev["k"]),
        delta=ev["delta"],
        seed=int(cfg["seed"]),
    )
    report = evaluate_sampler(space, reward, qfunc, params, protocol)
    mio.write_json(os.path.join(out, "report.json"), report.to_json_dict())
    if task is not None:
        metrics = mode_metrics(task, [seq for seq, _ in report.objects],
                               found_radius=int(ev.get("found_radius", 28)))
        rows = [(i, mode, int(dist), int(dist <= int(ev.get("found_radius", 28))))
                for i, (mode, dist) in enumerate(
                    zip(task.modes, metrics.per_mode_min_distance))]
        mio.write_csv(os.path.join(out, "metrics.csv"),
                      ("mode_index", "mode", "min_distance", "found"), rows)
        print(f"modes found: {metrics.modes_found}/{len(task.modes)}, "
              f"avg min distance {metrics.avg_min_distance:.6g}")
    _dump_resolved(out, cfg, "eval")
    print(f"mean mode reward {report.mean_mode_reward:.6g} over "
          f"{report.k_selected} selected")
    return 0


def cmd_uset(args) -> int:
    d = None
    if args.d:
        try:
            d = tuple(float(v) for v in args.d.split(","))
        except ValueError:
            raise UsageError(f"bad reference distribution: {args.d!r}")
    try:
        spec = UncertaintySetSpec(kind=args.kind, omega=args.omega, q=args.q, d=d)
        lo, hi = (float(v) for v in args.range.split(","))
        rows = boundary_trace_2d(spec, args.grid, lo, hi, steps=args.steps)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _outdir(args)
    mio.write_boundary_csv(os.path.join(out, "boundary.csv"), rows)
    origin = membership(spec, np.zeros(2 if d is None else len(d)))
    _dump_resolved(out, {"kind": args.kind, "omega": args.omega, "q": args.q,
                         "d": list(d) if d else None, "grid": args.grid,
                         "range": [lo, hi], "steps": args.steps}, "uset")
    print(f"margin at origin: {origin.margin:.6g} ({origin.status})")
    return 0


def cmd_gen_modes(args) -> int:
    if args.n < 1 or args.num_modes < 1:
        raise UsageError("--n and --num-modes must be positive")
    modes = generate_modes(args.n, args.num_modes, args.seed or 0)
    mio.atomic_write_text(args.out, "\n".join(modes) + "\n")
    print(f"wrote {len(modes)} modes of {args.n} bits to {args.out}")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (execution is currently serial)")
    parser.add_argument("--q", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--omega", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="mellowgen",
                     description="solve, train and evaluate sequence-generation "
                                 "MDPs with mellowmax-family regularizers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[], help="exact backward-recursion solve")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train a tabular Q-function online")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="temperature-swept diverse evaluation")
    _add_common(p)
    p.add_argument("--snapshot", required=True, help="Q snapshot TSV from train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("uset", help="trace a 2-action reward-uncertainty set")
    p.add_argument("--kind", required=True,
                   choices=("neg-shannon", "kl", "gm"))
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--d", default=None, help="comma-separated reference dist")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--range", default="-2,2", help="lo,hi for both axes")
    p.add_argument("--steps", type=int, default=1,
                   help="trace the k-step Minkowski-sum set")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_uset)

    p = sub.add_parser("gen-modes", help="write a random bit-string modes file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--num-modes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_modes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
