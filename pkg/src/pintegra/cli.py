"""Experiment harness: ``pintegra converge|mpc|sweep --config FILE --out DIR``.

converge
    Runs every method over every seed from the task's seeded initial states,
    plus one DDP reference per seed. Writes ``converge.csv`` (one row per
    iteration), ``converge_summary.csv`` (final costs normalised by DDP) and
    ``converge_normalized.csv`` (seed-averaged curves divided by the mean DDP
    cost).
mpc
    Receding-horizon runs per method and seed. Writes ``mpc_steps.csv`` and
    ``mpc_summary.csv`` (completions, mean time and mean accumulated cost to
    completion; per seed and aggregated under seed ``all``).
sweep
    Cartesian product of a parameter grid (``gamma``, ``K``, ``lambda``,
    ``U``) with methods and seeds. Writes ``sweep.csv`` with the final cost
    and the first iteration whose cost is below ``threshold`` times the cost
    of the zero plan.

Exit status: 0 on success, 1 for configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import tasks
from .core import ConfigError, PathIntegralConfig, optimize
from .ddp import DdpConfig, solve_detailed
from .mpc import MpcConfig, run_mpc
from .records import (
    ConvergeRow,
    ConvergeSummaryRow,
    MpcStepRow,
    MpcSummaryRow,
    NormalizedRow,
    SweepRow,
    write_csv,
)

log = logging.getLogger("pintegra")

GRID_KEYS = ("gamma", "K", "lambda", "U")


@dataclass
class ExperimentConfig:
    task: str
    methods: list = field(default_factory=lambda: ["baseline", "nag"])
    K: int | None = None
    U: int | None = None
    lambda_: float = 0.01
    gamma: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    output: str | None = None
    sigma: object = None
    horizon: int | None = None
    dynamics: dict = field(default_factory=dict)
    correction: str = "task_r"
    adagrad_epsilon: float = 1e-8
    adam_alpha: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    backend: str = "auto"
    timing: bool = False
    ddp: bool = True
    ddp_config: dict = field(default_factory=dict)
    sim_duration: float | None = None
    target_radius: float | None = None
    grid: dict = field(default_factory=dict)
    threshold: float = 0.5


_NUM = (int, float)
# JSON key -> (attribute, accepted types)
_SCHEMA = {
    "task": ("task", (str,)),
    "methods": ("methods", (list,)),
    "K": ("K", (int,)),
    "U": ("U", (int,)),
    "lambda": ("lambda_", _NUM),
    "gamma": ("gamma", _NUM),
    "seeds": ("seeds", (list,)),
    "output": ("output", (str,)),
    "sigma": ("sigma", _NUM + (list,)),
    "horizon": ("horizon", (int,)),
    "dynamics": ("dynamics", (dict,)),
    "correction": ("correction", (str,)),
    "adagrad_epsilon": ("adagrad_epsilon", _NUM),
    "adam_alpha": ("adam_alpha", _NUM),
    "adam_beta1": ("adam_beta1", _NUM),
    "adam_beta2": ("adam_beta2", _NUM),
    "adam_epsilon": ("adam_epsilon", _NUM),
    "backend": ("backend", (str,)),
    "timing": ("timing", (bool,)),
    "ddp": ("ddp", (bool,)),
    "ddp_config": ("ddp_config", (dict,)),
    "sim_duration": ("sim_duration", _NUM),
    "target_radius": ("target_radius", _NUM),
    "grid": ("grid", (dict,)),
    "threshold": ("threshold", _NUM),
}


def _type_ok(value, types) -> bool:
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    if "task" not in doc:
        raise ConfigError("missing required field 'task'")
    kwargs = {}
    for key, value in doc.items():
        attr, types = _SCHEMA[key]
        if not _type_ok(value, types):
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(f"field '{key}': expected {names}, got {type(value).__name__}")
        kwargs[attr] = value
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.task not in tasks.TASKS:
        raise ConfigError(f"field 'task': unknown task {cfg.task!r} (expected one of: {', '.join(tasks.TASKS)})")
    if not cfg.methods or not all(isinstance(m, str) for m in cfg.methods):
        raise ConfigError("field 'methods': expected a non-empty list of method names")
    if not cfg.seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in cfg.seeds):
        raise ConfigError("field 'seeds': expected a non-empty list of non-negative integers")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("field 'seeds': duplicate seeds")
    for key in ("K", "horizon"):
        v = getattr(cfg, key)
        if v is not None and v < 1:
            raise ConfigError(f"field '{key}': must be positive")
    if cfg.U is not None and cfg.U < 0:
        raise ConfigError("field 'U': must be non-negative")
    if cfg.sim_duration is not None and cfg.sim_duration < 0:
        raise ConfigError("field 'sim_duration': must be non-negative")
    if not 0 < cfg.threshold:
        raise ConfigError("field 'threshold': must be positive")
    task = tasks.get(cfg.task)
    known = {f.name for f in fields(task.params)}
    bad = sorted(set(cfg.dynamics) - known)
    if bad:
        raise ConfigError(f"field 'dynamics': unknown parameter(s) {', '.join(bad)} for {cfg.task}")
    for k, v in cfg.dynamics.items():
        if not _type_ok(v, _NUM):
            raise ConfigError(f"field 'dynamics.{k}': expected a number")
    ddp_known = {f.name for f in fields(DdpConfig)}
    bad = sorted(set(cfg.ddp_config) - ddp_known)
    if bad:
        raise ConfigError(f"field 'ddp_config': unknown option(s) {', '.join(bad)}")
    bad = sorted(set(cfg.grid) - set(GRID_KEYS))
    if bad:
        raise ConfigError(f"field 'grid': unknown key(s) {', '.join(bad)} (allowed: {', '.join(GRID_KEYS)})")
    for k, values in cfg.grid.items():
        if not isinstance(values, list) or not values or not all(_type_ok(v, _NUM) for v in values):
            raise ConfigError(f"field 'grid.{k}': expected a non-empty list of numbers")
    # Build every solver configuration once so value errors surface now.
    for method in cfg.methods:
        solver_config(cfg, method, seed=0)
    DdpConfig(**cfg.ddp_config)


def _sigma(cfg: ExperimentConfig, default: np.ndarray) -> np.ndarray:
    if cfg.sigma is None:
        return default
    s = np.asarray(cfg.sigma, dtype=np.float64)
    m = default.shape[0]
    if s.ndim == 0:
        return float(s) * np.eye(m)
    if s.ndim == 1:
        if s.shape[0] != m:
            raise ConfigError(f"field 'sigma': diagonal needs {m} entries")
        return np.diag(s)
    if s.shape != (m, m):
        raise ConfigError(f"field 'sigma': expected a {m}x{m} matrix")
    return s


def solver_config(cfg: ExperimentConfig, method: str, seed: int, *, mpc: bool = False,
                  threads: int = 1, **override) -> PathIntegralConfig:
    task = tasks.get(cfg.task)
    if mpc:
        U = cfg.U if cfg.U is not None else task.mpc.U
        K = cfg.K if cfg.K is not None else task.mpc.K
        gamma = cfg.gamma if cfg.gamma is not None else task.mpc.gamma
        sigma = _sigma(cfg, task.mpc_sigma)
    else:
        U = cfg.U if cfg.U is not None else 100
        K = cfg.K if cfg.K is not None else 1000
        gamma = cfg.gamma if cfg.gamma is not None else 0.8
        sigma = _sigma(cfg, task.sigma)
    params = dict(
        lambda_=cfg.lambda_, K=K, U=U, gamma=gamma, sigma=sigma, method=method, seed=seed,
        adagrad_epsilon=cfg.adagrad_epsilon, adam_alpha=cfg.adam_alpha, adam_beta1=cfg.adam_beta1,
        adam_beta2=cfg.adam_beta2, adam_epsilon=cfg.adam_epsilon, correction=cfg.correction,
        horizon=cfg.horizon or task.horizon, threads=threads, backend=cfg.backend,
    )
    params.update(override)
    try:
        return PathIntegralConfig(**params)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# commands


def _ms(t0: float, timing: bool):
    return (time.perf_counter() - t0) * 1e3 if timing else None


def run_converge(cfg: ExperimentConfig, out: str, threads: int = 1) -> dict:
    task = tasks.get(cfg.task)
    dyn = task.dynamics(cfg.dynamics)
    cost = task.cost()
    rows, summary = [], []
    finals: dict[tuple, np.ndarray] = {}
    ddp_final: dict[int, float] = {}
    ddp_at_u: dict[int, float] = {}
    for seed in cfg.seeds:
        x0 = task.initial_state(seed, cfg.dynamics)
        if cfg.ddp:
            t0 = time.perf_counter()
            res = solve_detailed(x0, dyn, cost, config=DdpConfig(**cfg.ddp_config),
                                 horizon=cfg.horizon or task.horizon)
            wall = _ms(t0, cfg.timing)
            if res.degraded:
                log.warning("%s seed %d: DDP reference is degraded", cfg.task, seed)
            for i, c in enumerate(res.cost_history):
                rows.append(ConvergeRow(cfg.task, "DDP", seed, i, float(c), wall))
            ddp_final[seed] = res.cost
            U = solver_config(cfg, cfg.methods[0], seed).U
            ddp_at_u[seed] = float(res.cost_history[min(U, len(res.cost_history) - 1)])
        for method in cfg.methods:
            pic = solver_config(cfg, method, seed, threads=threads)
            t0 = time.perf_counter()
            try:
                _, hist = optimize(x0, dyn, cost, pic)
            except (RuntimeError, FloatingPointError) as exc:
                log.error("%s/%s seed %d failed: %s", cfg.task, method, seed, exc)
                rows.append(ConvergeRow(cfg.task, method, seed, -1, float("nan"), _ms(t0, cfg.timing)))
                continue
            wall = _ms(t0, cfg.timing)
            for j, c in enumerate(hist):
                rows.append(ConvergeRow(cfg.task, method, seed, j, float(c), wall))
            finals[(method, seed)] = hist
            ref = ddp_final.get(seed, float("nan"))
            summary.append(ConvergeSummaryRow(cfg.task, method, seed, float(hist[-1]), ref,
                                              ddp_at_u.get(seed, float("nan")), float(hist[-1]) / ref))
    norm_rows = []
    ref_mean = float(np.mean(list(ddp_final.values()))) if ddp_final else float("nan")
    for method in cfg.methods:
        curves = [finals[(method, s)] for s in cfg.seeds if (method, s) in finals]
        if not curves:
            continue
        mean = np.mean(curves, axis=0)
        for j, c in enumerate(mean):
            norm_rows.append(NormalizedRow(cfg.task, method, j, float(c), float(c) / ref_mean))
    write_csv(os.path.join(out, "converge.csv"), ConvergeRow, rows)
    write_csv(os.path.join(out, "converge_summary.csv"), ConvergeSummaryRow, summary)
    write_csv(os.path.join(out, "converge_normalized.csv"), NormalizedRow, norm_rows)
    report = {}
    for method in cfg.methods:
        fin = [r.final_cost for r in summary if r.method == method]
        if fin:
            report[method] = (float(np.mean(fin)), float(np.mean(fin)) / ref_mean)
    print(f"{cfg.task}: mean final cost (normalised by DDP = {ref_mean:.6g})")
    for method, (c, n) in report.items():
        print(f"  {method:10s} {c:12.6g} {n:8.4f}")
    return report


def _mpc_config(cfg: ExperimentConfig, task, method: str, seed: int, threads: int) -> MpcConfig:
    duration = cfg.sim_duration if cfg.sim_duration is not None else task.mpc.sim_duration
    radius = cfg.target_radius if cfg.target_radius is not None else task.target_radius
    try:
        return MpcConfig(solver_config(cfg, method, seed, mpc=True, threads=threads), duration,
                         radius, task.target_low, task.target_high, task.laps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_mpc_command(cfg: ExperimentConfig, out: str, threads: int = 1) -> dict:
    task = tasks.get(cfg.task)
    dyn = task.dynamics(cfg.dynamics)
    cost = task.cost()
    x0 = task.mpc_initial(dyn.params)
    steps, summary = [], []
    report = {}
    for method in cfg.methods:
        all_t, all_c, total, flagged = [], [], 0, 0
        for seed in cfg.seeds:
            mcfg = _mpc_config(cfg, task, method, seed, threads)
            lg = run_mpc(mcfg, dyn, cost, x0)
            for i in range(len(lg)):
                steps.append(MpcStepRow(
                    cfg.task, method, seed, i, float(lg.time[i]), float(lg.running_cost[i]),
                    int(lg.completions[i]), bool(lg.flagged[i]), tuple(lg.targets[i].tolist()),
                    tuple(lg.states[i].tolist()), tuple(lg.controls[i].tolist()),
                ))
            s = lg.summary
            nflag = int(np.sum(lg.flagged))
            summary.append(MpcSummaryRow(cfg.task, method, str(seed), s.completions,
                                         s.mean_time_to_completion, s.mean_accumulated_cost, nflag))
            all_t += lg.completion_times.tolist()
            all_c += lg.completion_costs.tolist()
            total += s.completions
            flagged += nflag
        mt = float(np.mean(all_t)) if all_t else float("nan")
        mc = float(np.mean(all_c)) if all_c else float("nan")
        summary.append(MpcSummaryRow(cfg.task, method, "all", total, mt, mc, flagged))
        report[method] = (total, mt, mc)
    write_csv(os.path.join(out, "mpc_steps.csv"), MpcStepRow, steps)
    write_csv(os.path.join(out, "mpc_summary.csv"), MpcSummaryRow, summary)
    print(f"{cfg.task}: completions / mean time / mean accumulated cost to completion")
    for method, (n, t, c) in report.items():
        print(f"  {method:10s} {n:6d} {t:10.4g} {c:12.6g}")
    return report


def iterations_to_threshold(history, threshold: float) -> int:
    hit = np.nonzero(np.asarray(history) <= threshold * history[0])[0]
    return int(hit[0]) if hit.size else -1


def run_sweep(cfg: ExperimentConfig, out: str, threads: int = 1) -> list:
    task = tasks.get(cfg.task)
    dyn = task.dynamics(cfg.dynamics)
    cost = task.cost()
    keys = [k for k in GRID_KEYS if k in cfg.grid]
    rows = []
    for values in itertools.product(*(cfg.grid[k] for k in keys)):
        cell = dict(zip(keys, values))
        override = {}
        for k, v in cell.items():
            override["lambda_" if k == "lambda" else k] = int(v) if k in ("K", "U") else float(v)
        for method in cfg.methods:
            for seed in cfg.seeds:
                pic = solver_config(cfg, method, seed, threads=threads, **override)
                x0 = task.initial_state(seed, cfg.dynamics)
                try:
                    _, hist = optimize(x0, dyn, cost, pic)
                    final, hit = float(hist[-1]), iterations_to_threshold(hist, cfg.threshold)
                except (RuntimeError, FloatingPointError) as exc:
                    log.error("%s/%s seed %d cell %s failed: %s", cfg.task, method, seed, cell, exc)
                    final, hit = float("nan"), -1
                rows.append(SweepRow(cfg.task, method, pic.gamma, pic.K, pic.lambda_, pic.U, seed, final, hit))
    write_csv(os.path.join(out, "sweep.csv"), SweepRow, rows)
    print(f"{cfg.task}: {len(rows)} sweep rows")
    return rows


COMMANDS = {"converge": run_converge, "mpc": run_mpc_command, "sweep": run_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pintegra", description="Accelerated path integral control experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment file")
    p.add_argument("--out", help="output directory (default: the config's 'output' field or '.')")
    p.add_argument("--threads", type=int, default=1, help="worker threads for rollouts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = args.out or cfg.output or "."
    try:
        os.makedirs(out, exist_ok=True)
        COMMANDS[args.command](cfg, out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
