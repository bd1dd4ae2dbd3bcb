"""Receding-horizon control with warm-started (accelerated) path integral updates.

Each control step runs ``U`` updates from the current state, applies the
first control of the plan, then shifts the plan and its momentum one step
forward, repeating the last entry at the tail. The plant advances one ``dt``
per control step.

Completion rules: waypoint tasks count a completion whenever the vehicle
enters the target radius, after which the next waypoint of a seeded
sequence becomes the target; the car counts a lap each time it crosses the
half-line ``y = 0, x > 0`` in the counter-clockwise driving direction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    AllRolloutsDivergedError,
    ConfigError,
    ControlSequence,
    Momentum,
    OptimizerState,
    PathIntegralConfig,
    resolve_horizon,
    sample_noise,
    update,
)
from .costs import CostModel
from .dynamics import DynamicsModel

log = logging.getLogger(__name__)

MPC_NOISE_KEY = 1


@dataclass(frozen=True, eq=False)
class MpcConfig:
    solver: PathIntegralConfig  # U, K, gamma, lambda, sigma, method, seed
    sim_duration: float
    target_radius: float | None = None
    target_low: np.ndarray | None = None
    target_high: np.ndarray | None = None
    laps: bool = False
    # Clip the plan into the actuator range after each control step. Without
    # it momentum can push mu far past saturation, where noise no longer
    # changes any rollout and the plan stays stuck.
    project_plan: bool = True

    def __post_init__(self):
        if self.solver.U < 1:
            raise ConfigError("MPC needs at least one update per control step (U >= 1)")
        if not self.sim_duration >= 0:
            raise ConfigError(f"sim_duration must be non-negative, got {self.sim_duration}")
        if self.target_radius is not None:
            if not self.target_radius > 0:
                raise ConfigError("target_radius must be positive")
            if self.target_low is None or self.target_high is None:
                raise ConfigError("waypoint tasks need target_low and target_high")
            lo = np.asarray(self.target_low, dtype=np.float64)
            hi = np.asarray(self.target_high, dtype=np.float64)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ConfigError("target box must satisfy target_low <= target_high")
            object.__setattr__(self, "target_low", lo)
            object.__setattr__(self, "target_high", hi)


@dataclass(frozen=True, eq=False)
class MpcSummary:
    completions: int
    mean_time_to_completion: float  # nan when nothing was completed
    mean_accumulated_cost: float


@dataclass(frozen=True, eq=False)
class MpcLog:
    time: np.ndarray  # (N,)
    states: np.ndarray  # (N, n), state at the start of each step
    controls: np.ndarray  # (N, m), applied (clamped) control
    running_cost: np.ndarray  # (N,)
    completions: np.ndarray  # (N,), count after the step
    targets: np.ndarray  # (N, d), active target during the step (d = 0 without waypoints)
    flagged: np.ndarray  # (N,) bool, optimizer failed and the last control was held
    summary: MpcSummary
    completion_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    completion_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.time.shape[0]


def shift(values: np.ndarray) -> np.ndarray:
    """Drop the first column, then fill the tail with the new second-to-last: ``v[T-1] <- v[T-2]``."""
    values = np.asarray(values)
    out = np.empty_like(values)
    out[:, :-1] = values[:, 1:]
    out[:, -1] = values[:, -1]
    return out


def shift_state(state: OptimizerState) -> OptimizerState:
    """Warm start for the next control step: every per-timestep array is shifted."""
    return replace(
        state,
        mu=ControlSequence(shift(state.mu.values)),
        delta_mu=Momentum(shift(state.delta_mu.values)),
        adagrad_accumulator=shift(state.adagrad_accumulator),
        adam_m=shift(state.adam_m),
        adam_v=shift(state.adam_v),
    )


def project(state: OptimizerState, dynamics: DynamicsModel) -> OptimizerState:
    mu = dynamics.clamp(state.mu.values.T).T
    return replace(state, mu=ControlSequence(mu))


def mpc_step(x, state: OptimizerState, config: PathIntegralConfig, dynamics: DynamicsModel,
             cost: CostModel, step: int = 0, last_control=None, project_plan: bool = False):
    """One control step.

    Returns ``(applied_control, next_state, flagged)``. ``next_state`` is
    already shifted for the following step (after clipping the plan into the
    actuator range when ``project_plan`` is set). If every rollout diverges
    the previous control is held (zeros if there is none) and the step is
    flagged; the plan is still shifted so the horizon stays aligned.
    """
    x = np.asarray(x, dtype=np.float64)
    T = state.mu.values.shape[1]
    flagged = False
    try:
        for j in range(config.U):
            noise = sample_noise(config, config.seed, T, spawn_key=(MPC_NOISE_KEY, step, j))
            state = update(x, state, noise, dynamics, cost, config)
        u = dynamics.clamp(state.mu.values[:, 0])
    except AllRolloutsDivergedError as exc:
        log.warning("step %d: %s; holding the previous control", step, exc)
        flagged = True
        u = np.zeros(dynamics.m) if last_control is None else np.asarray(last_control, dtype=np.float64)
    if project_plan:
        state = project(state, dynamics)
    return u, shift_state(state), flagged


class WaypointSequence:
    """Seeded uniform waypoints in a box; consecutive ones are at least ``2 * radius`` apart."""

    def __init__(self, low, high, radius: float, seed: int, key: int = 3):
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.radius = radius
        self._rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
        self._last = None

    def next(self) -> np.ndarray:
        for _ in range(1000):
            p = self._rng.uniform(self.low, self.high)
            if self._last is None or np.linalg.norm(p - self._last) > 2.0 * self.radius:
                break
        self._last = p
        return p


def _position(x, dim):
    return np.asarray(x[:dim])


def run_mpc(config: MpcConfig, dynamics: DynamicsModel, cost: CostModel, x0) -> MpcLog:
    solver = config.solver
    if solver.m != dynamics.m:
        raise ConfigError(f"sigma is {solver.m}x{solver.m} but the plant has {dynamics.m} controls")
    T = resolve_horizon(dynamics, solver)
    steps = int(round(config.sim_duration / dynamics.dt))
    n, m = dynamics.n, dynamics.m
    waypoints = None
    dim = 0
    if config.target_radius is not None:
        waypoints = WaypointSequence(config.target_low, config.target_high, config.target_radius, solver.seed)
        dim = waypoints.low.shape[0]
        cost = cost.with_target(waypoints.next())

    times = np.arange(steps) * dynamics.dt
    states = np.empty((steps, n))
    controls = np.empty((steps, m))
    running = np.empty(steps)
    counts = np.zeros(steps, dtype=np.int64)
    targets = np.empty((steps, dim))
    flags = np.zeros(steps, dtype=bool)
    done_t, done_c = [], []

    x = np.array(x0, dtype=np.float64)
    state = OptimizerState.zeros(m, T)
    R = cost.R
    last = None
    completed = 0
    task_start = 0.0
    accumulated = 0.0
    for i in range(steps):
        states[i] = x
        if dim:
            targets[i] = cost.target[:dim]
        u, state, flagged = mpc_step(x, state, solver, dynamics, cost, step=i, last_control=last,
                                     project_plan=config.project_plan)
        last = u
        c = cost.q(x) + float(u @ R @ u)
        running[i] = c
        controls[i] = u
        flags[i] = flagged
        accumulated += c
        x_next = dynamics.step(x, u)
        if not np.all(np.isfinite(x_next)):
            raise RuntimeError(f"plant state became non-finite at step {i}")
        finished = False
        if waypoints is not None:
            target = cost.target[:dim]
            finished = np.linalg.norm(_position(x_next, dim) - target) < config.target_radius
            if finished:
                cost = cost.with_target(waypoints.next())
        elif config.laps:
            finished = x[1] < 0.0 <= x_next[1] and x_next[0] > 0.0
        if finished:
            completed += 1
            t_end = (i + 1) * dynamics.dt
            done_t.append(t_end - task_start)
            done_c.append(accumulated)
            task_start = t_end
            accumulated = 0.0
        counts[i] = completed
        x = x_next

    done_t = np.array(done_t)
    done_c = np.array(done_c)
    summary = MpcSummary(
        completed,
        float(np.mean(done_t)) if completed else float("nan"),
        float(np.mean(done_c)) if completed else float("nan"),
    )
    return MpcLog(times, states, controls, running, counts, targets, flags, summary, done_t, done_c)
