"""Benchmark task registry.

A task bundles a plant, a cost, the sampling covariance, the horizon, the
distribution of initial states used for convergence experiments and the
MPC scenario (start state, waypoint box and completion radius).

Initial states and waypoint sequences are drawn from their own seed streams
(``spawn_key`` 2 and 3) so they do not depend on the solver or its noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import costs, dynamics
from .params import CarParams, HovercraftParams, PendulumParams, QuadrotorParams, with_overrides

INITIAL_STATE_KEY = 2
WAYPOINT_KEY = 3


@dataclass(frozen=True, eq=False)
class MpcDefaults:
    U: int
    K: int
    gamma: float
    sim_duration: float
    # Sampling covariance for receding-horizon runs; the task's own sigma when None.
    sigma: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Task:
    name: str
    params: object
    make_dynamics: Callable[[object], dynamics.DynamicsModel]
    make_cost: Callable[[], costs.CostModel]
    sigma: np.ndarray
    horizon: int
    sample_initial: Callable[[np.random.Generator, object], np.ndarray]
    mpc: MpcDefaults
    mpc_initial: Callable[[object], np.ndarray]
    target_low: np.ndarray | None = None
    target_high: np.ndarray | None = None
    target_radius: float | None = None
    laps: bool = False

    def dynamics(self, overrides: dict | None = None) -> dynamics.DynamicsModel:
        return self.make_dynamics(with_overrides(self.params, overrides))

    def cost(self) -> costs.CostModel:
        return self.make_cost()

    def initial_state(self, seed: int, overrides: dict | None = None) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(INITIAL_STATE_KEY,)))
        return self.sample_initial(rng, with_overrides(self.params, overrides))

    @property
    def mpc_sigma(self) -> np.ndarray:
        return self.sigma if self.mpc.sigma is None else self.mpc.sigma

    @property
    def has_waypoints(self) -> bool:
        return self.target_radius is not None


def _pendulum_initial(rng, params):
    # Near the hanging equilibrium.
    return rng.uniform(-0.3, 0.3, size=2)


def _hovercraft_initial(rng, params):
    x = np.zeros(8)
    x[:2] = rng.uniform(-1.0, 1.0, size=2)
    x[2] = rng.uniform(-math.pi, math.pi)
    return x


def _quadrotor_initial(rng, params):
    x = dynamics.Quadrotor(params).initial_state()
    x[:3] = rng.uniform(-1.0, 1.0, size=3)
    return x


def _car_pose(phi, speed):
    # Point on the track (x/2)^2 + y^2 = 1, heading counter-clockwise.
    x = np.zeros(8)
    x[0] = 2.0 * math.cos(phi)
    x[1] = math.sin(phi)
    x[2] = math.atan2(math.cos(phi), -2.0 * math.sin(phi))
    x[3] = speed
    return x


def _car_initial(rng, params):
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return _car_pose(phi, rng.uniform(0.5, 1.5))


TASKS: dict[str, Task] = {
    "pendulum": Task(
        name="pendulum",
        # Weak gravity (g/l = 0.2 s^-2) so a full swing-up fits the 15 s
        # horizon with torques comparable to the sampling noise.
        params=PendulumParams(gravity=0.2, damping=0.01, dt=0.1),
        make_dynamics=dynamics.Pendulum,
        make_cost=costs.PendulumCost,
        sigma=np.array([[1e-4]]),
        horizon=150,
        sample_initial=_pendulum_initial,
        mpc=MpcDefaults(U=10, K=100, gamma=0.8, sim_duration=10.0),
        mpc_initial=lambda p: np.zeros(2),
    ),
    "hovercraft": Task(
        name="hovercraft",
        params=HovercraftParams(),
        make_dynamics=dynamics.Hovercraft,
        make_cost=costs.HovercraftCost,
        sigma=1e-4 * np.eye(2),
        horizon=40,
        sample_initial=_hovercraft_initial,
        # Warm-started plans only need small per-step corrections.
        mpc=MpcDefaults(U=10, K=100, gamma=0.8, sim_duration=120.0, sigma=3e-6 * np.eye(2)),
        mpc_initial=lambda p: np.zeros(8),
        target_low=np.array([-1.5, -1.5]),
        target_high=np.array([1.5, 1.5]),
        target_radius=0.2,
    ),
    "quadrotor": Task(
        name="quadrotor",
        params=QuadrotorParams(),
        make_dynamics=dynamics.Quadrotor,
        make_cost=costs.QuadrotorCost,
        sigma=1e5 * np.eye(4),
        horizon=40,
        sample_initial=_quadrotor_initial,
        mpc=MpcDefaults(U=10, K=100, gamma=0.8, sim_duration=60.0),
        mpc_initial=lambda p: dynamics.Quadrotor(p).initial_state(),
        target_low=np.array([-1.5, -1.5, -1.0]),
        target_high=np.array([1.5, 1.5, 1.0]),
        target_radius=0.3,
    ),
    "car": Task(
        name="car",
        params=CarParams(),
        make_dynamics=dynamics.Car,
        make_cost=costs.CarCost,
        sigma=1e-3 * np.eye(2),
        horizon=30,
        sample_initial=_car_initial,
        mpc=MpcDefaults(U=25, K=200, gamma=0.3, sim_duration=60.0),
        # On the start line, moving at the desired speed.
        mpc_initial=lambda p: _car_pose(0.0, 1.25),
        laps=True,
    ),
}


def get(name: str) -> Task:
    try:
        return TASKS[name]
    except KeyError:
        raise KeyError(f"unknown task {name!r} (expected one of: {', '.join(TASKS)})") from None
