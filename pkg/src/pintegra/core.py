"""Iterative path integral control and its accelerated variants.

One update samples ``K`` noise sequences, simulates ``u_k = mean + eps_k``
from the current state, converts the modified trajectory costs into
normalised exponential weights and moves the control plan by the weighted
noise average. The four update laws differ only in how that weighted
average (the descent direction) is turned into a step:

* ``baseline``: step = direction.
* ``nag``: rollouts are drifted by ``gamma * delta_mu`` and the step
  accumulates momentum, ``delta_mu <- gamma * delta_mu + direction``.
* ``adagrad``: per-element step size ``(G + eps)**-0.5`` with ``G`` the
  running sum of squared directions.
* ``adam``: bias-corrected first/second moment estimates of the direction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import backend as _backend
from .costs import CostModel, trajectory_cost
from .dynamics import DynamicsModel


class ConfigError(ValueError):
    """Invalid solver or experiment configuration."""


class AllRolloutsDivergedError(RuntimeError):
    """Every rollout in an update produced a non-finite cost."""


class Method(str, enum.Enum):
    BASELINE = "baseline"
    NAG = "nag"
    ADAGRAD = "adagrad"
    ADAM = "adam"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown method {value!r} (expected one of: {names})") from None


class Correction(str, enum.Enum):
    """Weight ``W`` of the importance-sampling term ``sum_t mean_t^T W eps_t``.

    ``TASK_R`` uses the task's control weight ``R`` (zero for tasks without
    a control cost), ``SIGMA`` uses ``lambda Sigma^-1 / 2`` and
    ``LIKELIHOOD_RATIO`` uses ``lambda Sigma^-1``, which reproduces the exact
    Gaussian ratio ``p_0 / p`` up to a per-update constant.
    """

    TASK_R = "task_r"
    SIGMA = "sigma"
    LIKELIHOOD_RATIO = "likelihood_ratio"


def _frozen(values, name: str, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (m, T) array, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ControlSequence:
    """Mean control plan, ``(m, T)``; read-only and finite."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "control sequence"))

    @classmethod
    def zeros(cls, m: int, T: int) -> "ControlSequence":
        return cls(np.zeros((m, T)))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Momentum:
    """Last applied plan increment, same layout as :class:`ControlSequence`."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "momentum"))

    @classmethod
    def zeros(cls, m: int, T: int) -> "Momentum":
        return cls(np.zeros((m, T)))


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    epsilon: np.ndarray  # (K, m, T)
    seed: int = 0

    @property
    def K(self) -> int:
        return self.epsilon.shape[0]


@dataclass(frozen=True, eq=False)
class PathIntegralConfig:
    lambda_: float = 0.01
    K: int = 1000
    U: int = 100
    gamma: float = 0.8
    sigma: np.ndarray = field(default_factory=lambda: np.eye(1))
    method: Method = Method.BASELINE
    seed: int = 0
    adagrad_epsilon: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    adam_alpha: float = 1.0
    correction: Correction = Correction.TASK_R
    horizon: int | None = None
    threads: int = 1
    backend: str = "auto"

    def __post_init__(self):
        sigma = np.atleast_2d(np.array(self.sigma, dtype=np.float64))
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "correction", Correction(self.correction))
        if not self.lambda_ > 0:
            raise ConfigError(f"lambda must be positive, got {self.lambda_}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if int(self.K) < 1:
            raise ConfigError(f"K must be positive, got {self.K}")
        if int(self.U) < 0:
            raise ConfigError(f"U must be non-negative, got {self.U}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if sigma.shape[0] != sigma.shape[1] or not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
            raise ConfigError("sigma must be a symmetric square matrix")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ConfigError("sigma must be positive definite") from None
        if not np.all(np.isfinite(chol)):
            raise ConfigError("sigma must be finite")
        if self.adagrad_epsilon <= 0 or self.adam_epsilon <= 0:
            raise ConfigError("adagrad_epsilon and adam_epsilon must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        chol.setflags(write=False)
        object.__setattr__(self, "_chol", chol)

    @property
    def m(self) -> int:
        return self.sigma.shape[0]

    @property
    def sigma_chol(self) -> np.ndarray:
        return self._chol

    def correction_weight(self, cost: CostModel | None = None) -> np.ndarray:
        """Matrix ``W`` of the correction term for rollouts scored by ``cost``."""
        if self.correction is Correction.TASK_R:
            if cost is None:
                raise ValueError("the task_r correction needs the cost model")
            return np.asarray(cost.R, dtype=np.float64)
        inv = np.linalg.inv(self.sigma)
        if self.correction is Correction.SIGMA:
            return 0.5 * self.lambda_ * inv
        return self.lambda_ * inv

    def replace(self, **changes) -> "PathIntegralConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Rollout:
    states: np.ndarray  # (n, T+1)
    controls: np.ndarray  # (m, T), after clamping
    k: int
    state_cost: float
    control_correction: float
    total_modified_cost: float
    control_cost: float = 0.0
    divergent: bool = False


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class OptimizerState:
    mu: ControlSequence
    delta_mu: Momentum
    adagrad_accumulator: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, m: int, T: int) -> "OptimizerState":
        z = np.zeros((m, T))
        return cls(ControlSequence(z), Momentum(z), z.copy(), z.copy(), z.copy(), 0)

    @classmethod
    def from_plan(cls, mu, delta_mu=None) -> "OptimizerState":
        mu = np.asarray(getattr(mu, "values", mu), dtype=np.float64)
        z = np.zeros_like(mu)
        dm = z if delta_mu is None else np.asarray(getattr(delta_mu, "values", delta_mu), dtype=np.float64)
        return cls(ControlSequence(mu), Momentum(dm), z.copy(), z.copy(), z.copy(), 0)


# --------------------------------------------------------------------------
# sampling and rollouts


def noise_seed(seed: int, *counters: int) -> np.random.SeedSequence:
    """Seed sequence for one draw; ``counters`` index iteration/step."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))


def sample_noise(config: PathIntegralConfig, rng_seed: int, horizon: int, spawn_key: Sequence[int] = ()) -> NoiseRealization:
    """Draw ``K`` i.i.d. ``N(0, Sigma)`` noise sequences of length ``horizon``."""
    rng = np.random.default_rng(noise_seed(rng_seed, *spawn_key))
    z = rng.standard_normal((config.K, horizon, config.m))
    eps = np.ascontiguousarray(np.swapaxes(z @ config.sigma_chol.T, 1, 2))
    return NoiseRealization(eps, int(rng_seed))


def rollout(x0, mu, drift, gamma: float, epsilon_k, dynamics: DynamicsModel, cost: CostModel,
            *, correction_weight=None, k: int = 0) -> Rollout:
    """Simulate one trajectory with ``u_t = mu_t + gamma * drift_t + eps_t``.

    A trajectory that leaves the finite range is flagged divergent and gets
    infinite costs.
    """
    mu = np.asarray(getattr(mu, "values", mu), dtype=np.float64)
    drift = np.asarray(getattr(drift, "values", drift), dtype=np.float64)
    eps = np.asarray(epsilon_k, dtype=np.float64)
    mean = mu + gamma * drift
    T = mean.shape[1]
    states = np.empty((dynamics.n, T + 1))
    states[:, 0] = x0
    controls = dynamics.clamp((mean + eps).T).T
    with np.errstate(all="ignore"):
        for t in range(T):
            states[:, t + 1] = dynamics.step(states[:, t], controls[:, t])
        s_x, s_u, s_tilde = trajectory_cost(states, controls, cost, mean, eps, correction_weight)
    correction = s_tilde - s_x
    divergent = not (np.all(np.isfinite(states)) and np.isfinite(s_x))
    if divergent:
        s_x = s_tilde = float("inf")
    return Rollout(states, controls, k, s_x, correction, s_tilde, s_u, divergent)


def evaluate_plan(x0, mu, dynamics: DynamicsModel, cost: CostModel, *, threads: int = 1, backend: str = "auto") -> float:
    """Noise-free trajectory cost ``S_x + S_u`` of a plan (controls clamped)."""
    mu = np.asarray(getattr(mu, "values", mu), dtype=np.float64)
    zero = np.zeros((1,) + mu.shape)
    s_x = _backend.rollout_costs(dynamics, cost, x0, mu, zero, threads=threads, backend=backend)[0]
    u = dynamics.clamp(mu.T).T
    return float(s_x + np.sum(u * (cost.R @ u)))


def compute_weights(rollouts, lambda_: float) -> WeightVector:
    """Normalised exponential weights ``exp(-S_k / lambda) / sum_j exp(-S_j / lambda)``.

    ``rollouts`` is a sequence of :class:`Rollout` or an array of modified
    costs. The minimum cost is subtracted before exponentiating; non-finite
    costs get weight exactly zero.
    """
    if len(rollouts) and isinstance(rollouts[0], Rollout):
        costs = np.array([r.total_modified_cost for r in rollouts], dtype=np.float64)
    else:
        costs = np.asarray(rollouts, dtype=np.float64)
    finite = np.isfinite(costs)
    if not np.any(finite):
        raise AllRolloutsDivergedError("all rollouts diverged; no finite trajectory cost")
    shifted = np.where(finite, costs - np.min(costs[finite]), np.inf)
    w = np.exp(-shifted / lambda_)
    return WeightVector(w / np.sum(w))


def weighted_noise(weights: WeightVector, noise: NoiseRealization) -> np.ndarray:
    """``sum_k w_k eps_k`` accumulated strictly in ascending ``k``.

    ``add.accumulate`` is a plain running sum (no pairwise blocking), so
    antithetic pairs stored next to each other cancel exactly.
    """
    terms = weights.weights[:, None, None] * noise.epsilon
    return np.add.accumulate(terms, axis=0)[-1]


def importance_correction(mean, eps, W) -> np.ndarray:
    """``sum_t mean_t^T W eps_t`` for every noise sequence in ``eps`` ``(K, m, T)``."""
    shifted_mean = np.asarray(W).T @ np.asarray(mean)
    return np.einsum("mt,kmt->k", shifted_mean, eps, optimize=False)


def modified_costs(x0, mean, noise: NoiseRealization, dynamics, cost, config: PathIntegralConfig) -> np.ndarray:
    """``S_tilde`` of every rollout around ``mean`` (``+inf`` where divergent)."""
    s_x = _backend.rollout_costs(dynamics, cost, x0, mean, noise.epsilon,
                                 threads=config.threads, backend=config.backend)
    return s_x + importance_correction(mean, noise.epsilon, config.correction_weight(cost))


def descent_direction(x0, mean, noise, dynamics, cost, config) -> np.ndarray:
    """Weighted noise average for rollouts sampled around ``mean``."""
    weights = compute_weights(modified_costs(x0, mean, noise, dynamics, cost, config), config.lambda_)
    return weighted_noise(weights, noise)


# --------------------------------------------------------------------------
# update laws


def _advance(state: OptimizerState, step: np.ndarray, **extra) -> OptimizerState:
    mu = state.mu.values + step
    return replace(state, mu=ControlSequence(mu), delta_mu=Momentum(step),
                   iteration=state.iteration + 1, **extra)


def baseline_update(x0, state, noise, dynamics, cost, config) -> OptimizerState:
    direction = descent_direction(x0, state.mu.values, noise, dynamics, cost, config)
    return _advance(state, direction)


def nag_update(x0, state, noise, dynamics, cost, config) -> OptimizerState:
    drift = config.gamma * state.delta_mu.values
    direction = descent_direction(x0, state.mu.values + drift, noise, dynamics, cost, config)
    return _advance(state, drift + direction)


def adagrad_step(state, direction, config) -> OptimizerState:
    acc = state.adagrad_accumulator + direction * direction
    eta = 1.0 / np.sqrt(acc + config.adagrad_epsilon)
    return _advance(state, eta * direction, adagrad_accumulator=acc)


def adam_step(state, direction, config) -> OptimizerState:
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.iteration + 1
    m = b1 * state.adam_m + (1.0 - b1) * direction
    v = b2 * state.adam_v + (1.0 - b2) * direction * direction
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    step = config.adam_alpha * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return _advance(state, step, adam_m=m, adam_v=v)


def adagrad_update(x0, state, noise, dynamics, cost, config) -> OptimizerState:
    direction = descent_direction(x0, state.mu.values, noise, dynamics, cost, config)
    return adagrad_step(state, direction, config)


def adam_update(x0, state, noise, dynamics, cost, config) -> OptimizerState:
    direction = descent_direction(x0, state.mu.values, noise, dynamics, cost, config)
    return adam_step(state, direction, config)


UPDATES: dict[Method, Callable[..., OptimizerState]] = {
    Method.BASELINE: baseline_update,
    Method.NAG: nag_update,
    Method.ADAGRAD: adagrad_update,
    Method.ADAM: adam_update,
}


def update(x0, state, noise, dynamics, cost, config) -> OptimizerState:
    """Apply the update law selected by ``config.method``."""
    return UPDATES[config.method](x0, state, noise, dynamics, cost, config)


def resolve_horizon(dynamics, config) -> int:
    T = config.horizon or getattr(dynamics, "horizon", None)
    if not T:
        raise ConfigError("no horizon: set config.horizon or dynamics.horizon")
    return int(T)


def optimize(x0, dynamics, cost, config, *, callback=None):
    """Run ``config.U`` updates from ``mu = 0`` and ``delta_mu = 0``.

    Returns the final plan and the noise-free cost of every iterate
    (``U + 1`` entries). ``callback(j, state, cost)`` is called after each
    evaluation if given.
    """
    T = resolve_horizon(dynamics, config)
    if config.m != dynamics.m:
        raise ConfigError(f"sigma is {config.m}x{config.m} but the plant has {dynamics.m} controls")
    x0 = np.asarray(x0, dtype=np.float64)
    state = OptimizerState.zeros(dynamics.m, T)
    history = np.empty(config.U + 1)
    history[0] = evaluate_plan(x0, state.mu, dynamics, cost, threads=config.threads, backend=config.backend)
    if callback is not None:
        callback(0, state, history[0])
    for j in range(config.U):
        noise = sample_noise(config, config.seed, T, spawn_key=(0, j))
        state = update(x0, state, noise, dynamics, cost, config)
        history[j + 1] = evaluate_plan(x0, state.mu, dynamics, cost, threads=config.threads, backend=config.backend)
        if callback is not None:
            callback(j + 1, state, history[j + 1])
    return state.mu, history
