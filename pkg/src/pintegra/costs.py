"""Task cost functions and trajectory-cost assembly.

Each task supplies a running cost ``q(x)``; the terminal cost is the same
function. Control cost is ``sum_t u_t^T R u_t`` with a per-task ``R``
(only the pendulum has a nonzero one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def pseudo_huber(x, w):
    """Smooth absolute value ``sqrt(x**2 + w**2) - w``.

    Evaluated as ``x**2 / (sqrt(x**2 + w**2) + w)``, which is the same
    quantity without cancellation when ``|x| << w``.
    """
    xx = x * x
    return xx / (np.sqrt(xx + w * w) + w)


class CostModel:
    """Running/terminal state cost plus quadratic control weight ``R``."""

    m: int
    kernel_id: int | None = None

    @property
    def R(self) -> np.ndarray:
        return np.zeros((self.m, self.m))

    def q(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(self.q_batch(x[None, :])[0])

    def q_batch(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def terminal(self, x) -> float:
        return self.q(x)

    def terminal_batch(self, x: np.ndarray) -> np.ndarray:
        return self.q_batch(x)

    def kernel_params(self) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no compiled kernel")

    def with_target(self, target) -> "CostModel":
        return self

    @property
    def target(self):
        return None


class PendulumCost(CostModel):
    """Swing-up: ``(1 + cos theta)**2 + theta_dot**2`` with ``R = 5``."""

    m = 1
    kernel_id = 0

    def __init__(self, control_weight: float = 5.0):
        self.control_weight = control_weight

    @property
    def R(self):
        return np.array([[self.control_weight]])

    def q_batch(self, x):
        c = 1.0 + np.cos(x[:, 0])
        return c * c + x[:, 1] * x[:, 1]

    def kernel_params(self):
        return np.zeros(1)


@dataclass(frozen=True)
class HovercraftWeights:
    distance: float = 1e-6
    speed: float = 1e-2
    heading: float = 1.0
    thrust: float = 0.2


class HovercraftCost(CostModel):
    """Navigation to a planar target.

    ``d`` is the distance to the target, ``v`` the planar speed and
    ``cos(theta_d)`` the cosine between the heading and the bearing to the
    target (taken as 1 when the craft sits exactly on the target).
    """

    m = 2
    kernel_id = 1

    def __init__(self, target=(0.0, 0.0), weights: HovercraftWeights | None = None):
        self._target = np.asarray(target, dtype=np.float64).reshape(2)
        self.weights = weights or HovercraftWeights()

    @property
    def target(self):
        return self._target.copy()

    def with_target(self, target):
        return HovercraftCost(target, self.weights)

    def q_batch(self, x):
        w = self.weights
        dx = self._target[0] - x[:, 0]
        dy = self._target[1] - x[:, 1]
        d = np.sqrt(dx * dx + dy * dy)
        v = np.sqrt(x[:, 3] * x[:, 3] + x[:, 4] * x[:, 4])
        proj = np.cos(x[:, 2]) * dx + np.sin(x[:, 2]) * dy
        safe = np.where(d > 0.0, d, 1.0)
        cos_err = np.where(d > 0.0, proj / safe, 1.0)
        f1, f2 = x[:, 6], x[:, 7]
        return (pseudo_huber(d, w.distance) + pseudo_huber(v, w.speed)
                + pseudo_huber(cos_err - 1.0, w.heading) + w.thrust * (f1 * f1 + f2 * f2))

    def kernel_params(self):
        w = self.weights
        return np.array([self._target[0], self._target[1], w.distance, w.speed, w.heading, w.thrust])


@dataclass(frozen=True)
class QuadrotorWeights:
    position: float = 50.0
    velocity: float = 10.0
    orientation: float = 200.0
    body_rate: float = 1e-3
    rotor: float = 1e-6


class QuadrotorCost(CostModel):
    """Navigation to a 3-D target in level hover at a given yaw.

    Target is ``(x, y, z)`` or ``(x, y, z, yaw)``. The orientation error is
    the norm of the vector part of ``q_target^-1 * q``.
    """

    m = 4
    kernel_id = 2

    def __init__(self, target=(0.0, 0.0, 0.0), weights: QuadrotorWeights | None = None):
        t = np.zeros(4)
        target = np.asarray(target, dtype=np.float64).ravel()
        t[: target.size] = target
        self._target = t
        self.weights = weights or QuadrotorWeights()

    @property
    def target(self):
        return self._target.copy()

    def with_target(self, target):
        return QuadrotorCost(target, self.weights)

    def q_batch(self, x):
        w = self.weights
        a = math.cos(0.5 * self._target[3])
        b = math.sin(0.5 * self._target[3])
        qw, qx, qy, qz = x[:, 6], x[:, 7], x[:, 8], x[:, 9]
        ex = a * qx + b * qy
        ey = a * qy - b * qx
        ez = a * qz - b * qw
        v2 = x[:, 3] * x[:, 3] + x[:, 4] * x[:, 4] + x[:, 5] * x[:, 5]
        rate = np.sqrt(x[:, 10] * x[:, 10] + x[:, 11] * x[:, 11] + x[:, 12] * x[:, 12])
        rotor = x[:, 13:17]
        rotor_norm = np.sqrt(rotor[:, 0] * rotor[:, 0] + rotor[:, 1] * rotor[:, 1]
                             + rotor[:, 2] * rotor[:, 2] + rotor[:, 3] * rotor[:, 3])
        return (pseudo_huber(x[:, 0] - self._target[0], w.position)
                + pseudo_huber(x[:, 1] - self._target[1], w.position)
                + pseudo_huber(x[:, 2] - self._target[2], w.position)
                + w.velocity * v2
                + w.orientation * np.sqrt(ex * ex + ey * ey + ez * ez)
                + w.body_rate * rate
                + w.rotor * rotor_norm)

    def kernel_params(self):
        w = self.weights
        t = self._target
        return np.array([t[0], t[1], t[2], math.cos(0.5 * t[3]), math.sin(0.5 * t[3]),
                         w.position, w.velocity, w.orientation, w.body_rate, w.rotor])


class CarCost(CostModel):
    """Oval track ``(x/2)**2 + y**2 = 1`` driven at a desired forward speed."""

    m = 2
    kernel_id = 3

    def __init__(self, track_weight: float = 100.0, speed: float = 1.25):
        self.track_weight = track_weight
        self.speed = speed

    def q_batch(self, x):
        half = 0.5 * x[:, 0]
        e = half * half + x[:, 1] * x[:, 1] - 1.0
        dv = x[:, 3] - self.speed
        return self.track_weight * e * e + dv * dv

    def kernel_params(self):
        return np.array([self.track_weight, self.speed])


def trajectory_cost(states, controls, cost: CostModel, mean=None, noise=None, correction_weight=None):
    """Return ``(S_x, S_u, S_tilde)`` for one trajectory.

    ``states`` is ``(n, T+1)`` and ``controls`` ``(m, T)``. ``S_tilde`` adds
    ``sum_t mean_t^T W noise_t`` to ``S_x`` when ``mean``, ``noise`` and the
    correction weight ``W`` are all given; otherwise it equals ``S_x``.
    """
    states = np.asarray(states, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    running = cost.q_batch(states[:, :-1].T)
    s_x = float(cost.terminal(states[:, -1]) + np.sum(running))
    R = cost.R
    s_u = float(np.sum(controls * (R @ controls)))
    correction = 0.0
    if mean is not None and noise is not None and correction_weight is not None:
        correction = float(np.sum(np.asarray(mean) * (np.asarray(correction_weight) @ np.asarray(noise))))
    return s_x, s_u, s_x + correction
