"""Discrete-time plants: the abstract model and the four built-in systems.

All models integrate with explicit Euler at their own ``dt`` and clamp the
commanded input to their actuator limits before using it. Actuators
(hovercraft thrusters, quadrotor rotors, car steering/drive force) are
states that follow the command through a first-order lag.

``step`` acts on one state, ``step_batch`` on a ``(B, n)`` stack of states;
both share the same arithmetic so results are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

from .params import CarParams, HovercraftParams, PendulumParams, QuadrotorParams

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap angles into ``(-pi, pi]``."""
    return math.pi - np.mod(math.pi - theta, TWO_PI)


class DynamicsModel:
    """State-transition capability ``x_{t+1} = f(x_t, u_t)``.

    Subclasses set ``n``, ``m``, ``dt``, ``u_min``/``u_max`` and implement
    ``step_batch``. Built-in models also expose ``kernel_id`` and
    ``kernel_params`` so the compiled rollout kernel can simulate them
    without calling back into Python; custom models leave ``kernel_id`` as
    ``None`` and always run through the numpy path.
    """

    n: int
    m: int
    dt: float
    kernel_id: int | None = None
    horizon: int | None = None
    # Indices of angular state components; finite differences wrap these.
    angular_states: tuple[int, ...] = ()

    @property
    def u_min(self) -> np.ndarray:
        return np.full(self.m, -np.inf)

    @property
    def u_max(self) -> np.ndarray:
        return np.full(self.m, np.inf)

    def clamp(self, u):
        return np.minimum(np.maximum(u, self.u_min), self.u_max)

    def step(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        return self.step_batch(x[None, :], u[None, :])[0]

    def step_batch(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def difference(self, a, b):
        """``a - b`` with angular components wrapped."""
        d = np.asarray(a, dtype=np.float64) - b
        if self.angular_states:
            d = np.array(d, copy=True)
            idx = list(self.angular_states)
            d[..., idx] = wrap_angle(d[..., idx])
        return d

    def kernel_params(self) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no compiled kernel")

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.n)


def _lag(current, command, dt, tau):
    return current + (dt / tau) * (command - current)


class Pendulum(DynamicsModel):
    """Torque-driven pendulum; ``theta = 0`` hangs down, ``theta = pi`` is upright.

    State ``(theta, theta_dot)``, control ``(torque,)``.
    """

    n, m = 2, 1
    kernel_id = 0
    horizon = 30
    angular_states = (0,)

    def __init__(self, params: PendulumParams | None = None):
        self.params = params or PendulumParams()
        self.dt = self.params.dt

    @property
    def u_min(self):
        return np.array([-self.params.torque_limit])

    @property
    def u_max(self):
        return np.array([self.params.torque_limit])

    def step_batch(self, x, u):
        p = self.params
        u = self.clamp(u)
        theta, omega = x[:, 0], x[:, 1]
        inertia = p.mass * p.length * p.length
        alpha = (-p.damping * omega - p.mass * p.gravity * p.length * np.sin(theta) + u[:, 0]) / inertia
        out = np.empty_like(x)
        out[:, 0] = wrap_angle(theta + p.dt * omega)
        out[:, 1] = omega + p.dt * alpha
        return out

    def kernel_params(self):
        p = self.params
        return np.array([p.mass, p.length, p.damping, p.gravity, p.dt])


class Hovercraft(DynamicsModel):
    """Planar rigid body pushed by two forward thrusters offset from the centreline.

    State ``(x, y, theta, vx, vy, omega, F1, F2)`` with world-frame
    velocities; control is the commanded ``(F1, F2)``. ``F1`` sits on the
    right so ``F1 > F2`` yaws the craft counter-clockwise.
    """

    n, m = 8, 2
    kernel_id = 1
    horizon = 40

    def __init__(self, params: HovercraftParams | None = None):
        self.params = params or HovercraftParams()
        self.dt = self.params.dt

    @property
    def u_min(self):
        return np.full(2, self.params.thrust_min)

    @property
    def u_max(self):
        return np.full(2, self.params.thrust_max)

    def step_batch(self, x, u):
        p = self.params
        u = self.clamp(u)
        theta, vx, vy, omega, f1, f2 = x[:, 2], x[:, 3], x[:, 4], x[:, 5], x[:, 6], x[:, 7]
        thrust = f1 + f2
        ax = (thrust * np.cos(theta) - p.drag * vx) / p.mass
        ay = (thrust * np.sin(theta) - p.drag * vy) / p.mass
        alpha = (p.arm * (f1 - f2) - p.angular_drag * omega) / p.inertia
        out = np.empty_like(x)
        out[:, 0] = x[:, 0] + p.dt * vx
        out[:, 1] = x[:, 1] + p.dt * vy
        out[:, 2] = theta + p.dt * omega
        out[:, 3] = vx + p.dt * ax
        out[:, 4] = vy + p.dt * ay
        out[:, 5] = omega + p.dt * alpha
        out[:, 6] = _lag(f1, u[:, 0], p.dt, p.lag)
        out[:, 7] = _lag(f2, u[:, 1], p.dt, p.lag)
        return out

    def kernel_params(self):
        p = self.params
        return np.array([p.mass, p.inertia, p.arm, p.drag, p.angular_drag, p.lag, p.dt])


class Quadrotor(DynamicsModel):
    """Quadrotor rigid body with rotor thrust ``k_f * Omega**2`` and drag moment ``k_m * Omega**2``.

    State layout (17): position (3), world velocity (3), unit quaternion
    ``(w, x, y, z)`` body-to-world (4), body rates (3), rotor speeds (4, rpm).
    Control: commanded rotor speeds. Rotors 1 and 3 lie on the body x axis,
    2 and 4 on the y axis; 1 and 3 spin so their drag moments are positive.
    """

    n, m = 17, 4
    kernel_id = 2
    horizon = 40

    def __init__(self, params: QuadrotorParams | None = None):
        self.params = params or QuadrotorParams()
        self.dt = self.params.dt

    @property
    def u_min(self):
        return np.full(4, self.params.rotor_min)

    @property
    def u_max(self):
        return np.full(4, self.params.rotor_max)

    def step_batch(self, x, u):
        p = self.params
        u = self.clamp(u)
        dt = p.dt
        vel = x[:, 3:6]
        qw, qx, qy, qz = x[:, 6], x[:, 7], x[:, 8], x[:, 9]
        wx, wy, wz = x[:, 10], x[:, 11], x[:, 12]
        rotor = x[:, 13:17]

        force = p.k_f * rotor * rotor
        moment = p.k_m * rotor * rotor
        thrust = force[:, 0] + force[:, 1] + force[:, 2] + force[:, 3]
        tau_x = p.arm * (force[:, 1] - force[:, 3])
        tau_y = p.arm * (force[:, 2] - force[:, 0])
        tau_z = moment[:, 0] - moment[:, 1] + moment[:, 2] - moment[:, 3]

        ax = thrust * (2.0 * (qx * qz + qw * qy)) / p.mass
        ay = thrust * (2.0 * (qy * qz - qw * qx)) / p.mass
        az = thrust * (1.0 - 2.0 * (qx * qx + qy * qy)) / p.mass - p.gravity

        dwx = (tau_x - (wy * p.izz * wz - wz * p.iyy * wy)) / p.ixx
        dwy = (tau_y - (wz * p.ixx * wx - wx * p.izz * wz)) / p.iyy
        dwz = (tau_z - (wx * p.iyy * wy - wy * p.ixx * wx)) / p.izz

        nw = qw + dt * (-0.5 * (qx * wx + qy * wy + qz * wz))
        nx = qx + dt * (0.5 * (qw * wx + qy * wz - qz * wy))
        ny = qy + dt * (0.5 * (qw * wy - qx * wz + qz * wx))
        nz = qz + dt * (0.5 * (qw * wz + qx * wy - qy * wx))
        norm = np.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)

        out = np.empty_like(x)
        out[:, 0:3] = x[:, 0:3] + dt * vel
        out[:, 3] = vel[:, 0] + dt * ax
        out[:, 4] = vel[:, 1] + dt * ay
        out[:, 5] = vel[:, 2] + dt * az
        out[:, 6] = nw / norm
        out[:, 7] = nx / norm
        out[:, 8] = ny / norm
        out[:, 9] = nz / norm
        out[:, 10] = wx + dt * dwx
        out[:, 11] = wy + dt * dwy
        out[:, 12] = wz + dt * dwz
        out[:, 13:17] = _lag(rotor, u, dt, p.lag)
        return out

    def kernel_params(self):
        p = self.params
        return np.array([p.mass, p.arm, p.ixx, p.iyy, p.izz, p.k_f, p.k_m, p.lag, p.gravity, p.dt])

    def initial_state(self):
        x = np.zeros(self.n)
        x[6] = 1.0
        x[13:17] = self.params.hover_speed
        return x


class Car(DynamicsModel):
    """Dynamic bicycle model with linear tyres and rear-wheel drive force.

    State ``(x, y, psi, vx, vy, r, delta, Fr)`` with body-frame velocities
    ``vx`` (forward) and ``vy`` (left); control is the commanded
    ``(delta, Fr)``. The slip-angle denominator is ``sqrt(vx**2 + slip_speed**2)``
    so the model stays finite at standstill.
    """

    n, m = 8, 2
    kernel_id = 3
    horizon = 30

    def __init__(self, params: CarParams | None = None):
        self.params = params or CarParams()
        self.dt = self.params.dt

    @property
    def u_min(self):
        return np.array([-self.params.steer_limit, self.params.force_min])

    @property
    def u_max(self):
        return np.array([self.params.steer_limit, self.params.force_max])

    def step_batch(self, x, u):
        p = self.params
        u = self.clamp(u)
        dt = p.dt
        psi, vx, vy, r, delta, fr = x[:, 2], x[:, 3], x[:, 4], x[:, 5], x[:, 6], x[:, 7]
        vxs = np.sqrt(vx * vx + p.slip_speed * p.slip_speed)
        alpha_f = delta - np.arctan((vy + p.lf * r) / vxs)
        alpha_r = -np.arctan((vy - p.lr * r) / vxs)
        ffy = p.front_stiffness * alpha_f
        fry = p.rear_stiffness * alpha_r
        sd, cd = np.sin(delta), np.cos(delta)
        sp, cp = np.sin(psi), np.cos(psi)
        dvx = (fr - ffy * sd - p.drag * vx) / p.mass + vy * r
        dvy = (fry + ffy * cd) / p.mass - vx * r
        dr = (p.lf * ffy * cd - p.lr * fry) / p.inertia

        out = np.empty_like(x)
        out[:, 0] = x[:, 0] + dt * (vx * cp - vy * sp)
        out[:, 1] = x[:, 1] + dt * (vx * sp + vy * cp)
        out[:, 2] = psi + dt * r
        out[:, 3] = vx + dt * dvx
        out[:, 4] = vy + dt * dvy
        out[:, 5] = r + dt * dr
        out[:, 6] = _lag(delta, u[:, 0], dt, p.steer_lag)
        out[:, 7] = _lag(fr, u[:, 1], dt, p.force_lag)
        return out

    def kernel_params(self):
        p = self.params
        return np.array([
            p.mass, p.inertia, p.lf, p.lr, p.front_stiffness, p.rear_stiffness,
            p.drag, p.slip_speed, p.steer_lag, p.force_lag, p.dt,
        ])
