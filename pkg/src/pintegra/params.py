"""Plant parameters for the four built-in systems.

Every physical constant used by :mod:`pintegra.dynamics` lives here so that
experiments can override them from a JSON config (see ``with_overrides``).
Units are SI unless stated otherwise; quadrotor rotor speeds are in rpm.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0  # [kg]
    length: float = 1.0  # [m]
    damping: float = 0.1  # [N m s/rad]
    gravity: float = 9.8  # [m/s^2]
    dt: float = 0.02  # [s]
    torque_limit: float = float("inf")  # [N m]


@dataclass(frozen=True)
class HovercraftParams:
    mass: float = 0.5  # [kg]
    inertia: float = 0.005  # [kg m^2]
    arm: float = 0.05  # [m] lateral offset of each thruster from the centreline
    drag: float = 0.2  # [N s/m] linear translational drag
    angular_drag: float = 0.002  # [N m s/rad]
    lag: float = 0.2  # [s] thruster time constant
    thrust_min: float = -0.5  # [N]
    thrust_max: float = 0.5  # [N]
    dt: float = 0.1  # [s]


@dataclass(frozen=True)
class QuadrotorParams:
    mass: float = 0.5  # [kg]
    arm: float = 0.17  # [m] rotor distance from the centre of mass
    ixx: float = 2.32e-3  # [kg m^2]
    iyy: float = 2.32e-3
    izz: float = 4.0e-3
    k_f: float = 6.11e-8  # [N/rpm^2]
    k_m: float = 1.5e-9  # [N m/rpm^2]
    lag: float = 0.05  # [s] motor time constant
    gravity: float = 9.81
    rotor_min: float = 1200.0  # [rpm]
    rotor_max: float = 7800.0  # [rpm]
    dt: float = 0.02

    @property
    def hover_speed(self) -> float:
        """Rotor speed at which the four rotors exactly carry the weight."""
        return (self.mass * self.gravity / (4.0 * self.k_f)) ** 0.5


@dataclass(frozen=True)
class CarParams:
    mass: float = 2.0  # [kg]
    inertia: float = 0.1  # [kg m^2] yaw inertia
    lf: float = 0.12  # [m] CoM to front axle
    lr: float = 0.13  # [m] CoM to rear axle
    front_stiffness: float = 10.0  # [N/rad]
    rear_stiffness: float = 10.0  # [N/rad]
    drag: float = 0.5  # [N s/m] longitudinal rolling/drag resistance
    slip_speed: float = 0.5  # [m/s] smoothing speed in the slip-angle denominator
    steer_lag: float = 0.1  # [s]
    force_lag: float = 0.1  # [s]
    steer_limit: float = 0.7  # [rad]
    force_min: float = -2.0  # [N]
    force_max: float = 3.0  # [N]
    dt: float = 0.05


def with_overrides(params: Any, overrides: dict[str, Any] | None) -> Any:
    """Return a copy of ``params`` with the named fields replaced.

    Raises ``KeyError`` for names that are not fields of the dataclass.
    """
    if not overrides:
        return params
    known = {f.name for f in fields(params)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise KeyError(f"unknown {type(params).__name__} field(s): {', '.join(unknown)}")
    return replace(params, **{k: float(v) for k, v in overrides.items()})
