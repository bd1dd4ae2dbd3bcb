"""Reference trajectory optimiser: iLQG with finite-difference derivatives.

Dynamics are linearised to first order (Gauss-Newton); the running cost is
expanded to second order. Derivatives come from central differences over
batched ``step_batch``/``q_batch`` calls unless the model provides analytic
ones (``jacobians(x, u)`` on the plant, ``derivatives(x)`` on the cost).
Cost Hessians are projected onto the positive semi-definite cone so the
backward pass only needs regularisation for the control block.

The objective is the same noise-free cost used to report path integral
iterates: ``sum_t q(x_t) + u_t^T R u_t + q(x_T)`` with clamped controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ControlSequence
from .costs import CostModel
from .dynamics import DynamicsModel


class DerivativeError(RuntimeError):
    """A finite-difference derivative came out non-finite."""


@dataclass(frozen=True)
class DdpConfig:
    max_iterations: int = 200
    convergence_tol: float = 1e-7
    regularization_init: float = 1e-6
    regularization_min: float = 1e-8
    regularization_max: float = 1e10
    regularization_factor: float = 4.0
    line_search_steps: int = 12
    fd_epsilon: float = 1e-5
    hessian_epsilon: float = 1e-4
    armijo: float = 1e-4

    def __post_init__(self):
        for name in ("max_iterations", "convergence_tol", "regularization_init", "regularization_min",
                     "regularization_max", "line_search_steps", "fd_epsilon", "hessian_epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.regularization_min <= self.regularization_init <= self.regularization_max:
            raise ConfigError("need regularization_min <= regularization_init <= regularization_max")
        if not self.regularization_factor > 1:
            raise ConfigError("regularization_factor must exceed 1")


@dataclass(frozen=True, eq=False)
class Expansion:
    """Per-step linearisation; ``T`` steps plus the terminal cost terms."""

    A: np.ndarray  # (T, n, n)
    B: np.ndarray  # (T, n, m)
    lx: np.ndarray  # (T+1, n)
    lxx: np.ndarray  # (T+1, n, n)
    lu: np.ndarray  # (T, m)
    luu: np.ndarray  # (T, m, m)
    lux: np.ndarray  # (T, m, n)


@dataclass(frozen=True, eq=False)
class BackwardResult:
    K: np.ndarray  # (T, m, n)
    k: np.ndarray  # (T, m)
    dV: np.ndarray  # (2,): linear and quadratic coefficients of the expected change


@dataclass(frozen=True, eq=False)
class DdpResult:
    controls: ControlSequence
    cost_history: np.ndarray
    states: np.ndarray  # (n, T+1)
    status: str  # converged | max_iterations | degraded
    iterations: int

    @property
    def degraded(self) -> bool:
        return self.status == "degraded"

    @property
    def cost(self) -> float:
        return float(self.cost_history[-1])


def simulate(x0, us, dynamics: DynamicsModel) -> np.ndarray:
    """States ``(T+1, n)`` under controls ``us`` of shape ``(T, m)``."""
    T = us.shape[0]
    xs = np.empty((T + 1, dynamics.n))
    xs[0] = x0
    for t in range(T):
        xs[t + 1] = dynamics.step(xs[t], us[t])
    return xs


def total_cost(xs, us, cost: CostModel) -> float:
    with np.errstate(all="ignore"):
        c = float(np.sum(cost.q_batch(xs[:-1])) + cost.terminal(xs[-1]) + np.sum(us * (us @ cost.R.T)))
    return c if np.isfinite(c) else float("inf")


def _check(values, name):
    bad = ~np.all(np.isfinite(values.reshape(values.shape[0], -1)), axis=1)
    if np.any(bad):
        t = int(np.argmax(bad))
        raise DerivativeError(f"non-finite {name} at timestep {t}")


def _dynamics_jacobians(dynamics, xs, us, h):
    jac = getattr(dynamics, "jacobians", None)
    if jac is not None:
        return jac(xs, us)
    T, n = xs.shape[0], xs.shape[1]
    m = us.shape[1]
    d = n + m
    eye = np.eye(d) * h
    z = np.concatenate([xs, us], axis=1)  # (T, d)
    zp = (z[:, None, :] + eye[None]).reshape(-1, d)
    zm = (z[:, None, :] - eye[None]).reshape(-1, d)
    with np.errstate(all="ignore"):
        fp = dynamics.step_batch(zp[:, :n], zp[:, n:])
        fm = dynamics.step_batch(zm[:, :n], zm[:, n:])
    J = (dynamics.difference(fp, fm) / (2.0 * h)).reshape(T, d, n).transpose(0, 2, 1)
    return J[:, :, :n], J[:, :, n:]


def _cost_derivatives(cost, xs, h, hh):
    deriv = getattr(cost, "derivatives", None)
    if deriv is not None:
        return deriv(xs)
    N, n = xs.shape
    eye = np.eye(n)
    with np.errstate(all="ignore"):
        gp = cost.q_batch((xs[:, None, :] + h * eye[None]).reshape(-1, n)).reshape(N, n)
        gm = cost.q_batch((xs[:, None, :] - h * eye[None]).reshape(-1, n)).reshape(N, n)
        grad = (gp - gm) / (2.0 * h)
        # Four-point stencil for every ordered pair (i, j).
        ei = hh * eye[:, None, :]
        ej = hh * eye[None, :, :]
        pts = []
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            shifted = xs[:, None, None, :] + si * ei[None] + sj * ej[None]
            pts.append(cost.q_batch(shifted.reshape(-1, n)).reshape(N, n, n))
        hess = (pts[0] - pts[1] - pts[2] + pts[3]) / (4.0 * hh * hh)
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return grad, hess


def _psd(h):
    w, v = np.linalg.eigh(h)
    return np.einsum("tij,tj,tkj->tik", v, np.maximum(w, 0.0), v)


def linearize(dynamics: DynamicsModel, cost: CostModel, x_traj, u_traj, config: DdpConfig | None = None) -> Expansion:
    """Jacobians of the plant and quadratic expansion of the cost along a trajectory.

    ``x_traj`` is ``(T+1, n)`` and ``u_traj`` ``(T, m)``.
    """
    config = config or DdpConfig()
    xs = np.asarray(x_traj, dtype=np.float64)
    us = np.asarray(u_traj, dtype=np.float64)
    if xs.shape[0] != us.shape[0] + 1 or xs.shape[1] != dynamics.n or us.shape[1] != dynamics.m:
        raise ValueError(f"inconsistent trajectory shapes {xs.shape} and {us.shape}")
    A, B = _dynamics_jacobians(dynamics, xs[:-1], us, config.fd_epsilon)
    _check(np.concatenate([A, B], axis=2), "dynamics Jacobian")
    lx, lxx = _cost_derivatives(cost, xs, config.fd_epsilon, config.hessian_epsilon)
    _check(lx, "cost gradient")
    _check(lxx, "cost Hessian")
    lxx = _psd(lxx)
    R = np.asarray(cost.R, dtype=np.float64)
    lu = us @ (R + R.T).T
    luu = np.broadcast_to(R + R.T, (us.shape[0],) + R.shape).copy()
    lux = np.zeros((us.shape[0], dynamics.m, dynamics.n))
    return Expansion(A, B, lx, lxx, lu, luu, lux)


def backward_pass(exp: Expansion, regularization: float = 0.0) -> BackwardResult | None:
    """Riccati-style sweep; ``None`` if ``Quu + reg I`` is not positive definite somewhere."""
    T, n, m = exp.B.shape
    K = np.zeros((T, m, n))
    k = np.zeros((T, m))
    Vx = exp.lx[T].copy()
    Vxx = exp.lxx[T].copy()
    dV = np.zeros(2)
    eye = np.eye(m)
    for t in range(T - 1, -1, -1):
        A, Bt = exp.A[t], exp.B[t]
        Qx = exp.lx[t] + A.T @ Vx
        Qu = exp.lu[t] + Bt.T @ Vx
        Qxx = exp.lxx[t] + A.T @ Vxx @ A
        Quu = exp.luu[t] + Bt.T @ Vxx @ Bt
        Qux = exp.lux[t] + Bt.T @ Vxx @ A
        Quu_reg = Quu + regularization * eye
        try:
            L = np.linalg.cholesky(Quu_reg)
        except np.linalg.LinAlgError:
            return None
        rhs = np.concatenate([Qu[:, None], Qux], axis=1)
        sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        k[t] = -sol[:, 0]
        K[t] = -sol[:, 1:]
        dV += (k[t] @ Qu, 0.5 * k[t] @ Quu @ k[t])
        Vx = Qx + K[t].T @ Quu @ k[t] + K[t].T @ Qu + Qux.T @ k[t]
        Vxx = Qxx + K[t].T @ Quu @ K[t] + K[t].T @ Qux + Qux.T @ K[t]
        Vxx = 0.5 * (Vxx + Vxx.T)
    return BackwardResult(K, k, dV)


def _forward(x0, xs, us, bw: BackwardResult, alpha, dynamics):
    T = us.shape[0]
    new_x = np.empty_like(xs)
    new_u = np.empty_like(us)
    new_x[0] = x0
    with np.errstate(all="ignore"):
        for t in range(T):
            dx = dynamics.difference(new_x[t], xs[t])
            u = us[t] + alpha * bw.k[t] + bw.K[t] @ dx
            new_u[t] = dynamics.clamp(u)
            new_x[t + 1] = dynamics.step(new_x[t], new_u[t])
    return new_x, new_u


def solve_detailed(x0, dynamics: DynamicsModel, cost: CostModel, initial_controls=None,
                   config: DdpConfig | None = None, *, horizon: int | None = None) -> DdpResult:
    config = config or DdpConfig()
    x0 = np.asarray(x0, dtype=np.float64)
    if initial_controls is None:
        T = horizon or dynamics.horizon
        us = np.zeros((T, dynamics.m))
    else:
        us = np.array(getattr(initial_controls, "values", initial_controls), dtype=np.float64).T
    us = dynamics.clamp(us)
    xs = simulate(x0, us, dynamics)
    J = total_cost(xs, us, cost)
    history = [J]
    reg = config.regularization_init
    status = "max_iterations"
    alphas = 0.5 ** np.arange(config.line_search_steps)
    it = 0
    while it < config.max_iterations:
        it += 1
        exp = linearize(dynamics, cost, xs, us, config)
        bw = None
        while bw is None:
            bw = backward_pass(exp, reg)
            if bw is None:
                reg = max(reg * config.regularization_factor, config.regularization_min)
                if reg > config.regularization_max:
                    break
        if bw is None:
            status = "degraded"
            break
        if -(bw.dV[0] + bw.dV[1]) <= config.convergence_tol * max(abs(J), 1e-12):
            status = "converged"
            break
        accepted = False
        for a in alphas:
            nx, nu = _forward(x0, xs, us, bw, a, dynamics)
            Jn = total_cost(nx, nu, cost)
            expected = -(a * bw.dV[0] + a * a * bw.dV[1])
            if Jn < J and (expected <= 0 or (J - Jn) >= config.armijo * expected):
                accepted = True
                break
        if not accepted:
            reg = max(reg * config.regularization_factor, config.regularization_min)
            if reg > config.regularization_max:
                status = "converged"
                break
            continue
        improvement = (J - Jn) / max(abs(J), 1e-12)
        xs, us, J = nx, nu, Jn
        history.append(J)
        reg = reg / config.regularization_factor
        if reg < config.regularization_min:
            reg = 0.0
        if improvement < config.convergence_tol:
            status = "converged"
            break
    return DdpResult(ControlSequence(us.T), np.array(history), xs.T.copy(), status, len(history) - 1)


def solve(x0, dynamics: DynamicsModel, cost: CostModel, initial_controls=None,
          config: DdpConfig | None = None, *, horizon: int | None = None):
    """Optimise from ``initial_controls`` (zeros by default).

    Returns ``(ControlSequence, cost_history)``; the history holds the
    noise-free cost of the initial plan and of every accepted iterate.
    """
    res = solve_detailed(x0, dynamics, cost, initial_controls, config, horizon=horizon)
    return res.controls, res.cost_history
