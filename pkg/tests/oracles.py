"""Independent reference implementations used by the tests.

Everything here is written with plain Python floats and loops so it shares
no arithmetic code with the package.
"""

import math

import numpy as np

from pintegra.costs import CostModel
from pintegra.dynamics import DynamicsModel


class Integrator(DynamicsModel):
    """Scalar integrator ``x' = x + u`` (no actuator limits)."""

    n, m, dt = 1, 1, 1.0

    def step_batch(self, x, u):
        return x + u


class Quadratic(CostModel):
    """``q(x) = x**2`` with control weight ``r``."""

    m = 1

    def __init__(self, r=0.0):
        self.r = r

    @property
    def R(self):
        return np.array([[self.r]])

    def q_batch(self, x):
        return x[:, 0] * x[:, 0]


def integrator_costs(x0, mean, eps_list, r):
    """Modified costs ``S_x + sum_t mean_t * r * eps_t`` for scalar rollouts."""
    out = []
    for eps in eps_list:
        x = x0
        s = 0.0
        corr = 0.0
        for mt, et in zip(mean, eps):
            s += x * x
            x = x + mt + et
            corr += mt * r * et
        s += x * x
        out.append(s + corr)
    return out


def softmax_weights(costs, lam):
    finite = [c for c in costs if math.isfinite(c)]
    lo = min(finite)
    e = [math.exp(-(c - lo) / lam) if math.isfinite(c) else 0.0 for c in costs]
    total = sum(e)
    return [v / total for v in e]


def weighted_sum(weights, eps_list):
    T = len(eps_list[0])
    return [sum(w * eps[t] for w, eps in zip(weights, eps_list)) for t in range(T)]


def adagrad(directions, eps=1e-8):
    mu = [0.0] * len(directions[0])
    G = [0.0] * len(mu)
    trace = []
    for d in directions:
        for i, di in enumerate(d):
            G[i] += di * di
            mu[i] += di / math.sqrt(G[i] + eps)
        trace.append(list(mu))
    return trace


def adam(directions, alpha=1.0, b1=0.9, b2=0.999, eps=1e-8):
    n = len(directions[0])
    mu, m, v = [0.0] * n, [0.0] * n, [0.0] * n
    trace = []
    for t, g in enumerate(directions, start=1):
        for i, gi in enumerate(g):
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            mu[i] += alpha * mh / (math.sqrt(vh) + eps)
        trace.append(list(mu))
    return trace


def riccati(A, B, Q, R, T, Qf=None):
    """Finite-horizon LQR for stage cost ``0.5 x'Qx + u'Ru`` and terminal ``0.5 x'Qf x``.

    Returns the feedback gains ``K_t`` (``u = K_t x``) and ``P_0``; the optimal
    cost from ``x0`` is ``0.5 x0' P_0 x0``.
    """
    P = Q if Qf is None else Qf
    gains = []
    for _ in range(T):
        H = 2 * R + B.T @ P @ B
        K = -np.linalg.solve(H, B.T @ P @ A)
        P = Q + A.T @ P @ A + A.T @ P @ B @ K
        P = 0.5 * (P + P.T)
        gains.append(K)
    return gains[::-1], P


def gaussian_log_ratio(mu, eps, sigma):
    """``log p0(u) - log p_mu(u)`` at ``u = mu + eps`` for zero-mean and mu-mean Gaussians."""
    inv = np.linalg.inv(sigma)
    total = 0.0
    for t in range(mu.shape[1]):
        u = mu[:, t] + eps[:, t]
        total += -0.5 * u @ inv @ u + 0.5 * eps[:, t] @ inv @ eps[:, t]
    return total
