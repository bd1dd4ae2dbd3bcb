import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pintegra import backend, core, costs, dynamics, tasks
from pintegra.core import (
    AllRolloutsDivergedError,
    ConfigError,
    ControlSequence,
    Correction,
    Method,
    NoiseRealization,
    OptimizerState,
    PathIntegralConfig,
)
import oracles
from conftest import compiled_only


def cfg(**kw):
    kw.setdefault("sigma", np.eye(1))
    kw.setdefault("lambda_", 0.5)
    return PathIntegralConfig(**kw)


# --- config and types


@pytest.mark.parametrize("kw", [
    {"sigma": np.zeros((1, 1))},
    {"sigma": np.array([[1.0, 2.0], [0.0, 1.0]])},
    {"sigma": -np.eye(2)},
    {"lambda_": 0.0},
    {"gamma": 1.0},
    {"gamma": -0.1},
    {"K": 0},
    {"U": -1},
])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        cfg(**kw)


def test_control_sequence_immutable_and_finite():
    mu = ControlSequence(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        mu.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        ControlSequence(np.array([[np.nan]]))


# --- noise


def test_noise_law_of_large_numbers():
    c = cfg(K=100_000)
    eps = core.sample_noise(c, 7, 1).epsilon
    assert eps.shape == (100_000, 1, 1)
    assert abs(eps.mean()) < 3 / math.sqrt(1e5)
    assert abs(eps.var() - 1.0) < 0.05


def test_noise_covariance():
    sigma = np.array([[2.0, 0.6], [0.6, 0.5]])
    eps = core.sample_noise(cfg(K=50_000, sigma=sigma), 3, 2).epsilon
    samples = eps.transpose(0, 2, 1).reshape(-1, 2)
    np.testing.assert_allclose(np.cov(samples.T), sigma, atol=0.05)


def test_noise_deterministic_and_keyed():
    c = cfg(K=50)
    a = core.sample_noise(c, 11, 4, spawn_key=(0, 3)).epsilon
    b = core.sample_noise(c, 11, 4, spawn_key=(0, 3)).epsilon
    assert np.array_equal(a, b)
    assert not np.array_equal(a, core.sample_noise(c, 11, 4, spawn_key=(0, 4)).epsilon)
    assert not np.array_equal(a, core.sample_noise(c, 12, 4, spawn_key=(0, 3)).epsilon)


# --- rollouts


def test_rollout_hanging_pendulum():
    p, c = dynamics.Pendulum(), costs.PendulumCost()
    T = 30
    z = np.zeros((1, T))
    r = core.rollout(np.zeros(2), z, z, 0.8, z, p, c)
    assert np.array_equal(r.states, np.zeros((2, T + 1)))
    assert r.state_cost == (T + 1) * 4.0
    assert r.total_modified_cost == r.state_cost + r.control_correction


def test_rollout_shapes_t1():
    q = dynamics.Quadrotor()
    z = np.zeros((4, 1))
    r = core.rollout(q.initial_state(), z + q.params.hover_speed, z, 0.0, z, q, costs.QuadrotorCost())
    assert r.states.shape == (17, 2) and r.controls.shape == (4, 1)
    assert np.array_equal(r.states[:, 0], q.initial_state())


def test_rollout_pendulum_hand_stepped():
    p, c = dynamics.Pendulum(), costs.PendulumCost()
    mu = np.array([[0.5, -0.2, 1.0]])
    drift = np.array([[0.1, 0.1, -0.3]])
    eps = np.array([[0.05, -0.4, 0.2]])
    gamma = 0.8
    th, om = 0.4, -0.3
    hand = 0.0
    for t in range(3):
        hand += (1 + math.cos(th)) ** 2 + om ** 2
        u = mu[0, t] + gamma * drift[0, t] + eps[0, t]
        acc = -0.1 * om - 9.8 * math.sin(th) + u
        th, om = th + 0.02 * om, om + 0.02 * acc
    hand += (1 + math.cos(th)) ** 2 + om ** 2
    r = core.rollout([0.4, -0.3], mu, drift, gamma, eps, p, c)
    assert r.state_cost == pytest.approx(hand, abs=1e-12)
    corr = sum((mu[0, t] + gamma * drift[0, t]) * 5.0 * eps[0, t] for t in range(3))
    r = core.rollout([0.4, -0.3], mu, drift, gamma, eps, p, c, correction_weight=c.R)
    assert r.control_correction == pytest.approx(corr, abs=1e-12)


def test_rollout_divergence_flagged():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    r = core.rollout([1e200], np.zeros((1, 2)), np.zeros((1, 2)), 0.0, np.array([[1e200, 0.0]]), model, cost)
    assert r.divergent and r.state_cost == math.inf


def test_backend_marks_divergent_rollouts_inf():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    eps = np.array([[[0.0]], [[1e300]]])
    s = backend.rollout_costs(model, cost, np.array([0.0]), np.zeros((1, 1)), eps)
    assert s[0] == 0.0 and s[1] == math.inf


# --- weights


def test_weights_equal_costs():
    for lam in (1e-3, 0.01, 5.0):
        w = core.compute_weights(np.array([2.5, 2.5, 2.5]), lam).weights
        np.testing.assert_allclose(w, [1 / 3] * 3, rtol=1e-15)


def test_weights_divergent_excluded():
    assert np.array_equal(core.compute_weights(np.array([0.0, math.inf]), 0.01).weights, [1.0, 0.0])


def test_weights_log2():
    lam = 0.01
    w = core.compute_weights(np.array([0.0, lam * math.log(2)]), lam).weights
    np.testing.assert_allclose(w, [2 / 3, 1 / 3], rtol=1e-14)


def test_weights_all_divergent_raises():
    with pytest.raises(AllRolloutsDivergedError):
        core.compute_weights(np.array([math.inf, math.nan]), 0.01)


def test_weights_accept_rollout_objects():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    z = np.zeros((1, 1))
    rs = [core.rollout([0.0], z, z, 0.0, np.array([[e]]), model, cost) for e in (0.0, 1.0)]
    w = core.compute_weights(rs, 1.0).weights
    np.testing.assert_allclose(w, oracles.softmax_weights([0.0, 1.0], 1.0), rtol=1e-15)


# --- update laws against the scalar-integrator oracle


def _noise(rows):
    return NoiseRealization(np.array(rows, dtype=np.float64)[:, None, :])


def test_baseline_k1_applies_the_noise():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    n = _noise([[0.3, -0.7]])
    s = core.baseline_update([1.0], OptimizerState.zeros(1, 2), n, model, cost, cfg())
    assert np.array_equal(s.mu.values, n.epsilon[0])


def test_baseline_antithetic_pair_cancels():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    n = _noise([[0.3, -0.7], [-0.3, 0.7]])
    # x0 = 0 makes both rollouts cost the same
    s = core.baseline_update([0.0], OptimizerState.zeros(1, 2), n, model, cost, cfg())
    assert np.array_equal(s.mu.values, np.zeros((1, 2)))


@pytest.mark.parametrize("r", [0.0, 0.7])
def test_baseline_k3_matches_oracle(r):
    model, cost = oracles.Integrator(), oracles.Quadratic(r)
    mean = [0.2, -0.1]
    rows = [[0.3, -0.7], [-0.5, 0.1], [0.05, 0.4]]
    state = OptimizerState.from_plan(np.array([mean]))
    s = core.baseline_update([0.8], state, _noise(rows), model, cost, cfg(lambda_=0.3))
    w = oracles.softmax_weights(oracles.integrator_costs(0.8, mean, rows, r), 0.3)
    step = oracles.weighted_sum(w, rows)
    expected = [m + d for m, d in zip(mean, step)]
    np.testing.assert_allclose(s.mu.values[0], expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(s.delta_mu.values[0], step, rtol=0, atol=1e-12)
    assert s.iteration == 1


def test_nag_pure_momentum_step():
    model, cost = oracles.Integrator(), oracles.Quadratic()
    d = np.array([[0.4, -0.2]])
    state = OptimizerState.from_plan(np.array([[0.1, 0.1]]), d)
    n = _noise([[0.3, -0.7], [-0.3, 0.7]])
    # antithetic pair with equal cost: the rollouts start at 0 around mean
    # mu + gamma d; choose mu = -gamma d so the mean is zero
    gamma = 0.6
    state = OptimizerState.from_plan(-gamma * d, d)
    s = core.nag_update([0.0], state, n, model, cost, cfg(gamma=gamma))
    np.testing.assert_array_equal(s.delta_mu.values, gamma * d)
    np.testing.assert_array_equal(s.mu.values, -gamma * d + gamma * d)


def test_nag_two_steps_match_recurrence():
    model, cost = oracles.Integrator(), oracles.Quadratic(0.4)
    gamma, lam, x0 = 0.7, 0.25, 0.9
    d_prev = [0.15, -0.05]
    mu = [0.1, 0.2]
    batches = [[[0.3, -0.7], [-0.5, 0.1], [0.05, 0.4]], [[0.2, 0.2], [-0.1, 0.6], [0.35, -0.25]]]
    state = OptimizerState.from_plan(np.array([mu]), np.array([d_prev]))
    c = cfg(gamma=gamma, lambda_=lam)
    for rows in batches:
        state = core.nag_update([x0], state, _noise(rows), model, cost, c)
    # oracle: unrolled recurrence
    dmu = d_prev
    for rows in batches:
        mean = [m + gamma * d for m, d in zip(mu, dmu)]
        w = oracles.softmax_weights(oracles.integrator_costs(x0, mean, rows, 0.4), lam)
        delta = oracles.weighted_sum(w, rows)
        dmu = [gamma * d + e for d, e in zip(dmu, delta)]
        mu = [m + d for m, d in zip(mu, dmu)]
    np.testing.assert_allclose(state.mu.values[0], mu, rtol=0, atol=1e-12)
    np.testing.assert_allclose(state.delta_mu.values[0], dmu, rtol=0, atol=1e-12)
    assert state.iteration == 2


def test_nag_gamma_zero_equals_baseline(rng):
    dyn, cost = dynamics.Pendulum(), costs.PendulumCost()
    c = cfg(K=64, sigma=np.eye(1), lambda_=0.01, gamma=0.0)
    state = OptimizerState.from_plan(rng.normal(size=(1, 20)), rng.normal(size=(1, 20)))
    n = core.sample_noise(c, 5, 20)
    a = core.baseline_update([0.2, 0.0], state, n, dyn, cost, c)
    b = core.nag_update([0.2, 0.0], state, n, dyn, cost, c.replace(method="nag"))
    assert np.array_equal(a.mu.values, b.mu.values)
    assert np.array_equal(a.delta_mu.values, b.delta_mu.values)


def test_momentum_recurrence_bitwise(rng):
    dyn, cost = dynamics.Pendulum(), costs.PendulumCost()
    c = cfg(K=32, lambda_=0.01, gamma=0.8, method="nag")
    state = OptimizerState.from_plan(np.zeros((1, 10)), rng.normal(size=(1, 10)))
    n = core.sample_noise(c, 1, 10)
    new = core.nag_update([0.1, 0.0], state, n, dyn, cost, c)
    delta = core.descent_direction([0.1, 0.0], state.mu.values + 0.8 * state.delta_mu.values, n, dyn, cost, c)
    assert np.array_equal(new.delta_mu.values, 0.8 * state.delta_mu.values + delta)


def test_adagrad_first_step_normalised():
    d = np.array([[0.5, -2.0, 1e-6]])
    s = core.adagrad_step(OptimizerState.zeros(1, 3), d, cfg())
    np.testing.assert_allclose(s.mu.values[0, :2], [1.0, -1.0], atol=1e-7)
    np.testing.assert_allclose(s.mu.values[0, 2], 1e-6 / math.sqrt(1e-12 + 1e-8), rtol=1e-14)


def test_adagrad_zero_direction_fixed_point():
    state = core.adagrad_step(OptimizerState.zeros(1, 2), np.array([[0.3, 0.1]]), cfg())
    s = core.adagrad_step(state, np.zeros((1, 2)), cfg())
    assert np.array_equal(s.mu.values, state.mu.values)
    assert np.array_equal(s.adagrad_accumulator, state.adagrad_accumulator)


def test_adagrad_scripted_oracle():
    dirs = [[0.3, -0.1], [0.05, 0.2], [-0.4, 0.0]]
    state = OptimizerState.zeros(1, 2)
    prev_G = state.adagrad_accumulator
    for d, expected in zip(dirs, oracles.adagrad(dirs)):
        state = core.adagrad_step(state, np.array([d]), cfg())
        np.testing.assert_allclose(state.mu.values[0], expected, rtol=0, atol=1e-12)
        assert np.all(state.adagrad_accumulator >= prev_G)
        prev_G = state.adagrad_accumulator


def test_adam_first_step_is_sign():
    s = core.adam_step(OptimizerState.zeros(1, 3), np.array([[0.2, -3.0, 1e-3]]), cfg(adam_alpha=0.5))
    np.testing.assert_allclose(s.mu.values[0], [0.5, -0.5, 0.5], rtol=1e-4)


def test_adam_zero_gradient_fixed_point():
    s = OptimizerState.from_plan(np.array([[0.3, -0.2]]))
    for _ in range(4):
        s = core.adam_step(s, np.zeros((1, 2)), cfg())
    assert np.array_equal(s.mu.values, [[0.3, -0.2]])


def test_adam_scripted_oracle():
    dirs = [[0.3, -0.1], [0.05, 0.2], [-0.4, 0.0], [0.1, 0.1], [0.02, -0.3]]
    state = OptimizerState.zeros(1, 2)
    for d, expected in zip(dirs, oracles.adam(dirs, alpha=0.7)):
        state = core.adam_step(state, np.array([d]), cfg(adam_alpha=0.7))
        np.testing.assert_allclose(state.mu.values[0], expected, rtol=0, atol=1e-12)


def test_adaptive_updates_use_descent_direction():
    model, cost = oracles.Integrator(), oracles.Quadratic(0.2)
    rows = [[0.3, -0.7], [-0.5, 0.1], [0.05, 0.4]]
    w = oracles.softmax_weights(oracles.integrator_costs(0.5, [0.0, 0.0], rows, 0.2), 0.3)
    g = [oracles.weighted_sum(w, rows)]
    c = cfg(lambda_=0.3)
    s = core.adagrad_update([0.5], OptimizerState.zeros(1, 2), _noise(rows), model, cost, c)
    np.testing.assert_allclose(s.mu.values[0], oracles.adagrad(g)[0], atol=1e-12)
    s = core.adam_update([0.5], OptimizerState.zeros(1, 2), _noise(rows), model, cost, c)
    np.testing.assert_allclose(s.mu.values[0], oracles.adam(g)[0], atol=1e-12)


# --- corrections


def test_correction_weights():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = cfg(sigma=sigma, lambda_=0.1)
    assert np.array_equal(c.correction_weight(costs.HovercraftCost()), np.zeros((2, 2)))
    np.testing.assert_allclose(c.replace(correction=Correction.SIGMA).correction_weight(), 0.05 * np.linalg.inv(sigma))
    np.testing.assert_allclose(c.replace(correction=Correction.LIKELIHOOD_RATIO).correction_weight(), 0.1 * np.linalg.inv(sigma))


# --- optimize


def test_optimize_zero_iterations():
    t = tasks.get("pendulum")
    dyn, cost = t.dynamics(), t.cost()
    mu, hist = core.optimize([0.1, 0.0], dyn, cost, cfg(U=0, K=10, sigma=t.sigma, horizon=25))
    assert np.array_equal(mu.values, np.zeros((1, 25)))
    assert hist.shape == (1,)
    assert hist[0] == core.evaluate_plan([0.1, 0.0], np.zeros((1, 25)), dyn, cost)


def test_optimize_nag_gamma_zero_matches_baseline():
    t = tasks.get("hovercraft")
    x0 = t.initial_state(1)
    c = cfg(U=5, K=50, sigma=t.sigma, lambda_=0.01, gamma=0.0, horizon=15, seed=4)
    _, a = core.optimize(x0, t.dynamics(), t.cost(), c)
    _, b = core.optimize(x0, t.dynamics(), t.cost(), c.replace(method=Method.NAG))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("threads", [2, 4, 8])
@pytest.mark.parametrize("name", ["hovercraft", "car"])
def test_optimize_thread_count_invariant(name, threads):
    t = tasks.get(name)
    x0 = t.initial_state(2)
    c = cfg(U=4, K=300, sigma=t.sigma, lambda_=0.01, gamma=0.8, method="nag", horizon=12, seed=9)
    mu1, h1 = core.optimize(x0, t.dynamics(), t.cost(), c)
    mun, hn = core.optimize(x0, t.dynamics(), t.cost(), c.replace(threads=threads))
    assert np.array_equal(h1, hn) and np.array_equal(mu1.values, mun.values)


@pytest.mark.parametrize("threads", [1, 3])
def test_python_backend_thread_count_invariant(threads):
    t = tasks.get("car")
    x0 = t.initial_state(0)
    c = cfg(U=2, K=300, sigma=t.sigma, lambda_=0.01, horizon=8, backend="python")
    _, a = core.optimize(x0, t.dynamics(), t.cost(), c)
    _, b = core.optimize(x0, t.dynamics(), t.cost(), c.replace(threads=threads))
    assert np.array_equal(a, b)


@compiled_only
def test_backends_agree_on_optimize():
    t = tasks.get("hovercraft")
    x0 = t.initial_state(3)
    c = cfg(U=3, K=100, sigma=t.sigma, lambda_=0.01, horizon=10)
    _, a = core.optimize(x0, t.dynamics(), t.cost(), c.replace(backend="compiled"))
    _, b = core.optimize(x0, t.dynamics(), t.cost(), c.replace(backend="python"))
    np.testing.assert_allclose(a, b, rtol=1e-9)


@pytest.mark.slow
def test_pendulum_nag_convergence_envelope():
    # From hanging with the task defaults (lambda 0.01, K 1000, U 100, gamma 0.8).
    t = tasks.get("pendulum")
    c = PathIntegralConfig(lambda_=0.01, K=1000, U=100, gamma=0.8, sigma=t.sigma, method="nag",
                           horizon=t.horizon, seed=0)
    _, hist = core.optimize(np.zeros(2), t.dynamics(), t.cost(), c)
    after = hist[10:]
    running_min = np.minimum.accumulate(after)
    assert np.all(after <= 1.05 * running_min), "history rises more than 5% above its running minimum"
    assert hist[-1] < 0.2 * hist[0]


# --- properties


@settings(max_examples=200, deadline=None)
@given(costs_=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), lam=st.floats(1e-3, 1e3))
def test_weight_normalisation(costs_, lam):
    w = core.compute_weights(np.array(costs_), lam).weights
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all((w >= 0) & (w <= 1))


@settings(max_examples=200, deadline=None)
@given(data=st.data(), c0=st.floats(-1e3, 1e3), lam=st.floats(1e-2, 10.0))
def test_weight_offset_invariance(data, c0, lam):
    K = data.draw(st.integers(1, 20))
    s = np.array(data.draw(st.lists(st.floats(0, 10 * lam), min_size=K, max_size=K)))
    eps = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=K * 3, max_size=K * 3))).reshape(K, 1, 3)
    n = NoiseRealization(eps)
    w0 = core.compute_weights(s, lam)
    w1 = core.compute_weights(s + c0, lam)
    assert np.max(np.abs(w0.weights - w1.weights)) < 1e-9
    assert np.max(np.abs(core.weighted_noise(w0, n) - core.weighted_noise(w1, n))) < 1e-9


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_weighted_noise_antithetic_exact(data):
    K2 = data.draw(st.integers(1, 10))
    half = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=K2 * 4, max_size=K2 * 4))).reshape(K2, 2, 2)
    eps = np.empty((2 * K2, 2, 2))
    eps[0::2], eps[1::2] = half, -half
    costs_ = np.repeat(np.array(data.draw(st.lists(st.floats(0, 1), min_size=K2, max_size=K2))), 2)
    d = core.weighted_noise(core.compute_weights(costs_, 0.1), NoiseRealization(eps))
    assert np.all(d == 0.0)


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_divergent_rollouts_get_zero_weight(data):
    K = data.draw(st.integers(2, 20))
    s = np.array(data.draw(st.lists(st.floats(0, 1), min_size=K, max_size=K)))
    bad = data.draw(st.lists(st.integers(0, K - 1), min_size=1, max_size=K - 1, unique=True))
    s[bad] = np.inf
    w = core.compute_weights(s, 0.01).weights
    assert np.all(w[bad] == 0.0)
    eps = np.ones((K, 1, 2))
    eps[bad] = 1e300
    assert np.all(np.isfinite(core.weighted_noise(core.WeightVector(w), NoiseRealization(eps))))
