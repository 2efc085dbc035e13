import numpy as np
import pytest

from chlu.checks import harmonic_model, random_model
from chlu.data import lemniscate_series, trajectory_windows
from chlu.errors import DimensionError, GradientDiverged
from chlu.experiments import build_model, preset, train_config
from chlu.hamiltonian import ChluModel, KineticGovernor, PhaseState, total_energy
from chlu.integrator import IntegratorConfig, Trajectory, rollout
from chlu.potential import ParamGradient, QuadraticPotential
from chlu.training import (
    ReplayBuffer,
    TrainConfig,
    bptt_grad,
    clip_gradient,
    contrastive_grad,
    fit,
    lyapunov_estimate,
    replay_add,
    replay_sample,
    sgd_step,
    train_step,
    wake_loss,
)

from helpers import linear_net


def traj_of(q, p, eps=0.1):
    return Trajectory.from_arrays(np.asarray(q, float), np.asarray(p, float), eps)


# ---------------------------------------------------------------- config

def test_train_config_rejects_bad_values():
    with pytest.raises(ValueError):
        TrainConfig(eta=0.0)
    with pytest.raises(ValueError):
        TrainConfig(beta_mse=0.0, beta_cd=0.0)
    with pytest.raises(ValueError):
        TrainConfig(buffer_reinit_prob=1.5)


# ---------------------------------------------------------------- wake loss

def test_wake_loss_identical_is_zero(small_model):
    traj = rollout(PhaseState([0.1, 0.2], [0.3, 0.4]), small_model, IntegratorConfig(0.01, 0.0, 5))
    assert wake_loss(traj, traj) == 0.0


def test_wake_loss_adds_weighted_lyapunov(small_model):
    traj = rollout(PhaseState([0.1, 0.2], [0.3, 0.4]), small_model, IntegratorConfig(0.01, 0.0, 5))
    assert wake_loss(traj, traj, lyap=1.0, lam=0.5) == 0.5


def test_wake_loss_is_mean_of_squares(rng):
    q, p = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    tq, tp = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    expected = np.mean(np.concatenate([(q - tq)[1:].ravel(), (p - tp)[1:].ravel()]) ** 2)
    assert abs(wake_loss(traj_of(q, p), traj_of(tq, tp)) - expected) < 1e-12


def test_wake_loss_unit_offset(small_model):
    traj = rollout(PhaseState([0.1, 0.2], [0.3, 0.4]), small_model, IntegratorConfig(0.01, 0.0, 5))
    shifted = traj_of(traj.q + 1.0, traj.p + 1.0, 0.01)
    assert wake_loss(traj, shifted, lyap=0.3, lam=2.0) == pytest.approx(1.6, abs=1e-15)


def test_wake_loss_ignores_initial_state():
    a = traj_of([[0.0], [1.0]], [[0.0], [0.0]])
    b = traj_of([[5.0], [1.0]], [[5.0], [0.0]])
    assert wake_loss(a, b) == 0.0


def test_wake_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        wake_loss(traj_of(np.zeros((3, 1)), np.zeros((3, 1))), traj_of(np.zeros((4, 1)), np.zeros((4, 1))))


# ---------------------------------------------------------------- lyapunov

def test_lyapunov_flat_potential_is_small(rng):
    m = ChluModel(KineticGovernor.identity(2, 1.0, 1.0), QuadraticPotential(0.0, 2), 0.0)
    est = lyapunov_estimate(PhaseState(rng.normal(size=2), rng.normal(size=2)), m, IntegratorConfig(0.01, 0.0, 100))
    assert max(est, 0.0) < 0.5


def test_lyapunov_harmonic_is_near_zero():
    est = lyapunov_estimate(PhaseState([1.0], [0.0]), harmonic_model(1), IntegratorConfig(0.01, 0.0, 100))
    assert abs(est) < 0.01


def test_lyapunov_inverted_oscillator_is_positive():
    m = ChluModel(KineticGovernor.identity(1, 10.0, 1.0), QuadraticPotential(-1.0, 1), 0.0)
    est = lyapunov_estimate(PhaseState([0.0], [0.0]), m, IntegratorConfig(0.01, 0.0, 1000))
    assert est > 0.5


# ---------------------------------------------------------------- contrastive gradient

def test_contrastive_zero_when_states_match(small_model, rng):
    z = PhaseState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    assert np.all(contrastive_grad(small_model, z, z).flat() == 0.0)


def test_contrastive_linear_potential():
    m = ChluModel(KineticGovernor.identity(2), linear_net([1.0, -1.0], 0.0), 0.0)
    p = np.array([0.3, 0.1])
    g = contrastive_grad(m, PhaseState([1.0, 2.0], p), PhaseState([-1.0, 0.5], p))
    assert np.allclose(g.weights[0], [[2.0, 1.5]], atol=1e-15)
    assert np.allclose(g.biases[0], 0.0) and np.allclose(g.log_mass, 0.0)


def test_contrastive_descent_lowers_wake_relative_to_sleep(small_model, rng):
    m = small_model
    zw = PhaseState(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
    zs = PhaseState(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))

    def gap(model):
        return np.mean(total_energy(zw, model).H) - np.mean(total_energy(zs, model).H)

    g = contrastive_grad(m, zw, zs)
    before = gap(m)
    eta = 1e-6
    sgd_step(m, g, eta)
    # first-order change of the gap equals -eta |g|^2
    assert (gap(m) - before) / (-eta * g.norm() ** 2) == pytest.approx(1.0, rel=1e-4)


# ---------------------------------------------------------------- BPTT

def _param_fd(m, loss, h=1e-6):
    arrays = [x for pair in zip(m.potential.weights, m.potential.biases) for x in pair] + [m.governor.log_mass]
    out = []
    for arr in arrays:
        for i in range(arr.size):
            old = arr.flat[i]
            arr.flat[i] = old + h
            up = loss()
            arr.flat[i] = old - h
            down = loss()
            arr.flat[i] = old
            out.append((up - down) / (2 * h))
    return np.array(out)


def test_bptt_matches_finite_differences(rng):
    m = random_model(rng, 2, hidden=[5])
    cfg = IntegratorConfig(0.05, 0.0, 10)
    z0 = PhaseState(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    target = traj_of(rng.normal(size=(11, 2, 2)), rng.normal(size=(11, 2, 2)), 0.05)

    def loss():
        return wake_loss(rollout(z0, m, cfg, record_energy=False), target)

    g = bptt_grad(z0, target, m, cfg)
    fd = _param_fd(m, loss)
    assert np.max(np.abs(g.flat() - fd)) / np.max(np.abs(fd)) < 1e-4


def test_bptt_linear_one_step_closed_form():
    # V = w q + b in 1-D with c = 10: one step gives q1 = q0 + eps v(p0 - eps w / 2),
    # p1 = p0 - eps w. With q0 = 0, p0 = 0 and targets 0 the loss is (q1^2 + p1^2) / 2.
    eps, w = 0.1, 0.5
    m = ChluModel(KineticGovernor.identity(1, 10.0, 1.0), linear_net([w], 0.0), 0.0)
    target = traj_of(np.zeros((2, 1)), np.zeros((2, 1)), eps)
    g = bptt_grad(PhaseState([0.0], [0.0]), target, m, IntegratorConfig(eps, 0.0, 1))
    ph = -eps * w / 2
    v = ph / np.sqrt(ph ** 2 / 100 + 1)
    dv = 1 / (ph ** 2 / 100 + 1) ** 1.5
    q1, p1 = eps * v, -eps * w
    expected = q1 * eps * dv * (-eps / 2) + p1 * (-eps)
    assert g.weights[0][0, 0] == pytest.approx(expected, rel=1e-7)
    assert g.biases[0][0] == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------- sgd and clipping

def test_sgd_step_hand_value():
    m = ChluModel(KineticGovernor.identity(1), linear_net([1.0], 1.0), 0.0)
    g = ParamGradient([np.array([[2.0]])], [np.array([2.0])], np.array([2.0]))
    sgd_step(m, g, 0.1)
    assert m.potential.weights[0][0, 0] == pytest.approx(0.8, abs=1e-15)
    assert m.potential.biases[0][0] == pytest.approx(0.8, abs=1e-15)
    assert m.governor.log_mass[0] == pytest.approx(-0.2, abs=1e-15)


def test_sgd_step_rejects_non_finite_gradient():
    m = ChluModel(KineticGovernor.identity(1), linear_net([1.0], 1.0), 0.0)
    g = ParamGradient([np.array([[np.nan]])], [np.array([0.0])], np.array([0.0]))
    with pytest.raises(GradientDiverged, match="gradient diverged"):
        sgd_step(m, g, 0.1)


def test_clip_gradient():
    g = ParamGradient([np.array([[30.0]])], [np.array([40.0])], None)
    clipped, flag = clip_gradient(g, 10.0)
    assert flag and clipped.norm() == pytest.approx(10.0)
    same, flag = clip_gradient(g * 0.01, 10.0)
    assert not flag and same.norm() == pytest.approx(0.5)


# ---------------------------------------------------------------- replay buffer

def test_replay_fifo_eviction():
    buf = ReplayBuffer(capacity=3)
    for i in range(5):
        replay_add(buf, PhaseState([float(i)], [0.0]))
    assert [z.q[0] for z in buf.entries] == [2.0, 3.0, 4.0]


def test_replay_rejects_non_finite_rows():
    buf = ReplayBuffer()
    replay_add(buf, np.array([[1.0, 2.0], [np.nan, 0.0], [3.0, np.inf]]))
    assert len(buf) == 1


def test_replay_empty_buffer_reinitializes():
    out = replay_sample(ReplayBuffer(seed=1), 4, 3, 0.0)
    assert len(out) == 4 and all(z.dim == 3 for z in out)


def test_replay_samples_stored_states_without_reinit():
    buf = ReplayBuffer()
    replay_add(buf, PhaseState([7.0], [8.0]))
    assert all(z.q[0] == 7.0 and z.p[0] == 8.0 for z in replay_sample(buf, 10, 1, 0.0))


def test_replay_always_reinitializes_at_probability_one():
    buf = ReplayBuffer()
    replay_add(buf, PhaseState([7.0], [8.0]))
    assert all(z.q[0] != 7.0 for z in replay_sample(buf, 10, 1, 1.0))


def test_replay_sample_is_seeded():
    a = replay_sample(ReplayBuffer(seed=5), 3, 2, 0.5)
    b = replay_sample(ReplayBuffer(seed=5), 3, 2, 0.5)
    assert all(np.array_equal(x.flat(), y.flat()) for x, y in zip(a, b))


# ---------------------------------------------------------------- train step and fit

def _window_batch(B=4, K=8):
    traj = lemniscate_series(1.0)
    w = trajectory_windows([traj], K, stride=20)
    return w.batch(np.arange(B), traj.epsilon), traj.epsilon


def test_train_step_fills_buffer_and_reports(small_model):
    batch, eps = _window_batch()
    buf = ReplayBuffer()
    met = train_step(batch, small_model, buf, TrainConfig(eta=0.01, wake_steps=8, sleep_steps=8), eps)
    assert met.is_healthy() and len(buf) == 4
    assert met.gap == pytest.approx(met.h_sleep - met.h_wake)


def test_train_step_mse_only_leaves_mass_fixed_when_frozen(small_model):
    batch, eps = _window_batch()
    before = small_model.governor.log_mass.copy()
    cfg = TrainConfig(eta=0.01, beta_cd=0.0, wake_steps=8, sleep_steps=8, learn_mass=False)
    train_step(batch, small_model, ReplayBuffer(), cfg, eps)
    assert np.array_equal(small_model.governor.log_mass, before)


def _params(m):
    return np.concatenate([a.ravel() for a in m.potential.weights + m.potential.biases] + [m.governor.log_mass])


def test_train_step_contrastive_only_with_matching_states_is_a_no_op(small_model):
    # one buffered state equal to the window start: wake and sleep rollouts coincide
    (z0, target), eps = _window_batch(B=1)
    buf = ReplayBuffer()
    replay_add(buf, z0)
    before = _params(small_model)
    cfg = TrainConfig(eta=0.1, beta_mse=0.0, beta_cd=1.0, wake_steps=8, sleep_steps=8, buffer_reinit_prob=0.0)
    met = train_step((z0, target), small_model, buf, cfg, eps)
    assert met.grad_norm == 0.0 and np.array_equal(_params(small_model), before)


def test_train_step_mse_only_on_exact_target_is_a_no_op(small_model):
    z0 = PhaseState(np.array([[0.2, -0.1]]), np.array([[0.3, 0.1]]))
    target = rollout(z0, small_model, IntegratorConfig(0.05, 0.0, 8), record_energy=False)
    before = _params(small_model)
    cfg = TrainConfig(eta=0.1, beta_mse=1.0, beta_cd=0.0, wake_steps=8, sleep_steps=8)
    met = train_step((z0, target), small_model, ReplayBuffer(), cfg, 0.05)
    assert met.wake_mse == 0.0 and np.array_equal(_params(small_model), before)


def test_train_step_dimension_mismatch(small_model):
    z0 = PhaseState(np.zeros((2, 3)), np.zeros((2, 3)))
    target = traj_of(np.zeros((9, 2, 3)), np.zeros((9, 2, 3)))
    with pytest.raises(DimensionError):
        train_step((z0, target), small_model, ReplayBuffer(), TrainConfig(wake_steps=8), 0.1)


def test_fit_rejects_window_length_mismatch(small_model):
    traj = lemniscate_series(1.0)
    with pytest.raises(DimensionError):
        fit(small_model, trajectory_windows([traj], 4), TrainConfig(wake_steps=8), traj.epsilon)


def _lemniscate_fit(max_steps):
    cfg = preset("lemniscate")
    tc = train_config(cfg)
    traj = lemniscate_series(cfg["data"]["cycles"], cfg["data"]["samples_per_cycle"])
    m = build_model(cfg, 2)
    res = fit(m, trajectory_windows([traj], tc.wake_steps), tc, traj.epsilon, max_steps=max_steps)
    return m, res


def test_fit_reduces_lemniscate_wake_error():
    _, res = _lemniscate_fit(500)
    mse = np.array([met.wake_mse for met in res.metrics])
    assert len(mse) == 500 and np.all(np.isfinite(mse))
    assert mse[-20:].mean() < 0.25 * mse[:20].mean()


def test_fit_is_deterministic():
    m1, r1 = _lemniscate_fit(5)
    m2, r2 = _lemniscate_fit(5)
    assert [x.wake_mse for x in r1.metrics] == [x.wake_mse for x in r2.metrics]
    assert np.array_equal(m1.potential.weights[0], m2.potential.weights[0])
