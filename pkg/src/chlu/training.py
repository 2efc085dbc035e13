"""Wake-sleep training with a contrastive energy update.

One training step:

1. wake: roll out the batch initial states conservatively and score the
   rollout against the target trajectory (MSE, optional Lyapunov penalty);
2. sleep: roll out states drawn from a replay buffer to get hallucinations;
3. update: descend on ``beta_mse * grad(MSE) + lyap_weight * grad(penalty)
   + beta_cd * (grad H(wake) - grad H(hallucination))``;
4. push the hallucinations back into the buffer.

Gradients of the rollout losses are exact reverse-mode passes through the
unrolled Verlet steps, except that second derivatives of the potential use
symmetric differences of exact first derivatives.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, GradientDiverged, IntegrationDiverged
from .hamiltonian import (
    ChluModel,
    PhaseState,
    hamiltonian_grad_params,
    kinetic_jvp_momentum,
    kinetic_vjp_log_mass,
    total_energy,
)
from .integrator import IntegratorConfig, Trajectory, rollout, rollout_with_intermediates
from .potential import ParamGradient
from .seeding import named_stream

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- replay buffer

class ReplayBuffer:
    """FIFO store of single phase states used to seed sleep rollouts."""

    def __init__(self, capacity: int = 1024, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque[PhaseState] = deque(maxlen=capacity)
        self.rng = named_stream(seed, "replay")

    def __len__(self):
        return len(self.entries)

    def add(self, z) -> None:
        replay_add(self, z)

    def sample(self, n: int, d: int, reinit_prob: float) -> list[PhaseState]:
        return replay_sample(self, n, d, reinit_prob)


def replay_add(buf: ReplayBuffer, z) -> None:
    """Append a state (or each row of a batch); non-finite rows are dropped.

    ``z`` is a :class:`PhaseState` or a flat ``q || p`` array of shape
    ``(2d,)`` or ``(B, 2d)``.
    """
    flat = z.flat() if isinstance(z, PhaseState) else np.asarray(z, dtype=np.float64)
    rows = flat.reshape(-1, flat.shape[-1])
    d = rows.shape[1] // 2
    for row in rows:
        if not np.all(np.isfinite(row)):
            log.warning("replay buffer rejected a non-finite state")
            continue
        buf.entries.append(PhaseState(row[:d].copy(), row[d:].copy()))


def replay_sample(buf: ReplayBuffer, n: int, d: int, reinit_prob: float) -> list[PhaseState]:
    """Draw n states: fresh N(0, I) noise with probability reinit_prob (or when empty), else uniform from the buffer."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = []
    for _ in range(n):
        fresh = len(buf.entries) == 0 or buf.rng.random() < reinit_prob
        if fresh:
            out.append(PhaseState(buf.rng.standard_normal(d), buf.rng.standard_normal(d)))
        else:
            out.append(buf.entries[int(buf.rng.integers(len(buf.entries)))].copy())
    return out


def stack_states(states: list[PhaseState]) -> PhaseState:
    return PhaseState(np.stack([z.q for z in states]), np.stack([z.p for z in states]))


# ---------------------------------------------------------------- config and metrics

@dataclass
class TrainConfig:
    eta: float = 1e-3
    lyap_weight: float = 0.0
    beta_mse: float = 1.0
    beta_cd: float = 1.0
    wake_steps: int = 16
    sleep_steps: int = 16
    buffer_capacity: int = 1024
    buffer_reinit_prob: float = 0.05
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    clip_norm: float = 10.0
    lyap_delta: float = 1e-5
    learn_mass: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if min(self.lyap_weight, self.beta_mse, self.beta_cd) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.beta_mse == 0 and self.beta_cd == 0:
            raise ValueError("at least one of beta_mse, beta_cd must be positive")
        if self.wake_steps < 1 or self.sleep_steps < 1:
            raise ValueError("wake_steps and sleep_steps must be positive")
        if not 0.0 <= self.buffer_reinit_prob <= 1.0:
            raise ValueError("buffer_reinit_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainMetrics:
    """One training step's diagnostics."""

    wake_mse: float = float("nan")
    lyapunov: float = float("nan")
    h_wake: float = float("nan")
    h_sleep: float = float("nan")
    gap: float = float("nan")
    grad_norm_mse: float = 0.0
    grad_norm_cd: float = 0.0
    grad_norm: float = 0.0
    clipped: bool = False
    diverged: bool = False
    message: str = ""

    def is_healthy(self) -> bool:
        vals = [self.wake_mse, self.h_wake, self.h_sleep, self.grad_norm]
        return not self.diverged and all(np.isfinite(v) for v in vals)


# ---------------------------------------------------------------- losses

def wake_loss(traj: Trajectory, target: Trajectory, lyap: float = 0.0, lam: float = 0.0) -> float:
    """MSE over every q and p component of the predicted steps (index 1 on), plus lam * lyap.

    The initial state is an input, not a prediction, so it is excluded.
    """
    if traj.q.shape != target.q.shape or traj.p.shape != target.p.shape:
        raise DimensionError(f"trajectory shapes differ: {traj.q.shape} vs {target.q.shape}")
    if len(traj) < 2:
        raise DimensionError("wake loss needs at least one predicted step")
    dq = traj.q[1:] - target.q[1:]
    dp = traj.p[1:] - target.p[1:]
    mse = (np.sum(dq * dq) + np.sum(dp * dp)) / (dq.size + dp.size)
    return float(mse + lam * lyap)


def _unit_perturbation(shape, seed):
    rng = named_stream(seed, "lyapunov")
    u = rng.standard_normal(shape)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def lyapunov_estimate(z0: PhaseState, m: ChluModel, cfg: IntegratorConfig, delta: float = 1e-5,
                      seed: int = 0):
    """Finite-time largest-exponent estimate from a twin rollout.

    Returns (1 / (steps * eps)) * ln(|dz_final| / |dz_0|) with dz_0 = delta * u
    for a seeded random unit vector u in phase space. For a batch, one
    estimate per row. The wake penalty is ``max(estimate, 0)``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    z = z0.flat()
    dz0 = delta * _unit_perturbation(z.shape, seed)
    a = rollout(z0, m, cfg, record_every=max(cfg.steps, 1), record_energy=False).final.flat()
    b = rollout(PhaseState.from_flat(z + dz0), m, cfg, record_every=max(cfg.steps, 1),
                record_energy=False).final.flat()
    ratio = np.linalg.norm(b - a, axis=-1) / np.linalg.norm(dz0, axis=-1)
    return np.log(ratio) / (cfg.steps * cfg.epsilon)


# ---------------------------------------------------------------- gradients

def contrastive_grad(m: ChluModel, z_wake: PhaseState, z_sleep: PhaseState) -> ParamGradient:
    """Batch-mean grad_theta H(z_wake) minus batch-mean grad_theta H(z_sleep).

    Descending along this lowers the energy of wake states and raises it at
    hallucinations.
    """
    if z_wake.dim != m.dim or z_sleep.dim != m.dim:
        raise DimensionError("state dimension does not match model")
    nw = 1 if z_wake.q.ndim == 1 else z_wake.q.shape[0]
    ns = 1 if z_sleep.q.ndim == 1 else z_sleep.q.shape[0]
    gw = hamiltonian_grad_params(m, z_wake, np.full(nw, 1.0 / nw))
    gs = hamiltonian_grad_params(m, z_sleep, np.full(ns, 1.0 / ns))
    return gw - gs


def backprop_rollout(m: ChluModel, qs, ps, phs, epsilon: float, gamma: float, adj_q, adj_p) -> ParamGradient:
    """Reverse-mode pass through unrolled Verlet steps.

    ``qs``, ``ps`` hold states 0..K and ``phs`` the half-step momenta 1..K
    (as returned by :func:`rollout_with_intermediates`); ``adj_q``/``adj_p``
    are the direct loss derivatives at each state. Returns the gradient
    with respect to the potential parameters and ``log_mass``.
    """
    K = len(phs)
    g = m.governor
    half = 0.5 * epsilon
    grad = ParamGradient([np.zeros_like(W) for W in m.potential.weights],
                         [np.zeros_like(b) for b in m.potential.biases],
                         np.zeros(m.dim))
    aq_next = None     # total adjoint of q_{t+1}
    aph_next = None    # adjoint of the half-step momentum of step t+1
    for t in range(K, -1, -1):
        ap = adj_p[t] if aph_next is None else adj_p[t] + aph_next
        kick = np.zeros_like(qs[t])
        if t >= 1:
            ap_star = (1.0 - gamma) * ap
            kick = kick + ap_star
        if aph_next is not None:
            kick = kick + aph_next
        hv, mixed = m.potential.hvp_and_mixed(qs[t], kick)
        grad = grad + (-half) * mixed
        aq = adj_q[t] - half * (hv + 2.0 * m.alpha * kick)
        if aq_next is not None:
            aq = aq + aq_next
        if t >= 1:
            ph = phs[t - 1]
            aph_next = ap_star + epsilon * kinetic_jvp_momentum(ph, g, aq)
            grad.log_mass = grad.log_mass + epsilon * kinetic_vjp_log_mass(ph, g, aq)
        aq_next = aq
    return grad


def bptt_grad(z0: PhaseState, target: Trajectory, m: ChluModel, cfg: IntegratorConfig,
              lam: float = 0.0) -> ParamGradient:
    """Exact gradient of the wake MSE through ``cfg.steps`` Verlet steps.

    ``lam`` is accepted for signature symmetry with :func:`wake_loss`; the
    Lyapunov penalty gradient comes from :func:`lyapunov_penalty_grad`.
    """
    grad, _, _ = _mse_and_grad(z0, target, m, cfg)
    return grad


def _mse_and_grad(z0, target, m, cfg):
    qs, ps, phs = rollout_with_intermediates(z0, m, cfg.epsilon, cfg.steps, cfg.gamma)
    if qs.shape != target.q.shape:
        raise DimensionError(f"rollout shape {qs.shape} does not match target {target.q.shape}")
    dq = qs - target.q
    dp = ps - target.p
    dq[0] = 0.0
    dp[0] = 0.0
    n = 2 * dq[1:].size
    mse = float((np.sum(dq * dq) + np.sum(dp * dp)) / n)
    grad = backprop_rollout(m, qs, ps, phs, cfg.epsilon, cfg.gamma, 2.0 * dq / n, 2.0 * dp / n)
    return grad, mse, (qs, ps, phs)


def lyapunov_penalty_grad(z0: PhaseState, m: ChluModel, cfg: IntegratorConfig, delta: float = 1e-5,
                          seed: int = 0, base=None):
    """Batch-mean ``max(lyapunov_estimate, 0)`` and its parameter gradient.

    ``base`` optionally reuses an already computed ``(qs, ps, phs)`` rollout of z0.
    """
    z = z0.flat()
    dz0 = delta * _unit_perturbation(z.shape, seed)
    a = base if base is not None else rollout_with_intermediates(z0, m, cfg.epsilon, cfg.steps, cfg.gamma)
    b = rollout_with_intermediates(PhaseState.from_flat(z + dz0), m, cfg.epsilon, cfg.steps, cfg.gamma)
    diff = np.concatenate([b[0][-1] - a[0][-1], b[1][-1] - a[1][-1]], axis=-1)
    norm2 = np.sum(diff * diff, axis=-1, keepdims=True)
    T = cfg.steps * cfg.epsilon
    est = np.log(np.sqrt(norm2[..., 0]) / np.linalg.norm(dz0, axis=-1)) / T
    active = (est > 0).astype(float)
    nb = np.size(est)
    # d est / d z_final = diff / (T |diff|^2); only rows with a positive estimate contribute
    coef = diff / (T * norm2) * np.expand_dims(active, -1) / nb
    d = m.dim
    zeros = [np.zeros_like(x) for x in a[0]]
    adj_q_b = np.array(zeros)
    adj_p_b = np.array(zeros)
    adj_q_b[-1] = coef[..., :d]
    adj_p_b[-1] = coef[..., d:]
    gb = backprop_rollout(m, *b, cfg.epsilon, cfg.gamma, adj_q_b, adj_p_b)
    ga = backprop_rollout(m, *a, cfg.epsilon, cfg.gamma, -adj_q_b, -adj_p_b)
    return float(np.mean(np.maximum(est, 0.0))), gb + ga


def clip_gradient(g: ParamGradient, max_norm: float):
    norm = g.norm()
    if max_norm > 0 and norm > max_norm:
        return g * (max_norm / norm), True
    return g, False


def sgd_step(m: ChluModel, g: ParamGradient, eta: float) -> ChluModel:
    """In-place theta <- theta - eta * g over potential weights, biases and log_mass."""
    if not g.is_finite():
        raise GradientDiverged()
    for W, gW in zip(m.potential.weights, g.weights):
        W -= eta * gW
    for b, gb in zip(m.potential.biases, g.biases):
        b -= eta * gb
    if g.log_mass is not None:
        m.governor.log_mass -= eta * g.log_mass
    return m


# ---------------------------------------------------------------- training loop

def train_step(batch, m: ChluModel, buf: ReplayBuffer, cfg: TrainConfig, epsilon: float,
               step_seed: int = 0) -> TrainMetrics:
    """One wake-sleep update.

    ``batch`` is ``(z0, target)`` with ``z0`` a batched :class:`PhaseState`
    of shape ``(B, d)`` and ``target`` a :class:`Trajectory` of shape
    ``(wake_steps + 1, B, d)``. On divergence the update is skipped and the
    returned metrics carry ``diverged=True``.
    """
    z0, target = batch
    if target.q.shape[-1] != m.dim or z0.dim != m.dim:
        raise DimensionError("batch dimension does not match model")
    wake_cfg = IntegratorConfig(epsilon, 0.0, cfg.wake_steps)
    sleep_cfg = IntegratorConfig(epsilon, 0.0, cfg.sleep_steps)
    met = TrainMetrics()
    B = z0.q.shape[0] if z0.q.ndim == 2 else 1
    try:
        g_mse, met.wake_mse, fwd = _mse_and_grad(z0, target, m, wake_cfg)
        if cfg.lyap_weight > 0:
            met.lyapunov, g_lyap = lyapunov_penalty_grad(z0, m, wake_cfg, cfg.lyap_delta, step_seed, fwd)
        else:
            g_lyap = None
        z_wake = PhaseState(fwd[0][-1], fwd[1][-1])
        starts = stack_states(replay_sample(buf, B, m.dim, cfg.buffer_reinit_prob))
        hall = rollout(starts, m, sleep_cfg, record_every=cfg.sleep_steps, record_energy=False).final
    except IntegrationDiverged as exc:
        met.diverged = True
        met.message = str(exc)
        log.warning("training step aborted: %s", exc)
        return met

    met.h_wake = float(np.mean(total_energy(z_wake, m).H))
    met.h_sleep = float(np.mean(total_energy(hall, m).H))
    met.gap = met.h_sleep - met.h_wake
    g_cd = contrastive_grad(m, z_wake, hall)
    met.grad_norm_mse = g_mse.norm()
    met.grad_norm_cd = g_cd.norm()
    total = cfg.beta_mse * g_mse + cfg.beta_cd * g_cd
    if g_lyap is not None:
        total = total + cfg.lyap_weight * g_lyap
    if not cfg.learn_mass:
        total.log_mass = None
    total, met.clipped = clip_gradient(total, cfg.clip_norm)
    if met.clipped:
        log.debug("gradient clipped to norm %g", cfg.clip_norm)
    met.grad_norm = total.norm()
    sgd_step(m, total, cfg.eta)
    replay_add(buf, hall)
    return met


@dataclass
class WindowSet:
    """Training windows: initial states ``(N, d)`` and targets ``(K + 1, N, d)``."""

    z0_q: np.ndarray
    z0_p: np.ndarray
    target_q: np.ndarray
    target_p: np.ndarray

    def __len__(self):
        return self.z0_q.shape[0]

    def batch(self, idx, epsilon: float):
        z0 = PhaseState(self.z0_q[idx], self.z0_p[idx])
        target = Trajectory.from_arrays(self.target_q[:, idx], self.target_p[:, idx], epsilon)
        return z0, target


@dataclass
class FitResult:
    metrics: list[TrainMetrics] = field(default_factory=list)
    buffer: ReplayBuffer | None = None


def fit(m: ChluModel, windows: WindowSet, cfg: TrainConfig, epsilon: float, max_steps: int | None = None,
        callback=None) -> FitResult:
    """Run ``cfg.epochs`` shuffled passes of :func:`train_step` over the windows.

    Deterministic for a given ``cfg.seed``. ``max_steps`` caps the total
    number of updates.
    """
    if windows.target_q.shape[0] != cfg.wake_steps + 1:
        raise DimensionError(
            f"windows hold {windows.target_q.shape[0] - 1} steps but wake_steps is {cfg.wake_steps}")
    buf = ReplayBuffer(cfg.buffer_capacity, cfg.seed)
    order_rng = named_stream(cfg.seed, "batch-order")
    result = FitResult(buffer=buf)
    step = 0
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(len(windows))
        for start in range(0, len(perm), cfg.batch_size):
            idx = np.sort(perm[start:start + cfg.batch_size])
            met = train_step(windows.batch(idx, epsilon), m, buf, cfg, epsilon, step_seed=cfg.seed + step)
            result.metrics.append(met)
            if callback is not None:
                callback(step, epoch, met)
            step += 1
            if max_steps is not None and step >= max_steps:
                return result
    return result
