"""Dissipative velocity Verlet, annealed Langevin sampling and schedules.

Two friction conventions live here and are not interchangeable:

* :func:`verlet_step` applies ``gamma`` once per step as a multiplicative
  momentum factor ``(1 - gamma)``.
* :func:`langevin_step` treats ``gamma`` as a continuous rate, contributing
  ``-gamma * p * epsilon`` to the momentum update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationDiverged, MasslessOriginError
from .hamiltonian import (
    ChluModel,
    Energy,
    PhaseState,
    confinement_energy,
    potential_gradient,
    total_energy,
)

DIVERGENCE_LIMIT = 1e12


@dataclass
class IntegratorConfig:
    epsilon: float
    gamma: float = 0.0
    steps: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")


@dataclass
class AnnealSchedule:
    kind: str = "constant"
    start_value: float = 0.0
    end_value: float = 0.0
    total_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "geometric"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.kind == "geometric" and not (self.start_value > 0 and self.end_value > 0):
            raise ValueError("geometric schedule requires positive endpoints")

    @classmethod
    def constant(cls, value: float) -> "AnnealSchedule":
        return cls("constant", value, value, 1)

    @classmethod
    def parse(cls, text: str, total_steps: int) -> "AnnealSchedule":
        """Parse ``kind:start[:end]``, e.g. ``geometric:1.0:0.01`` or ``constant:0.5``."""
        parts = text.split(":")
        kind = parts[0]
        start = float(parts[1])
        end = float(parts[2]) if len(parts) > 2 else start
        return cls(kind, start, end, total_steps)

    def __str__(self):
        return f"{self.kind}:{self.start_value!r}:{self.end_value!r}"


def anneal_value(s: AnnealSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("step index must be nonnegative")
    if s.kind == "constant":
        return s.start_value
    frac = min(k / s.total_steps, 1.0)
    if s.kind == "linear":
        return s.start_value + (s.end_value - s.start_value) * frac
    return s.start_value * (s.end_value / s.start_value) ** frac


@dataclass
class LangevinConfig:
    temperature: float = 0.0
    gamma: float = 0.0
    kB: float = 1.0
    seed: int = 0
    temp_schedule: AnnealSchedule | None = None
    gamma_schedule: AnnealSchedule | None = None

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ValueError("temperature must be nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.kB > 0:
            raise ValueError("kB must be positive")
        if self.temp_schedule is None:
            self.temp_schedule = AnnealSchedule.constant(self.temperature)
        if self.gamma_schedule is None:
            self.gamma_schedule = AnnealSchedule.constant(self.gamma)

    def at(self, k: int) -> tuple[float, float]:
        """(gamma_k, temperature_k) for step k."""
        return anneal_value(self.gamma_schedule, k), anneal_value(self.temp_schedule, k)


@dataclass
class Trajectory:
    """Recorded states and energy components of a rollout.

    ``q`` and ``p`` have shape ``(N, d)`` (or ``(N, B, d)`` for batched
    rollouts); ``energies`` has shape ``(N, 4)`` (or ``(N, 4, B)``) with
    columns H, T, V, C; ``steps`` holds the integer step index of each record.
    """

    q: np.ndarray
    p: np.ndarray
    energies: np.ndarray
    steps: np.ndarray
    epsilon: float

    def __post_init__(self):
        n = len(self.steps)
        if not (len(self.q) == len(self.p) == len(self.energies) == n):
            raise ValueError("trajectory arrays disagree in length")

    def __len__(self):
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.epsilon

    @property
    def states(self) -> list[PhaseState]:
        return [PhaseState(q, p) for q, p in zip(self.q, self.p)]

    def __getitem__(self, i) -> PhaseState:
        return PhaseState(self.q[i], self.p[i])

    @property
    def final(self) -> PhaseState:
        return self[-1]

    @classmethod
    def from_arrays(cls, q, p, epsilon: float, model: ChluModel | None = None, steps=None) -> "Trajectory":
        """Wrap target data; energies are nan unless a model is supplied."""
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        n = len(q)
        steps = np.arange(n) if steps is None else np.asarray(steps)
        if model is None:
            e = np.full((n, 4) + q.shape[1:-1], np.nan)
        else:
            e = np.array([_energy_array(PhaseState(a, b), model) for a, b in zip(q, p)])
        return cls(q, p, e, steps, float(epsilon))


def _energy_array(z: PhaseState, m: ChluModel) -> np.ndarray:
    return np.array(total_energy(z, m), dtype=np.float64)


def _energy_fast(q, p, m: ChluModel) -> np.ndarray:
    g = m.governor
    T = np.sqrt(g.c ** 2 * np.sum(p * p * g.inv_mass, axis=-1) + g.m0 ** 2 * g.c ** 4)
    V = m.potential.value(q)
    C = m.alpha * np.sum(q * q, axis=-1)
    return np.array([T + V + C, T, V, C])


def _raw_energy(q, p, m: ChluModel) -> Energy:
    with np.errstate(all="ignore"):
        g = m.governor
        T = np.sqrt(g.c ** 2 * np.sum(p * p * g.inv_mass, axis=-1) + g.m0 ** 2 * g.c ** 4)
        try:
            V = m.potential.value(q)
        except Exception:  # potential itself may reject non-finite input
            V = np.full(np.shape(T), np.nan)
        C = confinement_energy(q, m.alpha)
        H = T + V + C
    mean = lambda x: float(np.mean(x))
    return Energy(mean(H), mean(T), mean(V), mean(C))


def _guard(m, step, q, p):
    # nan compares false, so one test catches nan, inf and blow-up
    if not (np.abs(q).max() <= DIVERGENCE_LIMIT and np.abs(p).max() <= DIVERGENCE_LIMIT):
        raise IntegrationDiverged(_raw_energy(q, p, m), step)


def _velocity(p, g):
    """Unchecked kinetic gradient for the inner loops."""
    if g.m0 == 0.0 and np.any(np.all(p == 0.0, axis=-1)):
        raise MasslessOriginError()
    w = p * g.inv_mass
    T = np.sqrt(g.c ** 2 * np.sum(p * w, axis=-1, keepdims=True) + g.m0 ** 2 * g.c ** 4)
    return g.c ** 2 * w / T


def _verlet_arrays(q, p, m: ChluModel, epsilon: float, gamma: float, step=None):
    half = 0.5 * epsilon
    with np.errstate(all="ignore"):
        p_half = p - half * potential_gradient(q, m)
        q_new = q + epsilon * _velocity(p_half, m.governor)
        p_star = p_half - half * potential_gradient(q_new, m)
    _guard(m, step, q_new, p_star)
    return q_new, (1.0 - gamma) * p_star, p_half


def verlet_step(z: PhaseState, m: ChluModel, epsilon: float, gamma: float = 0.0) -> PhaseState:
    """One dissipative velocity Verlet step (half kick, drift, half kick, damping).

    With ``gamma = 0`` the map is symplectic and time-reversible.
    """
    IntegratorConfig(epsilon, gamma)
    q, p, _ = _verlet_arrays(z.q, z.p, m, epsilon, gamma)
    return PhaseState(q, p)


def rollout(z0: PhaseState, m: ChluModel, cfg: IntegratorConfig, record_every: int = 1,
            record_energy: bool = True) -> Trajectory:
    """Apply ``cfg.steps`` Verlet steps from ``z0``.

    Every ``record_every``-th state is kept, plus the initial and final
    states. Energies are nan when ``record_energy`` is False.
    """
    q, p = z0.q.copy(), z0.p.copy()
    qs, ps, es, ks = [q], [p], [], [0]
    emp = np.full((4,) + q.shape[:-1], np.nan)
    es.append(_energy_array(z0, m) if record_energy else emp)
    for k in range(1, cfg.steps + 1):
        q, p, _ = _verlet_arrays(q, p, m, cfg.epsilon, cfg.gamma, step=k)
        if k % record_every == 0 or k == cfg.steps:
            qs.append(q)
            ps.append(p)
            ks.append(k)
            es.append(_energy_fast(q, p, m) if record_energy else emp)
    return Trajectory(np.array(qs), np.array(ps), np.array(es), np.array(ks), cfg.epsilon)


def rollout_with_intermediates(z0: PhaseState, m: ChluModel, epsilon: float, steps: int,
                               gamma: float = 0.0):
    """Every state plus the half-step momenta, as arrays for reverse-mode passes.

    Returns ``(q, p, p_half)`` with shapes ``(steps+1, ..., d)`` for q and p
    and ``(steps, ..., d)`` for the half-step momenta.
    """
    q, p = z0.q, z0.p
    qs, ps, phs = [q], [p], []
    for k in range(1, steps + 1):
        q, p, ph = _verlet_arrays(q, p, m, epsilon, gamma, step=k)
        qs.append(q)
        ps.append(p)
        phs.append(ph)
    return np.array(qs), np.array(ps), np.array(phs)


def langevin_step(z: PhaseState, m: ChluModel, epsilon: float, lcfg: LangevinConfig,
                  step_index: int, rng: np.random.Generator | None = None) -> PhaseState:
    """Euler-Maruyama momentum update followed by the relativistic drift.

    p' = p - eps * grad(V + alpha|q|^2)(q) - gamma_k * p * eps + sqrt(2 gamma_k kB T_k eps) * xi
    q' = q + eps * grad T(p')

    Without an explicit ``rng`` the noise stream is derived from
    ``(lcfg.seed, step_index)`` alone.
    """
    gamma, temp = lcfg.at(step_index)
    if rng is None:
        rng = np.random.default_rng([lcfg.seed, step_index])
    q, p = _langevin_arrays(z.q, z.p, m, epsilon, gamma, temp, lcfg.kB, rng, step_index)
    return PhaseState(q, p)


def _langevin_arrays(q, p, m, epsilon, gamma, temp, kB, rng, step):
    with np.errstate(all="ignore"):
        p_new = p - epsilon * potential_gradient(q, m) - gamma * epsilon * p
        sigma = np.sqrt(2.0 * gamma * kB * temp * epsilon)
        if sigma > 0.0:
            p_new = p_new + sigma * rng.standard_normal(np.shape(p))
        q_new = q + epsilon * _velocity(p_new, m.governor)
    _guard(m, step, q_new, p_new)
    return q_new, p_new


def langevin_run(z0: PhaseState, m: ChluModel, epsilon: float, lcfg: LangevinConfig, steps: int,
                 record_every: int = 1, record_energy: bool = True) -> Trajectory:
    """Run ``steps`` Langevin steps with one noise stream seeded by ``lcfg.seed``."""
    rng = np.random.default_rng(lcfg.seed)
    q, p = z0.q.copy(), z0.p.copy()
    emp = np.full((4,) + q.shape[:-1], np.nan)
    qs, ps, ks = [q], [p], [0]
    es = [_energy_array(z0, m) if record_energy else emp]
    for k in range(steps):
        gamma, temp = lcfg.at(k)
        q, p = _langevin_arrays(q, p, m, epsilon, gamma, temp, lcfg.kB, rng, k + 1)
        if (k + 1) % record_every == 0 or k + 1 == steps:
            qs.append(q)
            ps.append(p)
            ks.append(k + 1)
            es.append(_energy_fast(q, p, m) if record_energy else emp)
    return Trajectory(np.array(qs), np.array(ps), np.array(es), np.array(ks), float(epsilon))


def langevin_moments(z0: PhaseState, m: ChluModel, epsilon: float, lcfg: LangevinConfig, steps: int,
                     burn_in: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Running mean and variance of q over ``steps`` Langevin steps after ``burn_in``.

    Pools every batch row; nothing but the two moments is stored, so long
    chains run in constant memory.
    """
    rng = np.random.default_rng(lcfg.seed)
    q, p = z0.q.copy(), z0.p.copy()
    for k in range(burn_in):
        gamma, temp = lcfg.at(k)
        q, p = _langevin_arrays(q, p, m, epsilon, gamma, temp, lcfg.kB, rng, k + 1)
    s1 = np.zeros(q.shape[-1])
    s2 = np.zeros(q.shape[-1])
    rows = q.reshape(-1, q.shape[-1]).shape[0]
    for k in range(burn_in, burn_in + steps):
        gamma, temp = lcfg.at(k)
        q, p = _langevin_arrays(q, p, m, epsilon, gamma, temp, lcfg.kB, rng, k + 1)
        flat = q.reshape(-1, q.shape[-1])
        s1 += flat.sum(axis=0)
        s2 += (flat * flat).sum(axis=0)
    n = steps * rows
    mean = s1 / n
    return mean, s2 / n - mean * mean
