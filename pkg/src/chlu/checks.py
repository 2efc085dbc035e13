"""Seeded invariant suites: gradients, symplecticity, reversibility, velocity bound, Boltzmann statistics.

Each suite returns a list of :class:`CheckResult`; ``str(result)`` is the
one-line machine-readable summary printed by ``chlu check``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import (
    ChluModel,
    KineticGovernor,
    PhaseState,
    hamiltonian_grad_params,
    kinetic_energy,
    kinetic_gradient,
    total_energy,
)
from .integrator import IntegratorConfig, LangevinConfig, Trajectory, langevin_moments, rollout, verlet_step
from .potential import PotentialNet, QuadraticPotential, init_potential
from .seeding import named_stream
from .training import bptt_grad, wake_loss

GRAD_Q_TOL = 1e-6
GRAD_P_TOL = 1e-6
GRAD_THETA_TOL = 1e-5
BPTT_TOL = 1e-4
BPTT_DEEP_TOL = 1e-3
REVERSIBILITY_TOL = 1e-10
DET_TOL = 1e-6
DRIFT_TOL = 1e-3
SATURATION = 0.999
BOLTZMANN_TOL = 0.05


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    count: int = 1
    detail: str = ""

    def __str__(self):
        status = "pass" if self.passed else "fail"
        line = f"check={self.name} status={status} value={self.value:.12g} threshold={self.threshold:.6g} n={self.count}"
        return line + (f" detail={self.detail}" if self.detail else "")


def _rel_err(a, b) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def random_potential(layer_dims, rng: np.random.Generator) -> PotentialNet:
    """A network with every layer (output included) drawn at random."""
    net = init_potential(layer_dims, int(rng.integers(2 ** 31)))
    fan_in = layer_dims[-2]
    net.weights[-1] = rng.uniform(-1, 1, size=net.weights[-1].shape) / np.sqrt(fan_in)
    net.biases[-1] = rng.uniform(-1, 1, size=1)
    return net


def random_model(rng: np.random.Generator, dim: int, hidden=(8,), c=None, m0=None, alpha=None) -> ChluModel:
    c = rng.uniform(0.5, 3.0) if c is None else c
    m0 = rng.uniform(0.5, 2.0) if m0 is None else m0
    alpha = rng.uniform(0.0, 0.2) if alpha is None else alpha
    gov = KineticGovernor(c, m0, rng.uniform(-1.0, 1.0, size=dim))
    return ChluModel(gov, random_potential([dim, *hidden, 1], rng), alpha)


# ---------------------------------------------------------------- gradients

def _fd_vector(f, x, h):
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _param_arrays(m: ChluModel):
    return list(m.potential.weights) + list(m.potential.biases) + [m.governor.log_mass]


def _fd_params(m: ChluModel, loss, h: float):
    """Central differences of ``loss(m)`` over every weight, bias and log_mass entry."""
    out = []
    for arr in _param_arrays(m):
        g = np.zeros_like(arr)
        for i in range(arr.size):
            old = arr.flat[i]
            arr.flat[i] = old + h
            up = loss(m)
            arr.flat[i] = old - h
            down = loss(m)
            arr.flat[i] = old
            g.flat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def _grad_arrays(g):
    return list(g.weights) + list(g.biases) + [g.log_mass]


def check_grad_q(seed: int = 0, n: int = 100) -> CheckResult:
    rng = named_stream(seed, "check-grad-q")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 5))
        hidden = [int(rng.integers(3, 9)) for _ in range(int(rng.integers(1, 3)))]
        net = random_potential([d, *hidden, 1], rng)
        q = rng.normal(size=d)
        fd = _fd_vector(net.value, q, 1e-5)
        worst = max(worst, _rel_err(net.grad(q), fd))
    return CheckResult("grad_q_V", worst < GRAD_Q_TOL, worst, GRAD_Q_TOL, n)


def check_grad_p(seed: int = 0, n: int = 100) -> CheckResult:
    rng = named_stream(seed, "check-grad-p")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 5))
        g = KineticGovernor(rng.uniform(0.5, 3.0), rng.uniform(0.1, 2.0), rng.uniform(-1, 1, size=d))
        p = rng.normal(size=d) * 10 ** rng.uniform(-1, 1)
        fd = _fd_vector(lambda x: kinetic_energy(x, g), p, 1e-6 * max(1.0, np.linalg.norm(p)))
        worst = max(worst, _rel_err(kinetic_gradient(p, g), fd))
    return CheckResult("grad_p_T", worst < GRAD_P_TOL, worst, GRAD_P_TOL, n)


def check_grad_theta(seed: int = 0, n: int = 100) -> CheckResult:
    rng = named_stream(seed, "check-grad-theta")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 4))
        m = random_model(rng, d, hidden=[int(rng.integers(2, 6))])
        z = PhaseState(rng.normal(size=d), rng.normal(size=d))
        g = hamiltonian_grad_params(m, z)
        fd = _fd_params(m, lambda mm: float(total_energy(z, mm).H), 1e-6)
        worst = max(worst, _rel_err(np.concatenate([a.ravel() for a in _grad_arrays(g)]),
                                    np.concatenate([a.ravel() for a in fd])))
    return CheckResult("grad_theta_H", worst < GRAD_THETA_TOL, worst, GRAD_THETA_TOL, n)


def check_bptt(seed: int = 0, n: int = 100) -> list[CheckResult]:
    """Full-parameter finite differences of the rolled-out MSE, d=2, K<=10.

    One-hidden-layer instances are held to 1e-4; deeper ones, where the
    finite-difference Hessian-vector product dominates, to 1e-3.
    """
    rng = named_stream(seed, "check-bptt")
    worst = {1: 0.0, 2: 0.0}
    counts = {1: 0, 2: 0}
    for i in range(n):
        depth = 1 if i % 4 else 2
        m = random_model(rng, 2, hidden=[4] * depth)
        K = int(rng.integers(1, 11))
        eps = rng.uniform(0.01, 0.1)
        cfg = IntegratorConfig(eps, float(rng.choice([0.0, 0.05])), K)
        z0 = PhaseState(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
        target = Trajectory.from_arrays(rng.normal(size=(K + 1, 2, 2)), rng.normal(size=(K + 1, 2, 2)), eps)

        def loss(mm):
            return wake_loss(rollout(z0, mm, cfg, record_energy=False), target)

        g = bptt_grad(z0, target, m, cfg)
        fd = _fd_params(m, loss, 1e-6)
        err = _rel_err(np.concatenate([a.ravel() for a in _grad_arrays(g)]),
                       np.concatenate([a.ravel() for a in fd]))
        worst[depth] = max(worst[depth], err)
        counts[depth] += 1
    return [CheckResult("bptt_1_hidden", worst[1] < BPTT_TOL, worst[1], BPTT_TOL, counts[1]),
            CheckResult("bptt_2_hidden", worst[2] < BPTT_DEEP_TOL, worst[2], BPTT_DEEP_TOL, counts[2])]


def suite_gradients(seed: int = 0) -> list[CheckResult]:
    return [check_grad_q(seed), check_grad_p(seed), check_grad_theta(seed), *check_bptt(seed)]


# ---------------------------------------------------------------- symplectic structure

def check_reversibility(seed: int = 0, n: int = 100) -> CheckResult:
    """Step, flip momentum, step, flip back: the original state returns."""
    rng = named_stream(seed, "check-reversibility")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 5))
        m = random_model(rng, d, hidden=[8])
        z = PhaseState(rng.normal(size=d), rng.normal(size=d))
        eps = rng.uniform(1e-4, 0.01)
        a = verlet_step(z, m, eps)
        b = verlet_step(PhaseState(a.q, -a.p), m, eps)
        back = np.concatenate([b.q, -b.p])
        err = np.linalg.norm(back - z.flat()) / max(np.linalg.norm(z.flat()), 1.0)
        worst = max(worst, err)
    return CheckResult("reversibility", worst < REVERSIBILITY_TOL, worst, REVERSIBILITY_TOL, n)


def step_jacobian(z: PhaseState, m: ChluModel, eps: float, gamma: float, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of one Verlet step in phase space."""
    x = z.flat()

    def f(y):
        return verlet_step(PhaseState.from_flat(y), m, eps, gamma).flat()

    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(cols).T


def check_jacobian(seed: int = 0, gamma: float = 0.0, n: int = 100) -> CheckResult:
    rng = named_stream(seed, f"check-jacobian-{gamma!r}")
    worst = 0.0
    for _ in range(n):
        m = random_model(rng, 1, hidden=[8])
        z = PhaseState(rng.normal(size=1), rng.normal(size=1))
        J = step_jacobian(z, m, rng.uniform(0.001, 0.1), gamma)
        worst = max(worst, abs(np.linalg.det(J) - (1.0 - gamma)))
    return CheckResult(f"det_jacobian_gamma_{gamma:g}", worst < DET_TOL, worst, DET_TOL, n)


def harmonic_model(dim: int = 1, c: float = 10.0, m0: float = 1.0) -> ChluModel:
    """V = |q|^2 / 2 with m0 c^2 far above the kinetic excess (Newtonian regime)."""
    return ChluModel(KineticGovernor.identity(dim, c, m0), QuadraticPotential(1.0, dim), 0.0)


def relative_drift(energies: np.ndarray, rest_energy: float) -> float:
    """max |H - H0| over the initial energy above rest, |H0 - m0 c^2|."""
    H = energies[:, 0]
    return float(np.max(np.abs(H - H[0])) / abs(H[0] - rest_energy))


def check_energy_drift(steps: int = 100_000, eps: float = 0.01) -> CheckResult:
    m = harmonic_model()
    traj = rollout(PhaseState([1.0], [0.0]), m, IntegratorConfig(eps, 0.0, steps))
    drift = relative_drift(traj.energies, m.governor.m0 * m.governor.c ** 2)
    return CheckResult("harmonic_energy_drift", drift < DRIFT_TOL, drift, DRIFT_TOL, steps)


def suite_symplectic(seed: int = 0) -> list[CheckResult]:
    return [check_jacobian(seed, 0.0), check_jacobian(seed, 0.1), check_energy_drift()]


def suite_reversibility(seed: int = 0) -> list[CheckResult]:
    return [check_reversibility(seed)]


# ---------------------------------------------------------------- velocity bound

def m_norm(v, log_mass) -> np.ndarray:
    return np.sqrt(np.sum(np.exp(log_mass) * v * v, axis=-1))


def check_velocity_bound(seed: int = 0, n: int = 10_000) -> CheckResult:
    """sqrt(v^T M v) < c strictly for momenta with norms log-uniform in [1e-6, 1e6]."""
    rng = named_stream(seed, "check-velocity-bound")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 9))
        g = KineticGovernor(rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0), rng.uniform(-1, 1, size=d))
        u = rng.normal(size=d)
        p = u / np.linalg.norm(u) * 10 ** rng.uniform(-6, 6)
        worst = max(worst, float(m_norm(kinetic_gradient(p, g), g.log_mass)) / g.c)
    return CheckResult("velocity_bound", worst < 1.0, worst, 1.0, n, "max |v|_M / c")


def check_saturation(seed: int = 0, n: int = 1000) -> CheckResult:
    rng = named_stream(seed, "check-saturation")
    worst = 1.0
    for _ in range(n):
        d = int(rng.integers(1, 9))
        g = KineticGovernor.identity(d, rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0))
        lo = np.log10(1e4 * g.m0 * g.c)
        u = rng.normal(size=d)
        p = u / np.linalg.norm(u) * 10 ** rng.uniform(lo, max(lo, 6.0))
        worst = min(worst, float(m_norm(kinetic_gradient(p, g), g.log_mass)) / g.c)
    return CheckResult("velocity_saturation", worst >= SATURATION, worst, SATURATION, n, "min |v|_M / c")


def check_displacement(seed: int = 0, n: int = 20, steps: int = 200) -> CheckResult:
    """Per-step M-weighted displacement stays within eps * c along rollouts.

    A relative slack of 1e-9 absorbs rounding in q_{t+1} - q_t.
    """
    rng = named_stream(seed, "check-displacement")
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 5))
        m = random_model(rng, d, hidden=[8])
        eps = rng.uniform(0.001, 0.1)
        z = PhaseState(rng.normal(size=d), rng.normal(size=d) * 10 ** rng.uniform(0, 4))
        traj = rollout(z, m, IntegratorConfig(eps, 0.0, steps), record_energy=False)
        disp = m_norm(np.diff(traj.q, axis=0), m.governor.log_mass)
        worst = max(worst, float(disp.max() / (eps * m.governor.c)))
    return CheckResult("displacement_bound", worst <= 1.0 + 1e-9, worst, 1.0, n, "max |dq|_M / (eps c)")


def suite_velocity(seed: int = 0) -> list[CheckResult]:
    return [check_velocity_bound(seed), check_saturation(seed), check_displacement(seed)]


# ---------------------------------------------------------------- Boltzmann statistics

def check_boltzmann(seed: int = 0, steps: int = 1_000_000, burn_in: int = 100_000, chains: int = 16,
                    temperature: float = 0.5, gamma: float = 0.5, eps: float = 0.01) -> CheckResult:
    """Langevin on V = q^2/2 samples Var(q) = kB T in the Newtonian regime.

    The momentum friction is -gamma p, which balances the noise exactly only
    when the kinetic energy is effectively p^2 / 2 m0; the fixture therefore
    uses c = 10 so that kB T is small against m0 c^2.
    """
    m = harmonic_model(1)
    lcfg = LangevinConfig(temperature, gamma, 1.0, seed)
    z0 = PhaseState(np.zeros((chains, 1)), np.zeros((chains, 1)))
    _, var = langevin_moments(z0, m, eps, lcfg, steps, burn_in)
    rel = abs(float(var[0]) - temperature) / temperature
    return CheckResult("boltzmann_variance", rel < BOLTZMANN_TOL, rel, BOLTZMANN_TOL, steps,
                       f"var={float(var[0]):.6g}")


def suite_boltzmann(seed: int = 0) -> list[CheckResult]:
    return [check_boltzmann(seed)]


SUITES = {
    "gradients": suite_gradients,
    "symplectic": suite_symplectic,
    "reversibility": suite_reversibility,
    "velocity-bound": suite_velocity,
    "boltzmann": suite_boltzmann,
}


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "all":
        return [r for fn in SUITES.values() for r in fn(seed)]
    if name not in SUITES:
        raise KeyError(f"unknown check suite {name!r}")
    return SUITES[name](seed)


def verify_model(m: ChluModel) -> list[CheckResult]:
    """Invariants a loaded model must satisfy (used by ``--verify``)."""
    rng = named_stream(0, "verify-model")
    out = []
    finite = all(np.all(np.isfinite(a)) for a in _param_arrays(m))
    out.append(CheckResult("finite_parameters", finite, float(finite), 1.0))
    worst = 0.0
    for _ in range(100):
        p = rng.normal(size=m.dim) * 10 ** rng.uniform(-3, 6)
        worst = max(worst, float(m_norm(kinetic_gradient(p, m.governor), m.governor.log_mass)) / m.governor.c)
    out.append(CheckResult("velocity_bound", worst < 1.0, worst, 1.0, 100))
    z = PhaseState(rng.normal(size=m.dim), rng.normal(size=m.dim))
    e = total_energy(z, m)
    gap = abs(e.H - (e.T + e.V + e.C))
    out.append(CheckResult("energy_sum", gap <= 1e-12 * max(1.0, abs(e.H)), gap, 1e-12))
    return out
