"""Phase-space state and the separable relativistic Hamiltonian.

H(q, p) = T(p) + V(q) + alpha * |q|^2 with the kinetic governor
T(p) = sqrt(c^2 p^T M^-1 p + m0^2 c^4) and M = diag(exp(log_mass)).

Vectors may be single states ``(d,)`` or batches ``(B, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, MasslessOriginError, NonFiniteStateError
from .potential import ParamGradient, PotentialNet


@dataclass
class PhaseState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=np.float64)
        self.p = np.array(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape or self.q.ndim not in (1, 2) or self.q.shape[-1] < 1:
            raise DimensionError(f"q and p must share shape (d,) or (B, d); got {self.q.shape}, {self.p.shape}")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise NonFiniteStateError()

    @property
    def dim(self) -> int:
        return self.q.shape[-1]

    def copy(self) -> "PhaseState":
        return PhaseState(self.q.copy(), self.p.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.q, self.p], axis=-1)

    @classmethod
    def from_flat(cls, z) -> "PhaseState":
        z = np.asarray(z, dtype=np.float64)
        d = z.shape[-1] // 2
        return cls(z[..., :d], z[..., d:])


@dataclass
class KineticGovernor:
    c: float
    m0: float
    log_mass: np.ndarray

    def __post_init__(self):
        self.log_mass = np.array(self.log_mass, dtype=np.float64).reshape(-1)
        if not self.c > 0:
            raise ValueError(f"speed limit c must be positive, got {self.c}")
        if not self.m0 >= 0:
            raise ValueError(f"rest mass m0 must be nonnegative, got {self.m0}")
        self.c = float(self.c)
        self.m0 = float(self.m0)

    @classmethod
    def identity(cls, dim: int, c: float = 1.0, m0: float = 1.0) -> "KineticGovernor":
        return cls(c, m0, np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.log_mass.size

    @property
    def mass(self) -> np.ndarray:
        """Diagonal of M."""
        return np.exp(self.log_mass)

    @property
    def inv_mass(self) -> np.ndarray:
        return np.exp(-self.log_mass)

    def copy(self) -> "KineticGovernor":
        return KineticGovernor(self.c, self.m0, self.log_mass.copy())


@dataclass
class ChluModel:
    governor: KineticGovernor
    potential: PotentialNet
    alpha: float = 0.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.governor.dim != self.potential.dim:
            raise DimensionError(
                f"governor dimension {self.governor.dim} != potential dimension {self.potential.dim}")

    @property
    def dim(self) -> int:
        return self.governor.dim

    def copy(self) -> "ChluModel":
        return ChluModel(self.governor.copy(), self.potential.copy(), self.alpha)


class Energy(NamedTuple):
    H: object
    T: object
    V: object
    C: object


def _check_finite(x, what="state"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(what)


def _check_dim(x, g):
    if x.shape[-1] != g.dim:
        raise DimensionError(f"expected dimension {g.dim}, got {x.shape[-1]}")


def kinetic_energy(p, g: KineticGovernor):
    p = np.asarray(p, dtype=np.float64)
    _check_finite(p)
    _check_dim(p, g)
    x = np.sum(p * p * g.inv_mass, axis=-1)
    return np.sqrt(g.c ** 2 * x + g.m0 ** 2 * g.c ** 4)


def kinetic_gradient(p, g: KineticGovernor):
    """Velocity dT/dp = c^2 M^-1 p / T(p); its M-norm stays below c."""
    p = np.asarray(p, dtype=np.float64)
    T = kinetic_energy(p, g)
    if g.m0 == 0.0 and np.any(np.all(p == 0.0, axis=-1)):
        raise MasslessOriginError()
    return g.c ** 2 * (p * g.inv_mass) / np.expand_dims(T, -1)


def kinetic_jvp_momentum(p, g: KineticGovernor, a):
    """(d velocity / d p) applied to a; the Jacobian is symmetric."""
    p = np.asarray(p, dtype=np.float64)
    T = np.expand_dims(kinetic_energy(p, g), -1)
    w = p * g.inv_mass
    wa = np.sum(w * a, axis=-1, keepdims=True)
    c2 = g.c ** 2
    return c2 / T * g.inv_mass * a - c2 * c2 / T ** 3 * w * wa


def kinetic_vjp_log_mass(p, g: KineticGovernor, a):
    """a^T (d velocity / d log_mass), summed over any batch axis."""
    p = np.asarray(p, dtype=np.float64)
    T = np.expand_dims(kinetic_energy(p, g), -1)
    w = p * g.inv_mass
    wa = np.sum(w * a, axis=-1, keepdims=True)
    c2 = g.c ** 2
    out = -c2 / T * w * a + c2 * c2 / (2.0 * T ** 3) * p * w * wa
    return out.reshape(-1, g.dim).sum(axis=0)


def kinetic_grad_log_mass(p, g: KineticGovernor, cotangent=None):
    """Gradient of sum_b cotangent[b] * T(p[b]) with respect to log_mass."""
    p = np.asarray(p, dtype=np.float64)
    T = np.expand_dims(kinetic_energy(p, g), -1)
    out = -(g.c ** 2) * p * p * g.inv_mass / (2.0 * T)
    if cotangent is not None:
        out = out * np.expand_dims(np.asarray(cotangent, dtype=np.float64), -1)
    return out.reshape(-1, g.dim).sum(axis=0)


def confinement_energy(q, alpha: float):
    q = np.asarray(q, dtype=np.float64)
    return alpha * np.sum(q * q, axis=-1)


def confinement_gradient(q, alpha: float):
    return 2.0 * alpha * np.asarray(q, dtype=np.float64)


def potential_gradient(q, m: ChluModel):
    """Gradient of V + alpha |q|^2; the negative of :func:`force`."""
    q = np.asarray(q, dtype=np.float64)
    return m.potential.grad(q) + confinement_gradient(q, m.alpha)


def force(q, m: ChluModel):
    q = np.asarray(q, dtype=np.float64)
    _check_finite(q)
    _check_dim(q, m.governor)
    return -potential_gradient(q, m)


def total_energy(z: PhaseState, m: ChluModel) -> Energy:
    if z.dim != m.dim:
        raise DimensionError(f"state dimension {z.dim} != model dimension {m.dim}")
    T = kinetic_energy(z.p, m.governor)
    V = m.potential.value(z.q)
    C = confinement_energy(z.q, m.alpha)
    return Energy(T + V + C, T, V, C)


def hamiltonian_grad_params(m: ChluModel, z: PhaseState, cotangent=None) -> ParamGradient:
    """Gradient of H (summed over a batch, optionally weighted) w.r.t. potential weights and log_mass."""
    g = m.potential.grad_params(z.q, cotangent)
    g.log_mass = kinetic_grad_log_mass(z.p, m.governor, cotangent)
    return g
