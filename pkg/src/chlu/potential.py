"""Learnable potential energy: a tanh MLP with a scalar linear output.

All functions accept a single position ``q`` of shape ``(d,)`` or a batch of
shape ``(B, d)``; values come back as a scalar or shape ``(B,)`` and
gradients keep the shape of ``q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class PotentialNet:
    """Feed-forward network V(q) with tanh hidden layers.

    ``weights[l]`` has shape ``(layer_dims[l+1], layer_dims[l])``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("weights and biases must be non-empty lists of equal length")
        dims = self.layer_dims
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise DimensionError(f"layer {l} has incompatible shapes {W.shape}, {b.shape}")
        if dims[-1] != 1:
            raise DimensionError("output dimension must be 1")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "PotentialNet":
        return PotentialNet([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def value(self, q):
        return potential_value(self, q)

    def grad(self, q):
        return potential_grad_input(self, q)

    def hvp(self, q, v):
        return hessian_vector_product(self, q, v)

    def grad_params(self, q, cotangent=None):
        return potential_grad_params(self, q, cotangent)

    def mixed_grad_params(self, q, v):
        return mixed_grad_params(self, q, v)

    def hvp_and_mixed(self, q, v):
        return hvp_and_mixed(self, q, v)


@dataclass
class ParamGradient:
    """Gradient (or any tangent) congruent with a model's learnable parameters.

    ``log_mass`` is ``None`` when only the potential is differentiated.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_mass: np.ndarray | None = field(default=None)

    @classmethod
    def zeros_like(cls, net: PotentialNet, with_mass: bool = True) -> "ParamGradient":
        return cls(
            [np.zeros_like(W) for W in net.weights],
            [np.zeros_like(b) for b in net.biases],
            np.zeros(net.dim) if with_mass else None,
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        if self.log_mass is not None:
            out.append(self.log_mass)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def _combine(self, other, fn):
        lm = None
        if self.log_mass is not None or other.log_mass is not None:
            a = self.log_mass if self.log_mass is not None else np.zeros_like(other.log_mass)
            b = other.log_mass if other.log_mass is not None else np.zeros_like(self.log_mass)
            lm = fn(a, b)
        return ParamGradient(
            [fn(a, b) for a, b in zip(self.weights, other.weights)],
            [fn(a, b) for a, b in zip(self.biases, other.biases)],
            lm,
        )

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return self._combine(other, np.add)

    def __sub__(self, other: "ParamGradient") -> "ParamGradient":
        return self._combine(other, np.subtract)

    def __mul__(self, s: float) -> "ParamGradient":
        return ParamGradient(
            [s * W for W in self.weights],
            [s * b for b in self.biases],
            None if self.log_mass is None else s * self.log_mass,
        )

    __rmul__ = __mul__


def init_potential(layer_dims, seed: int) -> PotentialNet:
    """Random hidden layers (U(-1/sqrt(fan_in), 1/sqrt(fan_in))) and a zero output layer.

    The zero output layer makes V identically zero at initialization.
    """
    dims = [int(n) for n in layer_dims]
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise DimensionError(f"invalid layer dims {dims}")
    if dims[-1] != 1:
        raise DimensionError("output dimension must be 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        if l == len(dims) - 2:
            weights.append(np.zeros((fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
    return PotentialNet(weights, biases)


def _as_batch(net, q):
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    Q = q[None, :] if single else q
    if Q.ndim != 2 or Q.shape[1] != net.dim:
        raise DimensionError(f"expected position of dimension {net.dim}, got shape {q.shape}")
    return Q, single


def _forward(net, Q):
    """Return the list of layer activations; the last entry is the (B, 1) output."""
    acts = [Q]
    a = Q
    n = len(net.weights)
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        a = z if l == n - 1 else np.tanh(z)
        acts.append(a)
    return acts


def _backward(net, acts, upstream):
    """Reverse pass from dV = upstream (B,). Returns (dQ, per-layer dz list)."""
    n = len(net.weights)
    delta = upstream[:, None]
    dzs = [None] * n
    for l in range(n - 1, -1, -1):
        dzs[l] = delta
        da = delta @ net.weights[l]
        if l > 0:
            delta = da * (1.0 - acts[l] ** 2)
        else:
            return da, dzs


def potential_value(net: PotentialNet, q):
    Q, single = _as_batch(net, q)
    V = _forward(net, Q)[-1][:, 0]
    return float(V[0]) if single else V


def potential_grad_input(net: PotentialNet, q):
    """Exact gradient of V with respect to q."""
    Q, single = _as_batch(net, q)
    acts = _forward(net, Q)
    dQ, _ = _backward(net, acts, np.ones(Q.shape[0]))
    return dQ[0] if single else dQ


def potential_grad_params(net: PotentialNet, q, cotangent=None) -> ParamGradient:
    """Exact gradient of ``sum_b cotangent[b] * V(q[b])`` with respect to weights and biases.

    With a single ``q`` and no cotangent this is just the gradient of V(q).
    """
    Q, _ = _as_batch(net, q)
    c = np.ones(Q.shape[0]) if cotangent is None else np.broadcast_to(
        np.asarray(cotangent, dtype=np.float64), (Q.shape[0],))
    acts = _forward(net, Q)
    _, dzs = _backward(net, acts, c)
    gW = [dz.T @ a for dz, a in zip(dzs, acts[:-1])]
    gb = [dz.sum(axis=0) for dz in dzs]
    return ParamGradient(gW, gb)


def _fd_step(Q, Vv):
    qn = np.linalg.norm(Q, axis=1)
    vn = np.linalg.norm(Vv, axis=1)
    return 1e-4 * np.maximum(1.0, qn) / np.maximum(1.0, vn)


def hessian_vector_product(net: PotentialNet, q, v):
    """Hessian of V at q applied to v, by symmetric differencing of the exact gradient.

    Step h = 1e-4 * max(1, |q|) / max(1, |v|), per batch row.
    """
    Q, single = _as_batch(net, q)
    Vv, _ = _as_batch(net, v)
    if Vv.shape != Q.shape:
        raise DimensionError("q and v shapes differ")
    h = _fd_step(Q, Vv)[:, None]
    gp = potential_grad_input(net, Q + h * Vv)
    gm = potential_grad_input(net, Q - h * Vv)
    out = (gp - gm) / (2.0 * h)
    return out[0] if single else out


def mixed_grad_params(net: PotentialNet, q, v) -> ParamGradient:
    """Parameter gradient of ``sum_b v[b] . grad_q V(q[b])``.

    Computed as the symmetric difference of parameter gradients along v,
    with the same step rule as :func:`hessian_vector_product`.
    """
    Q, _ = _as_batch(net, q)
    Vv, _ = _as_batch(net, v)
    h = _fd_step(Q, Vv)
    hc = h[:, None]
    inv = _fd_weights(h, Vv)
    gp = potential_grad_params(net, Q + hc * Vv, inv)
    gm = potential_grad_params(net, Q - hc * Vv, inv)
    return gp - gm


def _fd_weights(h, Vv):
    # rows with a zero direction contribute exactly nothing instead of cancelling round-off
    return np.where(np.any(Vv != 0.0, axis=1), 1.0 / (2.0 * h), 0.0)


def hvp_and_mixed(net: PotentialNet, q, v):
    """Both :func:`hessian_vector_product` and :func:`mixed_grad_params` from one pair of passes."""
    Q, single = _as_batch(net, q)
    Vv, _ = _as_batch(net, v)
    h = _fd_step(Q, Vv)
    inv = _fd_weights(h, Vv)
    both = np.concatenate([Q + h[:, None] * Vv, Q - h[:, None] * Vv])
    acts = _forward(net, both)
    B = Q.shape[0]
    gin, _ = _backward(net, acts, np.ones(2 * B))
    hv = (gin[:B] - gin[B:]) * inv[:, None]
    _, dzs = _backward(net, acts, np.concatenate([inv, -inv]))
    mixed = ParamGradient([dz.T @ a for dz, a in zip(dzs, acts[:-1])], [dz.sum(axis=0) for dz in dzs])
    return (hv[0] if single else hv), mixed


class QuadraticPotential:
    """Analytic V(q) = 0.5 * sum_i k_i q_i^2 with no learnable parameters.

    Negative stiffness gives an inverted (unstable) well. Used as a test
    fixture and for sanity runs of the integrators.
    """

    def __init__(self, stiffness, dim: int | None = None):
        k = np.atleast_1d(np.asarray(stiffness, dtype=np.float64))
        if dim is not None and k.size == 1:
            k = np.full(dim, k[0])
        self.stiffness = k
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []

    @property
    def dim(self) -> int:
        return self.stiffness.size

    @property
    def layer_dims(self):
        return None

    def copy(self):
        return QuadraticPotential(self.stiffness.copy())

    def value(self, q):
        q = np.asarray(q, dtype=np.float64)
        return 0.5 * np.sum(self.stiffness * q * q, axis=-1)

    def grad(self, q):
        return self.stiffness * np.asarray(q, dtype=np.float64)

    def hvp(self, q, v):
        return self.stiffness * np.asarray(v, dtype=np.float64)

    def grad_params(self, q, cotangent=None):
        return ParamGradient([], [])

    def mixed_grad_params(self, q, v):
        return ParamGradient([], [])

    def hvp_and_mixed(self, q, v):
        return self.hvp(q, v), ParamGradient([], [])
