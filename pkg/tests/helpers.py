"""Shared builders for the test modules."""
import numpy as np

from chlu.hamiltonian import ChluModel, KineticGovernor
from chlu.potential import PotentialNet, init_potential


def linear_net(w, b):
    """V(q) = w . q + b as a network with no hidden layer."""
    return PotentialNet([np.array([w], dtype=float)], [np.array([b], dtype=float)])


def flat_model(dim=2, c=1.0, m0=1.0, alpha=0.0):
    """Freshly initialized network, so V is identically zero."""
    return ChluModel(KineticGovernor.identity(dim, c, m0), init_potential([dim, 4, 1], 0), alpha)


def fd_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)
