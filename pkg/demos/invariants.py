"""Tour of the structural guarantees, each measured directly.

Run:  python demos/invariants.py

1. The velocity dT/dp never reaches c, however large the momentum.
2. One Verlet step preserves phase-space volume; friction shrinks it by (1 - gamma).
3. A long harmonic rollout keeps its energy within a narrow band.
4. Langevin dynamics on a quadratic well samples q with variance kB * T.
"""
import numpy as np

from chlu.checks import check_boltzmann, harmonic_model, step_jacobian
from chlu.hamiltonian import KineticGovernor, PhaseState, kinetic_gradient
from chlu.integrator import IntegratorConfig, rollout


def main():
    g = KineticGovernor.identity(1, c=1.0, m0=1.0)
    for p in (0.1, 1.0, 10.0, 1e3, 1e6):
        v = kinetic_gradient([p], g)[0]
        print(f"p = {p:>9g}: velocity {v:.9f}, c - v = {1.0 - v:.3e}")

    m = harmonic_model(1)
    z = PhaseState([0.3], [0.2])
    for gamma in (0.0, 0.1):
        det = np.linalg.det(step_jacobian(z, m, 0.01, gamma))
        print(f"gamma = {gamma}: det J = {det:.12f}, expected {1 - gamma}")

    traj = rollout(PhaseState([1.0], [0.0]), m, IntegratorConfig(0.01, 0.0, 100_000))
    H = traj.energies[:, 0]
    rest = m.governor.m0 * m.governor.c ** 2
    print(f"harmonic, 1e5 steps: energy above rest {H[0] - rest:.6f}, "
          f"worst relative deviation {np.max(np.abs(H - H[0])) / (H[0] - rest):.2e}")

    print("Langevin sampling (about a minute):")
    print(check_boltzmann())


if __name__ == "__main__":
    main()
