"""Kick held-out sine trajectories off their orbit and watch the speed limit hold.

Run:  python demos/sine_perturbation.py

A model trained on clean oscillations q = sin(wt) is started from states with
large random perturbations (sigma = 0.5 on both q and p). The relativistic
kinetic term caps every step's displacement at epsilon * c, so there is no
initial velocity spike even when the momentum is far from anything seen in
training.
"""
import numpy as np

from chlu.checks import m_norm
from chlu.data import perturb_state
from chlu.experiments import run_sine
from chlu.integrator import IntegratorConfig, rollout


def main():
    exp, held = run_sine()
    m = exp.model
    print(f"trained on {len(exp.result.metrics)} batches, speed limit c = {m.governor.c:g}")
    for i in range(3):
        z0 = perturb_state(held[i][0], 0.5, seed=i)
        traj = rollout(z0, m, IntegratorConfig(exp.epsilon, 0.0, 1000))
        speed = m_norm(np.diff(traj.q, axis=0), m.governor.log_mass) / exp.epsilon
        print(f"held-out {i}: start q={z0.q[0]:+.3f} p={z0.p[0]:+.3f}; "
              f"peak speed {speed.max():.3f}, peak |q| {np.abs(traj.q).max():.3f}, "
              f"energy spread {np.ptp(traj.energies[:, 0]):.2e}")


if __name__ == "__main__":
    main()
