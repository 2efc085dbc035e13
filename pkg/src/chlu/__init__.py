"""Relativistic Hamiltonian learning unit: a learned potential driven by symplectic dynamics.

The state z = (q, p) evolves under H = T(p) + V(q) + alpha |q|^2 where the
kinetic term caps every velocity at the speed limit c. Models are trained
by wake-sleep contrastive updates and sampled with annealed Langevin
dynamics.
"""
from .errors import (
    CheckpointError,
    ChluError,
    DimensionError,
    GradientDiverged,
    IdxFormatError,
    IntegrationDiverged,
    MasslessOriginError,
    NonFiniteStateError,
)
from .hamiltonian import (
    ChluModel,
    Energy,
    KineticGovernor,
    PhaseState,
    confinement_energy,
    confinement_gradient,
    force,
    kinetic_energy,
    kinetic_gradient,
    total_energy,
)
from .integrator import (
    AnnealSchedule,
    IntegratorConfig,
    LangevinConfig,
    Trajectory,
    anneal_value,
    langevin_run,
    langevin_step,
    rollout,
    verlet_step,
)
from .potential import (
    ParamGradient,
    PotentialNet,
    QuadraticPotential,
    hessian_vector_product,
    init_potential,
    potential_grad_input,
    potential_grad_params,
    potential_value,
)
from .training import (
    ReplayBuffer,
    TrainConfig,
    TrainMetrics,
    bptt_grad,
    contrastive_grad,
    fit,
    lyapunov_estimate,
    replay_add,
    replay_sample,
    sgd_step,
    train_step,
    wake_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
