import numpy as np
import pytest

from chlu.checks import (
    check_energy_drift,
    check_jacobian,
    check_reversibility,
    harmonic_model,
    m_norm,
    random_model,
    relative_drift,
)
from chlu.errors import IntegrationDiverged
from chlu.hamiltonian import ChluModel, KineticGovernor, PhaseState, kinetic_gradient, potential_gradient
from chlu.integrator import (
    AnnealSchedule,
    IntegratorConfig,
    LangevinConfig,
    Trajectory,
    anneal_value,
    langevin_moments,
    langevin_run,
    langevin_step,
    rollout,
    rollout_with_intermediates,
    verlet_step,
)
from chlu.potential import QuadraticPotential

from helpers import flat_model


# ---------------------------------------------------------------- configs and schedules

def test_integrator_config_validates():
    with pytest.raises(ValueError):
        IntegratorConfig(0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, gamma=1.5)


def test_anneal_constant():
    assert anneal_value(AnnealSchedule.constant(1.0), 999) == 1.0


def test_anneal_linear():
    assert anneal_value(AnnealSchedule("linear", 1.0, 0.0, 100), 50) == 0.5


def test_anneal_geometric():
    assert anneal_value(AnnealSchedule("geometric", 1.0, 0.01, 1000), 500) == pytest.approx(0.1, rel=1e-14)


def test_anneal_holds_end_value_past_total():
    s = AnnealSchedule("linear", 1.0, 0.2, 10)
    assert anneal_value(s, 10) == anneal_value(s, 500) == pytest.approx(0.2)


def test_anneal_geometric_rejects_nonpositive():
    with pytest.raises(ValueError):
        AnnealSchedule("geometric", 1.0, 0.0, 10)


def test_anneal_parse_round_trip():
    s = AnnealSchedule.parse("geometric:1.0:0.01", 1000)
    assert (s.kind, s.start_value, s.end_value, s.total_steps) == ("geometric", 1.0, 0.01, 1000)
    assert AnnealSchedule.parse(str(s), 1000) == s


def test_langevin_config_reads_schedules():
    lc = LangevinConfig(1.0, 0.01, 1.0, 0, AnnealSchedule("geometric", 1.0, 0.01, 100),
                        AnnealSchedule("linear", 0.01, 0.2, 100))
    gamma, temp = lc.at(100)
    assert gamma == pytest.approx(0.2) and temp == pytest.approx(0.01)


# ---------------------------------------------------------------- verlet

def test_free_drift(rng):
    m = flat_model(2, c=2.0)
    z = PhaseState(rng.normal(size=2), rng.normal(size=2))
    out = verlet_step(z, m, 0.1)
    assert np.array_equal(out.p, z.p)
    assert np.allclose(out.q, z.q + 0.1 * kinetic_gradient(z.p, m.governor), atol=1e-15)


def test_full_dissipation(small_model, rng):
    z = PhaseState(rng.normal(size=2), rng.normal(size=2))
    assert np.all(verlet_step(z, small_model, 0.05, gamma=1.0).p == 0.0)


def test_update_equations(small_model, rng):
    z = PhaseState(rng.normal(size=2), rng.normal(size=2))
    eps, gamma = 0.03, 0.2
    m = small_model
    ph = z.p - eps / 2 * potential_gradient(z.q, m)
    q1 = z.q + eps * kinetic_gradient(ph, m.governor)
    p1 = (1 - gamma) * (ph - eps / 2 * potential_gradient(q1, m))
    out = verlet_step(z, m, eps, gamma)
    assert np.allclose(out.q, q1, rtol=0, atol=1e-15)
    assert np.allclose(out.p, p1, rtol=0, atol=1e-15)


def test_harmonic_step_matches_substepped_reference(harmonic):
    z = PhaseState([0.7], [0.3])
    one = verlet_step(z, harmonic, 0.001)
    ref = z
    for _ in range(10):
        ref = verlet_step(ref, harmonic, 0.0001)
    assert np.allclose(one.flat(), ref.flat(), rtol=0, atol=1e-6)


def test_rollout_zero_steps(small_model):
    z = PhaseState([0.1, 0.2], [0.3, 0.4])
    traj = rollout(z, small_model, IntegratorConfig(0.01, 0.0, 0))
    assert len(traj) == 1
    assert np.array_equal(traj.q[0], z.q)


def test_rollout_flat_potential_keeps_momentum(rng):
    z = PhaseState(rng.normal(size=2), rng.normal(size=2))
    traj = rollout(z, flat_model(), IntegratorConfig(0.05, 0.0, 50))
    assert np.all(traj.p == z.p)


def test_rollout_records_energy_components(small_model):
    traj = rollout(PhaseState([0.1, 0.2], [0.3, 0.4]), small_model, IntegratorConfig(0.01, 0.0, 5))
    assert traj.energies.shape == (6, 4)
    assert np.allclose(traj.energies[:, 0], traj.energies[:, 1:].sum(axis=1), rtol=1e-14)
    assert np.allclose(traj.times, 0.01 * np.arange(6))


def test_rollout_record_every_keeps_final(small_model):
    traj = rollout(PhaseState([0.1, 0.2], [0.3, 0.4]), small_model, IntegratorConfig(0.01, 0.0, 10), record_every=4)
    assert list(traj.steps) == [0, 4, 8, 10]


def test_rollout_batched_matches_single(small_model, rng):
    Z = PhaseState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    cfg = IntegratorConfig(0.02, 0.0, 20)
    batch = rollout(Z, small_model, cfg)
    for b in range(3):
        single = rollout(PhaseState(Z.q[b], Z.p[b]), small_model, cfg)
        assert np.allclose(batch.q[:, b], single.q, rtol=0, atol=1e-14)


def test_rollout_is_deterministic(small_model):
    z = PhaseState([0.1, 0.2], [0.3, 0.4])
    a = rollout(z, small_model, IntegratorConfig(0.01, 0.0, 100))
    b = rollout(z, small_model, IntegratorConfig(0.01, 0.0, 100))
    assert np.array_equal(a.q, b.q) and np.array_equal(a.energies, b.energies)


def test_intermediates_agree_with_rollout(small_model):
    z = PhaseState([0.1, 0.2], [0.3, 0.4])
    qs, ps, phs = rollout_with_intermediates(z, small_model, 0.01, 7)
    traj = rollout(z, small_model, IntegratorConfig(0.01, 0.0, 7))
    assert np.array_equal(qs, traj.q) and np.array_equal(ps, traj.p) and phs.shape == (7, 2)


def test_divergence_reports_step():
    m = ChluModel(KineticGovernor.identity(1, 1e9, 1.0), QuadraticPotential(-1e8, 1), 0.0)
    with pytest.raises(IntegrationDiverged, match="integration diverged at step") as info:
        rollout(PhaseState([1.0], [0.0]), m, IntegratorConfig(1.0, 0.0, 100))
    assert info.value.step is not None and info.value.step > 0


def test_trajectory_length_check():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((2, 4)), np.arange(2), 0.1)


# ---------------------------------------------------------------- structure-preservation properties

def test_reversibility():
    assert check_reversibility(seed=3).passed


def test_unit_jacobian_without_friction():
    assert check_jacobian(seed=3, gamma=0.0, n=20).passed


def test_contracting_jacobian_with_friction():
    assert check_jacobian(seed=3, gamma=0.1, n=20).passed


def test_energy_drift_short_run():
    assert check_energy_drift(steps=10_000).value < 1e-3


def test_relative_drift_definition():
    e = np.array([[3.0, 0, 0, 0], [3.5, 0, 0, 0], [2.0, 0, 0, 0]])
    assert relative_drift(e, rest_energy=1.0) == 0.5


def test_monotone_relaxation(harmonic):
    traj = rollout(PhaseState([1.0], [0.0]), harmonic, IntegratorConfig(0.01, 0.05, 1000))
    assert traj.energies[-1, 0] < traj.energies[0, 0]


def test_displacement_bounded_by_speed_limit(rng):
    for _ in range(5):
        m = random_model(rng, 3, hidden=[8])
        z = PhaseState(rng.normal(size=3), 1e3 * rng.normal(size=3))
        traj = rollout(z, m, IntegratorConfig(0.05, 0.0, 100), record_energy=False)
        assert m_norm(np.diff(traj.q, axis=0), m.governor.log_mass).max() <= 0.05 * m.governor.c * (1 + 1e-9)


# ---------------------------------------------------------------- langevin

def test_langevin_cold_and_frictionless_is_force_then_drift(small_model, rng):
    z = PhaseState(rng.normal(size=2), rng.normal(size=2))
    out = langevin_step(z, small_model, 0.01, LangevinConfig(0.0, 0.0), 0)
    p1 = z.p - 0.01 * potential_gradient(z.q, small_model)
    assert np.allclose(out.p, p1, rtol=0, atol=1e-15)
    assert np.allclose(out.q, z.q + 0.01 * kinetic_gradient(p1, small_model.governor), rtol=0, atol=1e-15)


def test_langevin_hot_without_friction_is_deterministic(small_model):
    z = PhaseState([0.1, 0.2], [0.3, 0.4])
    a = langevin_step(z, small_model, 0.01, LangevinConfig(2.0, 0.0, seed=1), 0)
    b = langevin_step(z, small_model, 0.01, LangevinConfig(2.0, 0.0, seed=2), 0)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)


def test_langevin_step_reproducible_from_seed_and_index(small_model):
    z = PhaseState([0.1, 0.2], [0.3, 0.4])
    lc = LangevinConfig(1.0, 0.5, seed=9)
    a = langevin_step(z, small_model, 0.01, lc, 17)
    b = langevin_step(z, small_model, 0.01, lc, 17)
    c = langevin_step(z, small_model, 0.01, lc, 18)
    assert np.array_equal(a.p, b.p) and not np.array_equal(a.p, c.p)


def test_langevin_noise_scale(harmonic):
    # at q = p = 0 the update is pure noise with std sqrt(2 gamma kB T eps)
    lc = LangevinConfig(0.5, 0.5, seed=0)
    z = PhaseState(np.zeros((20000, 1)), np.zeros((20000, 1)))
    out = langevin_step(z, harmonic, 0.01, lc, 0)
    assert np.std(out.p) == pytest.approx(np.sqrt(2 * 0.5 * 0.5 * 0.01), rel=0.02)


def test_langevin_run_reproducible(harmonic):
    lc = LangevinConfig(0.5, 0.5, seed=4)
    z = PhaseState([0.0], [0.0])
    a = langevin_run(z, harmonic, 0.01, lc, 200)
    b = langevin_run(z, harmonic, 0.01, lc, 200)
    assert np.array_equal(a.q, b.q)


def test_langevin_variance_short_chain():
    m = harmonic_model(1)
    z = PhaseState(np.zeros((64, 1)), np.zeros((64, 1)))
    _, var = langevin_moments(z, m, 0.05, LangevinConfig(0.5, 0.5, seed=0), 20_000, 2_000)
    assert var[0] == pytest.approx(0.5, rel=0.1)
