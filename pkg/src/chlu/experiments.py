"""Desk-scale presets for the three experiments and the helpers that run them.

Each preset fixes the model shape, integrator step, window construction and
:class:`TrainConfig`. A preset is a plain nested dict so a config file can
override any field.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    ImageDataset,
    centroid_with_noise,
    downsample,
    lemniscate_series,
    sine_dataset,
    static_windows,
    trajectory_windows,
)
from .hamiltonian import ChluModel, KineticGovernor, PhaseState
from .integrator import AnnealSchedule, LangevinConfig, Trajectory, langevin_run
from .potential import init_potential
from .training import FitResult, TrainConfig, fit

log = logging.getLogger(__name__)

# Contrastive weight is small for the trajectory experiments: with
# conservative sleep rollouts the raw contrastive term pushes energies
# without bound and collapses the learned mass.
PRESETS: dict[str, dict] = {
    "lemniscate": {
        "model": {"hidden": [64, 64], "c": 5.0, "m0": 1.0, "alpha": 0.01},
        "data": {"cycles": 3.0, "samples_per_cycle": 200},
        "windows": {"stride": 1},
        "train": {"eta": 0.2, "beta_mse": 1.0, "beta_cd": 0.01, "wake_steps": 16, "sleep_steps": 16,
                  "epochs": 30, "batch_size": 32, "seed": 0},
    },
    "sine": {
        "model": {"hidden": [64, 64], "c": 3.0, "m0": 1.0, "alpha": 0.01},
        "data": {"count": 100, "length": 1000, "omega_lo": 0.5, "omega_hi": 2.0, "epsilon": 0.05,
                 "held_out": 10},
        "windows": {"stride": 50},
        "train": {"eta": 0.05, "beta_mse": 1.0, "beta_cd": 0.01, "wake_steps": 16, "sleep_steps": 16,
                  "epochs": 10, "batch_size": 32, "seed": 0},
    },
    "images": {
        "model": {"hidden": [256], "c": 3.0, "m0": 1.0, "alpha": 0.1},
        "data": {"train_count": 1000, "downsample": 2, "epsilon": 0.1},
        "windows": {"noise_sigma": 0.1},
        "train": {"eta": 0.01, "beta_mse": 1.0, "beta_cd": 1.0, "wake_steps": 8, "sleep_steps": 64,
                  "epochs": 10, "batch_size": 32, "seed": 0, "learn_mass": False},
    },
}

GENERATION_DEFAULTS = {
    "steps": 1000,
    "count": 25,
    "temp_schedule": "geometric:1.0:0.01",
    "gamma_schedule": "linear:0.01:0.2",
    "epsilon": 0.1,
    "sigma": 0.3,
    "held_out": [1000, 3000],
}


def preset(name: str, overrides: dict | None = None) -> dict:
    """A deep copy of a named preset with ``overrides`` merged section by section."""
    if name not in PRESETS:
        raise KeyError(f"unknown experiment {name!r}; expected one of {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[name])
    for section, values in (overrides or {}).items():
        if section not in cfg or not isinstance(values, dict):
            raise KeyError(f"unknown config section {section!r}")
        cfg[section].update(values)
    return cfg


def train_config(cfg: dict, alg1_literal: bool = False) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    extra = set(cfg["train"]) - known
    if extra:
        raise KeyError(f"unknown train settings {sorted(extra)}")
    tc = dict(cfg["train"])
    if alg1_literal:
        tc["beta_mse"] = 0.0
        tc["beta_cd"] = tc["beta_cd"] or 1.0
    return TrainConfig(**tc)


def build_model(cfg: dict, dim: int) -> ChluModel:
    mc = cfg["model"]
    dims = [dim] + list(mc["hidden"]) + [1]
    seed = cfg["train"].get("seed", 0)
    return ChluModel(KineticGovernor.identity(dim, mc["c"], mc["m0"]), init_potential(dims, seed), mc["alpha"])


@dataclass
class Experiment:
    """A trained model plus everything needed to evaluate it."""

    model: ChluModel
    config: dict
    epsilon: float
    result: FitResult


def train_trajectories(name: str, trajs: list[Trajectory], epsilon: float, cfg: dict,
                       alg1_literal: bool = False) -> Experiment:
    tc = train_config(cfg, alg1_literal)
    windows = trajectory_windows(trajs, tc.wake_steps, cfg["windows"]["stride"])
    m = build_model(cfg, trajs[0].q.shape[-1])
    log.info("%s: %d windows, %d epochs", name, len(windows), tc.epochs)
    return Experiment(m, cfg, epsilon, fit(m, windows, tc, epsilon))


def run_lemniscate(overrides: dict | None = None, alg1_literal: bool = False) -> tuple[Experiment, Trajectory]:
    cfg = preset("lemniscate", overrides)
    data = lemniscate_series(cfg["data"]["cycles"], cfg["data"]["samples_per_cycle"])
    return train_trajectories("lemniscate", [data], data.epsilon, cfg, alg1_literal), data


def sine_split(cfg: dict):
    d = cfg["data"]
    ds = sine_dataset(d["count"], d["length"], d["omega_lo"], d["omega_hi"], cfg["train"].get("seed", 0),
                      d["epsilon"])
    trajs = [t for _, t in ds.items]
    n_train = len(trajs) - d["held_out"]
    return ds, trajs[:n_train], trajs[n_train:]


def run_sine(overrides: dict | None = None, alg1_literal: bool = False):
    cfg = preset("sine", overrides)
    ds, train, held = sine_split(cfg)
    return train_trajectories("sine", train, ds.epsilon, cfg, alg1_literal), held


def prepare_images(full: ImageDataset, cfg: dict) -> ImageDataset:
    factor = cfg["data"]["downsample"]
    return downsample(full, factor) if factor > 1 else full


def train_images(images: ImageDataset, cfg: dict, alg1_literal: bool = False) -> Experiment:
    """Train on the first ``train_count`` images of an already prepared dataset."""
    tc = train_config(cfg, alg1_literal)
    train = images.subset(0, cfg["data"]["train_count"])
    windows = static_windows(train.images, tc.wake_steps, cfg["windows"]["noise_sigma"], tc.seed)
    m = build_model(cfg, train.images.shape[1])
    eps = cfg["data"]["epsilon"]
    log.info("images: %d training images of %dx%d", train.count, train.width, train.height)
    return Experiment(m, cfg, eps, fit(m, windows, tc, eps))


# ---------------------------------------------------------------- generation

def generation_config(mode: str, steps: int, temp_schedule: str, gamma_schedule: str, seed: int) -> LangevinConfig:
    """Thermal mode anneals temperature and friction; deterministic mode forces both to zero."""
    if mode == "thermal":
        ts = AnnealSchedule.parse(temp_schedule, steps)
        gs = AnnealSchedule.parse(gamma_schedule, steps)
        return LangevinConfig(ts.start_value, gs.start_value, 1.0, seed, ts, gs)
    if mode == "deterministic":
        return LangevinConfig(0.0, 0.0, 1.0, seed)
    raise ValueError(f"unknown generation mode {mode!r}")


def noisy_centroid_starts(held: ImageDataset, count: int, sigma: float, seed: int) -> PhaseState:
    """``count`` noisy centroids at rest, sample i drawn with seed ``seed + i``."""
    q = np.array([centroid_with_noise(held, sigma, seed + i) for i in range(count)])
    return PhaseState(q, np.zeros_like(q))


def generate(m: ChluModel, starts: PhaseState, mode: str, epsilon: float, steps: int = 1000,
             temp_schedule: str = GENERATION_DEFAULTS["temp_schedule"],
             gamma_schedule: str = GENERATION_DEFAULTS["gamma_schedule"], seed: int = 0,
             record_every: int = 10) -> Trajectory:
    lcfg = generation_config(mode, steps, temp_schedule, gamma_schedule, seed)
    return langevin_run(starts, m, epsilon, lcfg, steps, record_every=record_every)


def nearest_distance(samples: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-sample root-mean-square per-pixel distance to the closest reference image."""
    samples = np.atleast_2d(samples)
    d2 = (np.sum(samples ** 2, 1)[:, None] - 2.0 * samples @ reference.T + np.sum(reference ** 2, 1)[None])
    return np.sqrt(np.maximum(d2.min(axis=1), 0.0) / samples.shape[1])
