"""Synthetic trajectories, IDX image parsing and experiment initial conditions."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IdxFormatError
from .hamiltonian import PhaseState
from .integrator import Trajectory
from .seeding import named_stream
from .training import WindowSet

IDX_IMAGE_MAGIC = 0x00000803


@dataclass
class TrajectoryDataset:
    """Per-item initial state and target trajectory, all of dimension d."""

    items: list[tuple[PhaseState, Trajectory]]
    epsilon: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {z.dim for z, _ in self.items}
        if len(dims) > 1:
            raise ValueError(f"items disagree in dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.items[0][0].dim


@dataclass
class ImageDataset:
    images: np.ndarray  # (count, height * width), values in [-1, 1]
    width: int
    height: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 2 or self.images.shape[1] != self.width * self.height:
            raise ValueError("images must have shape (count, width * height)")
        if self.images.size and (self.images.min() < -1.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [-1, 1]")

    @property
    def count(self) -> int:
        return self.images.shape[0]

    def __len__(self):
        return self.count

    def subset(self, start: int, stop: int) -> "ImageDataset":
        return ImageDataset(self.images[start:stop], self.width, self.height)


# ---------------------------------------------------------------- trajectories

def lemniscate_series(cycles: float, samples_per_cycle: int = 200, epsilon: float | None = None) -> Trajectory:
    """Gerono lemniscate q = (cos t, sin t cos t) with p = dq/dt = (-sin t, cos 2t).

    Samples t_k = k * 2pi / samples_per_cycle for k = 0..round(cycles * samples_per_cycle).
    The default epsilon is that sampling interval, so one Verlet step
    advances one sample.
    """
    if not cycles > 0:
        raise ValueError("cycles must be positive")
    if samples_per_cycle < 8:
        raise ValueError("samples_per_cycle must be at least 8")
    dt = 2.0 * np.pi / samples_per_cycle
    n = int(round(cycles * samples_per_cycle))
    t = np.arange(n + 1) * dt
    q = np.stack([np.cos(t), np.sin(t) * np.cos(t)], axis=1)
    p = np.stack([-np.sin(t), np.cos(2.0 * t)], axis=1)
    traj = Trajectory.from_arrays(q, p, dt if epsilon is None else epsilon)
    return traj


def sine_dataset(count: int = 100, length: int = 1000, omega_lo: float = 0.5, omega_hi: float = 2.0,
                 seed: int = 0, epsilon: float = 0.05) -> TrajectoryDataset:
    """Sine trajectories q = sin(wt), p = w cos(wt) at t_k = k * epsilon, w ~ U(omega_lo, omega_hi).

    Each trajectory has ``length`` samples (k = 0 .. length - 1).
    """
    if not omega_lo < omega_hi:
        raise ValueError("omega_lo must be below omega_hi")
    if count < 1 or length < 1:
        raise ValueError("count and length must be positive")
    rng = named_stream(seed, "sine-omega")
    omegas = rng.uniform(omega_lo, omega_hi, size=count)
    t = np.arange(length) * epsilon
    items = []
    for w in omegas:
        q = np.sin(w * t)[:, None]
        p = (w * np.cos(w * t))[:, None]
        traj = Trajectory.from_arrays(q, p, epsilon)
        items.append((traj[0], traj))
    meta = {"generator": "sine", "count": count, "length": length, "omega_lo": omega_lo,
            "omega_hi": omega_hi, "seed": seed, "omegas": omegas.tolist()}
    return TrajectoryDataset(items, epsilon, meta)


def trajectory_windows(trajs, steps: int, stride: int = 1) -> WindowSet:
    """Cut every trajectory into overlapping windows of ``steps + 1`` states."""
    zq, zp, tq, tp = [], [], [], []
    for traj in trajs:
        n = len(traj)
        for s in range(0, n - steps, stride):
            zq.append(traj.q[s])
            zp.append(traj.p[s])
            tq.append(traj.q[s:s + steps + 1])
            tp.append(traj.p[s:s + steps + 1])
    if not zq:
        raise ValueError("trajectories are shorter than one window")
    return WindowSet(np.array(zq), np.array(zp), np.stack(tq, axis=1), np.stack(tp, axis=1))


def static_windows(images: np.ndarray, steps: int, noise_sigma: float = 0.1, seed: int = 0) -> WindowSet:
    """Static data as stationary targets.

    Each item x gives target (q = x, p = 0) at every step and starts from
    (x + noise_sigma * noise, 0).
    """
    x = np.asarray(images, dtype=np.float64)
    rng = named_stream(seed, "static-start-noise")
    zq = x + noise_sigma * rng.standard_normal(x.shape)
    zeros = np.zeros_like(x)
    tq = np.broadcast_to(x, (steps + 1,) + x.shape).copy()
    tp = np.zeros_like(tq)
    tq[0] = zq
    return WindowSet(zq, zeros, tq, tp)


def perturb_state(z: PhaseState, sigma: float, seed: int) -> PhaseState:
    """Add independent N(0, sigma^2) noise to every q and p component."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = named_stream(seed, "perturb")
    return PhaseState(z.q + sigma * rng.standard_normal(z.q.shape),
                      z.p + sigma * rng.standard_normal(z.p.shape))


# ---------------------------------------------------------------- images

def parse_idx(data: bytes) -> ImageDataset:
    """Parse an IDX3 unsigned-byte image file; pixels map to u / 127.5 - 1."""
    if len(data) < 4:
        raise IdxFormatError("unexpected end of data", len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"bad magic 0x{magic:08x}", 0)
    if len(data) < 16:
        raise IdxFormatError("unexpected end of data", len(data))
    count, rows, cols = struct.unpack_from(">III", data, 4)
    need = 16 + count * rows * cols
    if len(data) < need:
        raise IdxFormatError(
            f"unexpected end of data: header declares {count} images of {rows}x{cols} "
            f"({need} bytes) but only {len(data)} bytes present", len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, rows * cols).astype(np.float64) / 127.5 - 1.0
    return ImageDataset(images, cols, rows)


def to_idx(ds: ImageDataset) -> bytes:
    """Serialize back to IDX3 bytes (inverse of :func:`parse_idx` on its value grid)."""
    u = np.rint((ds.images + 1.0) * 127.5).clip(0, 255).astype(np.uint8)
    return struct.pack(">IIII", IDX_IMAGE_MAGIC, ds.count, ds.height, ds.width) + u.tobytes()


def load_idx(path) -> ImageDataset:
    """Read an IDX image file, transparently gunzipping ``*.gz``."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def downsample(ds: ImageDataset, factor: int = 2) -> ImageDataset:
    """Mean-pool non-overlapping factor x factor blocks."""
    h, w = ds.height // factor, ds.width // factor
    img = ds.images.reshape(ds.count, ds.height, ds.width)[:, :h * factor, :w * factor]
    pooled = img.reshape(ds.count, h, factor, w, factor).mean(axis=(2, 4))
    return ImageDataset(pooled.reshape(ds.count, h * w), w, h)


def centroid_with_noise(ds: ImageDataset, sigma: float, seed: int) -> np.ndarray:
    """Component-wise mean image plus sigma * N(0, I)."""
    if ds.count == 0:
        raise ValueError("empty dataset")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = named_stream(seed, "centroid-noise")
    c = ds.images.mean(axis=0)
    return c + sigma * rng.standard_normal(c.shape)
