"""Files: checkpoints and config documents, trajectory CSV, PGM image grids, potential probes.

Checkpoints and config files share one structured text format: JSON with
every float written at 17 significant digits, which round-trips IEEE doubles
exactly. All writers go through a temporary file and an atomic rename.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from .errors import CheckpointReadError, CheckpointShapeError, CheckpointVersionError, DimensionError
from .hamiltonian import ChluModel, KineticGovernor, confinement_energy
from .integrator import Trajectory
from .potential import PotentialNet

FORMAT_VERSION = 1


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- structured text

def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x}")
    s = f"{x:.17g}"
    # keep a float marker so ints and floats stay distinguishable on reload
    if all(ch not in s for ch in ".eE"):
        s += ".0"
    return s


def _emit(obj, indent: int) -> str:
    pad = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_emit(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        if not obj:
            return "[]"
        items = [f"{pad}  {_emit(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    return _scalar(obj)


def _scalar(v) -> str:
    if v is None or isinstance(v, (bool, str)):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _num(v)


def dumps(obj) -> str:
    """Serialize a tree of dicts, lists, strings and numbers as indented JSON."""
    return _emit(obj, 0) + "\n"


def write_document(obj, path) -> None:
    atomic_write(path, dumps(obj).encode())


def read_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointReadError(path, exc) from exc


# ---------------------------------------------------------------- checkpoints

def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the stamp for reproducible artifacts
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def checkpoint_document(m: ChluModel, meta: dict | None = None) -> dict:
    net = m.potential
    return {
        "format_version": FORMAT_VERSION,
        "model": {"d": m.dim, "layer_dims": net.layer_dims, "c": m.governor.c, "m0": m.governor.m0,
                  "alpha": m.alpha},
        "parameters": {
            "weights": [W.tolist() for W in net.weights],
            "biases": [b.tolist() for b in net.biases],
            "log_mass": m.governor.log_mass.tolist(),
        },
        "provenance": meta or {},
        "created": _timestamp(),
    }


def save_checkpoint(m: ChluModel, meta: dict | None, path) -> None:
    write_document(checkpoint_document(m, meta), path)


def model_from_document(doc: dict, source="<document>") -> ChluModel:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointReadError(source, "missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(doc["format_version"])
    try:
        hp = doc["model"]
        params = doc["parameters"]
        dims = [int(x) for x in hp["layer_dims"]]
        weights = [np.array(W, dtype=np.float64) for W in params["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in params["biases"]]
        log_mass = np.array(params["log_mass"], dtype=np.float64)
        d = int(hp["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointReadError(source, f"malformed field: {exc}") from exc
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise CheckpointShapeError(f"{len(weights)} weight layers for layer_dims {dims}")
    for l, (W, b) in enumerate(zip(weights, biases)):
        if W.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
            raise CheckpointShapeError(
                f"layer {l} has weights {W.shape} and biases {b.shape} but layer_dims {dims}")
    if dims[0] != d or log_mass.shape != (d,) or dims[-1] != 1:
        raise CheckpointShapeError(f"d={d}, layer_dims {dims}, log_mass {log_mass.shape}")
    return ChluModel(KineticGovernor(float(hp["c"]), float(hp["m0"]), log_mass),
                     PotentialNet(weights, biases), float(hp["alpha"]))


def load_checkpoint(path) -> ChluModel:
    return model_from_document(read_document(path), path)


def load_checkpoint_meta(path) -> dict:
    return read_document(path).get("provenance", {})


# ---------------------------------------------------------------- CSV

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trajectory_csv(traj: Trajectory) -> str:
    if traj.q.ndim != 2:
        raise DimensionError("trajectory CSV takes an unbatched trajectory of shape (N, d)")
    d = traj.q.shape[1]
    header = ["step", "t"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)] + ["H", "T", "V", "C"]
    lines = [",".join(header)]
    for k in range(len(traj)):
        row = [str(int(traj.steps[k])), _fmt(traj.steps[k] * traj.epsilon)]
        row += [_fmt(v) for v in traj.q[k]] + [_fmt(v) for v in traj.p[k]] + [_fmt(v) for v in traj.energies[k]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    atomic_write(path, trajectory_csv(traj).encode())


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :func:`write_trajectory_csv` (single trajectory)."""
    items = read_dataset_csv(path)
    if len(items) != 1:
        raise ValueError(f"{path} holds {len(items)} trajectories")
    return items[0]


def write_dataset_csv(trajs: list[Trajectory], path) -> None:
    """Several trajectories in one file, each row prefixed by its item index."""
    out = []
    for i, traj in enumerate(trajs):
        lines = trajectory_csv(traj).splitlines()
        if i == 0:
            out.append("item," + lines[0])
        out.extend(f"{i},{line}" for line in lines[1:])
    atomic_write(path, ("\n".join(out) + "\n").encode())


def read_dataset_csv(path) -> list[Trajectory]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    has_item = header[0] == "item"
    if not has_item:
        table = np.column_stack([np.zeros(len(table)), table])
    d = (table.shape[1] - 7) // 2
    if table.shape[1] != 7 + 2 * d or d < 1:
        raise ValueError(f"{path}: unexpected column count {table.shape[1]}")
    trajs = []
    for item in np.unique(table[:, 0]):
        rows = table[table[:, 0] == item]
        steps = rows[:, 1].astype(int)
        eps = rows[1, 2] / rows[1, 1] if len(rows) > 1 and rows[1, 1] else 1.0
        trajs.append(Trajectory(rows[:, 3:3 + d], rows[:, 3 + d:3 + 2 * d], rows[:, 3 + 2 * d:], steps, float(eps)))
    return trajs


# ---------------------------------------------------------------- images

def pgm_pixels(q, display_tanh: bool = True) -> np.ndarray:
    """Map positions to bytes with round-half-up of 255 * (x + 1) / 2."""
    x = np.tanh(q) if display_tanh else np.clip(q, -1.0, 1.0)
    return np.floor(255.0 * (x + 1.0) / 2.0 + 0.5).astype(np.uint8)


def pgm_grid(images, w: int, h: int, cols: int, display_tanh: bool = True) -> bytes:
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    if images.shape[1] != w * h:
        raise DimensionError(f"image size {images.shape[1]} does not match {w}x{h}")
    n = images.shape[0]
    cols = max(1, min(cols, n))
    rows = -(-n // cols)
    canvas = np.zeros((rows * h, cols * w), dtype=np.uint8)
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = pgm_pixels(img, display_tanh).reshape(h, w)
    return f"P5\n{cols * w} {rows * h}\n255\n".encode() + canvas.tobytes()


def write_pgm_grid(images, w: int, h: int, cols: int, path, display_tanh: bool = True) -> None:
    atomic_write(path, pgm_grid(images, w, h, cols, display_tanh))


# ---------------------------------------------------------------- probing

def parse_grid(text: str) -> tuple[float, float, int]:
    lo, hi, res = text.split(":")
    lo, hi, res = float(lo), float(hi), int(res)
    if res < 1 or not hi >= lo:
        raise ValueError(f"bad grid {text!r}; expected min:max:resolution")
    return lo, hi, res


def probe_potential(m: ChluModel, grid_x, grid_y=None) -> np.ndarray:
    """Rows (x, y, V + confinement, fx, fy) over a regular grid, x varying fastest."""
    if m.dim != 2:
        raise DimensionError("probe requires 2-dimensional latent")
    grid_y = grid_x if grid_y is None else grid_y
    xs = np.linspace(*grid_x)
    ys = np.linspace(*grid_y)
    X, Y = np.meshgrid(xs, ys)
    Q = np.column_stack([X.ravel(), Y.ravel()])
    V = m.potential.value(Q) + confinement_energy(Q, m.alpha)
    F = -(m.potential.grad(Q) + 2.0 * m.alpha * Q)
    return np.column_stack([Q, V, F])


def probe_csv(rows: np.ndarray) -> str:
    lines = ["x,y,V,fx,fy"] + [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def write_probe_csv(rows: np.ndarray, path) -> None:
    atomic_write(path, probe_csv(rows).encode())
