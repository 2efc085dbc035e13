"""Command-line harness: ``chlu {gen-data,train,rollout,generate,probe,check}``.

Exit codes: 0 success, 1 usage error, 2 numerical divergence, 3 check failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, experiments, io
from .data import downsample, lemniscate_series, load_idx, sine_dataset
from .errors import ChluError, GradientDiverged, IntegrationDiverged
from .hamiltonian import PhaseState
from .integrator import IntegratorConfig, rollout

log = logging.getLogger("chlu")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _preset_help() -> str:
    lines = ["built-in experiment defaults (override any field with --config):"]
    for name, cfg in experiments.PRESETS.items():
        lines.append(f"  {name}:")
        for section, values in cfg.items():
            body = ", ".join(f"{k}={v}" for k, v in values.items())
            lines.append(f"    {section}: {body}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chlu", description="Relativistic Hamiltonian learning unit experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    g = sub.add_parser("gen-data", help="write a synthetic trajectory dataset as CSV", formatter_class=fmt)
    g.add_argument("kind", choices=["lemniscate", "sine"])
    g.add_argument("--cycles", type=float, default=3.0, help="lemniscate cycles")
    g.add_argument("--samples-per-cycle", type=int, default=200, help="lemniscate samples per cycle")
    g.add_argument("--count", type=int, default=100, help="number of sine trajectories")
    g.add_argument("--length", type=int, default=1000, help="samples per sine trajectory")
    g.add_argument("--omega", default="0.5:2.0", help="sine frequency range lo:hi")
    g.add_argument("--epsilon", type=float, default=0.05, help="sine sampling interval")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="wake-sleep training from a preset", epilog=_preset_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    t.add_argument("experiment", choices=sorted(experiments.PRESETS))
    t.add_argument("--data", help="trajectory CSV (lemniscate, sine) or IDX image file (images, required); "
                                  "trajectory experiments generate their data when omitted")
    t.add_argument("--config", help="structured text document overriding preset sections")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int, help="overrides train.seed")
    t.add_argument("--alg1-literal", action="store_true",
                   help="contrastive update only (beta_mse = 0)")
    t.add_argument("--metrics", help="optional per-step metrics CSV")

    r = sub.add_parser("rollout", help="deterministic Verlet rollout to CSV", formatter_class=fmt)
    r.add_argument("--ckpt", required=True)
    r.add_argument("--init", choices=["file", "lemniscate-start", "csv-row"], default="lemniscate-start",
                   help="initial state source")
    r.add_argument("--init-path", help="state document {q, p} (file) or trajectory CSV (csv-row)")
    r.add_argument("--row", type=int, default=0, help="row index for --init csv-row")
    r.add_argument("--steps", type=int, default=10000)
    r.add_argument("--epsilon", type=float, help="step size (default: the checkpoint's training step)")
    r.add_argument("--gamma", type=float, default=0.0)
    r.add_argument("--record-every", type=int, default=1)
    r.add_argument("--out", required=True)

    d = experiments.GENERATION_DEFAULTS
    gn = sub.add_parser("generate", help="annealed Langevin generation", formatter_class=fmt)
    gn.add_argument("--ckpt", required=True)
    gn.add_argument("--mode", choices=["thermal", "deterministic"], default="thermal")
    gn.add_argument("--steps", type=int, default=d["steps"])
    gn.add_argument("--count", type=int, default=d["count"])
    gn.add_argument("--temp-schedule", default=d["temp_schedule"])
    gn.add_argument("--gamma-schedule", default=d["gamma_schedule"])
    gn.add_argument("--epsilon", type=float, default=d["epsilon"])
    gn.add_argument("--data", help="IDX file whose held-out centroid seeds the samples; "
                                   "without it samples start from sigma * N(0, I)")
    gn.add_argument("--held-out", default=f"{d['held_out'][0]}:{d['held_out'][1]}",
                    help="held-out image index range start:stop (after the training images)")
    gn.add_argument("--sigma", type=float, default=d["sigma"], help="start noise standard deviation")
    gn.add_argument("--cols", type=int, default=5, help="PGM grid columns")
    gn.add_argument("--no-tanh", action="store_true", help="clamp instead of tanh for display")
    gn.add_argument("--seed", type=int, default=0)
    gn.add_argument("--out-dir", required=True)

    pr = sub.add_parser("probe", help="sample V and the force field on a planar grid", formatter_class=fmt)
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--grid", default="-2:2:200", help="min:max:resolution for both axes")
    pr.add_argument("--out", required=True)

    c = sub.add_parser("check", help="run invariant suites", formatter_class=fmt)
    c.add_argument("suite", choices=[*checks.SUITES, "all"])
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--ckpt", help="with --verify, also check a saved model's invariants")
    c.add_argument("--verify", action="store_true")
    return p


def _fix_negative_values(argv):
    """Let ``--grid -2:2:200`` through argparse, which would read it as an option."""
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--grid" and out[i + 1].startswith("-"):
            out[i:i + 2] = [f"--grid={out[i + 1]}"]
            break
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_data(a) -> int:
    if a.kind == "lemniscate":
        trajs = [lemniscate_series(a.cycles, a.samples_per_cycle)]
    else:
        lo, hi = (float(x) for x in a.omega.split(":"))
        ds = sine_dataset(a.count, a.length, lo, hi, a.seed, a.epsilon)
        trajs = [t for _, t in ds.items]
    io.write_dataset_csv(trajs, a.out)
    log.info("wrote %d trajectories to %s", len(trajs), a.out)
    return EXIT_OK


def _load_overrides(path) -> dict:
    if not path:
        return {}
    doc = io.read_document(path)
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a key-value document")
    return doc


def cmd_train(a) -> int:
    overrides = _load_overrides(a.config)
    if a.seed is not None:
        overrides.setdefault("train", {})["seed"] = a.seed
    cfg = experiments.preset(a.experiment, overrides)
    meta = {"experiment": a.experiment, "alg1_literal": a.alg1_literal}
    if a.experiment == "images":
        if not a.data:
            raise UsageError("train images requires --data IDX_FILE")
        images = experiments.prepare_images(load_idx(a.data), cfg)
        exp = experiments.train_images(images, cfg, a.alg1_literal)
        meta.update(width=images.width, height=images.height)
    else:
        if a.data:
            trajs = io.read_dataset_csv(a.data)
            if a.experiment == "sine":
                trajs = trajs[:len(trajs) - cfg["data"]["held_out"]]
            eps = trajs[0].epsilon
        elif a.experiment == "lemniscate":
            trajs = [lemniscate_series(cfg["data"]["cycles"], cfg["data"]["samples_per_cycle"])]
            eps = trajs[0].epsilon
        else:
            ds, trajs, _ = experiments.sine_split(cfg)
            eps = ds.epsilon
        exp = experiments.train_trajectories(a.experiment, trajs, eps, cfg, a.alg1_literal)
    metrics = exp.result.metrics
    diverged = sum(m.diverged for m in metrics)
    meta.update(config=cfg, epsilon=exp.epsilon, steps=len(metrics), diverged_steps=diverged,
                seed=cfg["train"]["seed"], epochs=cfg["train"]["epochs"],
                final_wake_mse=float(np.mean([m.wake_mse for m in metrics[-10:] if not m.diverged] or [np.nan])))
    if a.metrics:
        _write_metrics(metrics, a.metrics)
    if diverged == len(metrics):
        log.error("every training step diverged; no checkpoint written")
        return EXIT_DIVERGED
    io.save_checkpoint(exp.model, meta, a.out)
    print(f"trained {a.experiment}: {len(metrics)} steps, {diverged} diverged, "
          f"final wake mse {meta['final_wake_mse']:.6g} -> {a.out}")
    return EXIT_OK


def _write_metrics(metrics, path):
    cols = ["wake_mse", "lyapunov", "h_wake", "h_sleep", "gap", "grad_norm_mse", "grad_norm_cd", "grad_norm"]
    lines = ["step," + ",".join(cols) + ",clipped,diverged"]
    for i, m in enumerate(metrics):
        vals = [f"{getattr(m, c):.17g}" for c in cols]
        lines.append(f"{i}," + ",".join(vals) + f",{int(m.clipped)},{int(m.diverged)}")
    io.atomic_write(path, ("\n".join(lines) + "\n").encode())


def _initial_state(a, model) -> PhaseState:
    if a.init == "lemniscate-start":
        if model.dim != 2:
            raise UsageError("lemniscate-start needs a 2-dimensional model")
        return lemniscate_series(1.0)[0]
    if not a.init_path:
        raise UsageError(f"--init {a.init} requires --init-path")
    if a.init == "file":
        doc = io.read_document(a.init_path)
        return PhaseState(doc["q"], doc["p"])
    trajs = io.read_dataset_csv(a.init_path)
    flat = [z for t in trajs for z in t.states]
    if not 0 <= a.row < len(flat):
        raise UsageError(f"--row {a.row} out of range (0..{len(flat) - 1})")
    return flat[a.row]


def cmd_rollout(a) -> int:
    model = io.load_checkpoint(a.ckpt)
    eps = a.epsilon if a.epsilon is not None else io.load_checkpoint_meta(a.ckpt).get("epsilon")
    if eps is None:
        raise UsageError("checkpoint records no step size; pass --epsilon")
    z0 = _initial_state(a, model)
    traj = rollout(z0, model, IntegratorConfig(float(eps), a.gamma, a.steps), record_every=a.record_every)
    io.write_trajectory_csv(traj, a.out)
    print(f"rollout: {a.steps} steps, final H {traj.energies[-1, 0]:.17g} -> {a.out}")
    return EXIT_OK


def _image_shape(meta, dim):
    w, h = meta.get("width"), meta.get("height")
    if w and h and w * h == dim:
        return int(w), int(h)
    side = int(round(np.sqrt(dim)))
    return (side, side) if side * side == dim else (dim, 1)


def cmd_generate(a) -> int:
    model = io.load_checkpoint(a.ckpt)
    meta = io.load_checkpoint_meta(a.ckpt)
    w, h = _image_shape(meta, model.dim)
    reference = None
    if a.data:
        images = load_idx(a.data)
        factor = meta.get("config", {}).get("data", {}).get("downsample", 1)
        if images.width * images.height != model.dim and factor > 1:
            images = downsample(images, factor)
        if images.width * images.height != model.dim:
            raise UsageError(f"images of {images.width}x{images.height} do not match model dimension {model.dim}")
        lo, hi = (int(x) for x in a.held_out.split(":"))
        starts = experiments.noisy_centroid_starts(images.subset(lo, hi), a.count, a.sigma, a.seed)
        n_train = meta.get("config", {}).get("data", {}).get("train_count", lo)
        reference = images.images[:n_train]
    else:
        rng = np.random.default_rng([a.seed, 0x6E6F6973])
        q = a.sigma * rng.standard_normal((a.count, model.dim))
        starts = PhaseState(q, np.zeros_like(q))
    traj = experiments.generate(model, starts, a.mode, a.epsilon, a.steps, a.temp_schedule, a.gamma_schedule,
                                a.seed, record_every=max(1, a.steps // 100))
    out = Path(a.out_dir)
    mean_e = traj.energies.mean(axis=-1)
    energy = [f"{int(k)},{k * traj.epsilon:.17g}," + ",".join(f"{v:.17g}" for v in e)
              for k, e in zip(traj.steps, mean_e)]
    io.atomic_write(out / "energy.csv", ("step,t,H,T,V,C\n" + "\n".join(energy) + "\n").encode())
    rows = "\n".join(",".join(f"{v:.17g}" for v in q) for q in traj.q[-1])
    io.atomic_write(out / "samples.csv", (rows + "\n").encode())
    io.write_pgm_grid(traj.q[-1], w, h, a.cols, out / "samples.pgm", display_tanh=not a.no_tanh)
    io.write_pgm_grid(traj.q[0], w, h, a.cols, out / "starts.pgm", display_tanh=not a.no_tanh)
    print(f"generate {a.mode}: mean H {mean_e[0, 0]:.6g} -> {mean_e[-1, 0]:.6g}")
    if reference is not None:
        d0 = experiments.nearest_distance(traj.q[0], reference).mean()
        d1 = experiments.nearest_distance(traj.q[-1], reference).mean()
        print(f"nearest training image distance {d0:.6g} -> {d1:.6g}")
    return EXIT_OK


def cmd_probe(a) -> int:
    model = io.load_checkpoint(a.ckpt)
    rows = io.probe_potential(model, io.parse_grid(a.grid))
    io.write_probe_csv(rows, a.out)
    print(f"probe: {len(rows)} grid nodes -> {a.out}")
    return EXIT_OK


def cmd_check(a) -> int:
    results = checks.run_suite(a.suite, a.seed)
    if a.verify:
        if not a.ckpt:
            raise UsageError("--verify requires --ckpt")
        results += checks.verify_model(io.load_checkpoint(a.ckpt))
    for r in results:
        print(r)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "rollout": cmd_rollout,
            "generate": cmd_generate, "probe": cmd_probe, "check": cmd_check}


def main(argv=None) -> int:
    argv = _fix_negative_values(sys.argv[1:] if argv is None else argv)
    try:
        a = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (IntegrationDiverged, GradientDiverged) as exc:
        print(f"chlu: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ChluError, OSError, KeyError, ValueError) as exc:
        print(f"chlu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
