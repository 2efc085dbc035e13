"""Train an energy landscape on small digit images and anneal noise into samples.

Run:  python demos/image_generation.py [idx_file] [out_dir]

Images are pooled to 14x14 and used as resting states of the dynamics. The
wake phase pulls noisy copies back toward the data; the sleep phase raises
the energy of whatever free dynamics wander into. Generation starts from
noisy copies of the mean image and cools the Langevin sampler from
temperature 1 to 0.01 while friction rises. For contrast the same starts are
run with temperature and friction at zero, which only conserves energy.

Samples at this scale are blurry digit-like blobs, not crisp digits.
"""
import sys
from pathlib import Path

from chlu.data import load_idx
from chlu.experiments import generate, nearest_distance, noisy_centroid_starts, preset, prepare_images, train_images
from chlu.io import write_pgm_grid

DEFAULT_IDX = Path(__file__).resolve().parents[1] / "data" / "mnist5k-images-idx3-ubyte.gz"


def main(idx_file=DEFAULT_IDX, out_dir="demo-out/images"):
    out = Path(out_dir)
    cfg = preset("images")
    images = prepare_images(load_idx(idx_file), cfg)
    exp = train_images(images, cfg)
    reference = images.images[:cfg["data"]["train_count"]]
    starts = noisy_centroid_starts(images.subset(1000, 3000), 25, 0.3, seed=0)

    for mode in ("thermal", "deterministic"):
        traj = generate(exp.model, starts, mode, 0.1, 1000, seed=0, record_every=100)
        H = traj.energies[:, :, 0].mean(axis=1)
        d0 = nearest_distance(traj.q[0], reference).mean()
        d1 = nearest_distance(traj.q[-1], reference).mean()
        trace = " ".join(f"{h:.2f}" for h in H)
        print(f"{mode}: mean H every 100 steps: {trace}")
        print(f"{mode}: distance to nearest training image {d0:.3f} -> {d1:.3f}")
        write_pgm_grid(traj.q[-1], images.width, images.height, 5, out / f"{mode}.pgm")
    write_pgm_grid(starts.q, images.width, images.height, 5, out / "starts.pgm")
    print(f"wrote sample grids to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
