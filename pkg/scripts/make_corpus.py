"""Build the fixed toy corpus from scikit-image's bundled photographs.

Training crops come from the left 80% of every source image and held-out
crops from the right 20%, so the two sets never share pixels.

    python scripts/make_corpus.py --out data --train 200 --test 20
"""

from __future__ import annotations

import argparse
import os

import numpy as np
from skimage import data

from ccacodec.imageio import write_ppm

SOURCES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry",
           "hubble_deep_field", "retina", "colorwheel", "stereo_motorcycle")


def load_sources() -> list[tuple[str, np.ndarray]]:
    out = []
    for name in SOURCES:
        img = getattr(data, name)()
        if isinstance(img, tuple):
            img = img[0]
        out.append((name, np.ascontiguousarray(img[..., :3], dtype=np.uint8)))
    return out


def crops(sources, count: int, size: int, side: str, rng: np.random.Generator):
    for k in range(count):
        name, img = sources[k % len(sources)]
        h, w = img.shape[:2]
        split = int(w * 0.8)
        lo, hi = (0, split - size) if side == "train" else (split, w - size)
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(lo, hi + 1))
        patch = img[top:top + size, left:left + size]
        if side == "train" and rng.random() < 0.5:
            patch = patch[:, ::-1]
        yield f"{side}_{k:03d}_{name}.ppm", np.ascontiguousarray(patch)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="data")
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--train-size", type=int, default=96)
    p.add_argument("--test-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=2024)
    args = p.parse_args(argv)
    sources = load_sources()
    rng = np.random.default_rng(args.seed)
    for side, count, size in (("train", args.train, args.train_size),
                              ("test", args.test, args.test_size)):
        folder = os.path.join(args.out, side)
        os.makedirs(folder, exist_ok=True)
        for name, patch in crops(sources, count, size, side, rng):
            write_ppm(os.path.join(folder, name), patch)
    print(f"wrote {args.train} training and {args.test} held-out crops under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
