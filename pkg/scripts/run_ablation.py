"""Train and evaluate the full CCA ablation grid.

    python scripts/run_ablation.py --jobs 4

27 toy-profile runs (CCA / no-CCA / even split x 3 lambdas x 3 seeds) at
20k steps each.  Finished checkpoints are reused, so an interrupted sweep
resumes where it stopped.  Results land in ``<out>/results.json``, which the
acceptance suite reads; ``--steps`` shortens runs for smoke tests, and such
results are flagged as off-protocol by that suite.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from ccacodec.ablation import (ABLATION_LAMBDAS, ABLATION_SEEDS, VARIANTS, execute_run,
                               save_results, verdicts)
from ccacodec.imageio import list_images, read_ppm

log = logging.getLogger("ablation")


def _job(args):
    variant, lam, seed, data_dir, heldout_dir, out_dir, steps = args
    heldout = [read_ppm(p) for p in list_images(heldout_dir)]
    res = execute_run(variant, lam, seed, data_dir, heldout, out_dir, steps)
    print(f"done {variant} lambda={lam:g} seed={seed} bpp={res.bpp:.4f} psnr={res.psnr:.3f} "
          f"slice1={res.slice1_share:.4f}", flush=True)
    return res


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="data/train")
    ap.add_argument("--heldout", default="data/test")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--steps", type=int, help="shorten every run (off-protocol)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    os.makedirs(args.out, exist_ok=True)

    jobs = [(v, lam, s, args.data, args.heldout, args.out, args.steps)
            for v in VARIANTS for lam in ABLATION_LAMBDAS for s in ABLATION_SEEDS]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_job, jobs))
    path = os.path.join(args.out, "results.json")
    save_results(results, path)
    v = verdicts(results)
    print(f"slice-1 share larger with CCA in {v.share_wins}/{v.share_pairs} pairs")
    print(f"BD-rate CCA vs no-CCA: {v.bd_cca_vs_base:+.2f}%")
    print(f"BD-rate uneven vs even: {v.bd_uneven_vs_even:+.2f}%")
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
