"""Paired training runs that compare CCA, no-CCA and even-split models.

Every run trains the toy profile at one (variant, lambda, seed) and records
its RD point and bit shares on the held-out images.  :func:`verdicts`
turns a finished result set into pass/fail answers:

* CCA puts a larger share of bits into slice 1 than the matched no-CCA run
  for most (lambda, seed) pairs;
* BD-rate of CCA against the no-CCA anchor, averaged over seeds, is <= 0;
* with CCA on, the uneven split's BD-rate against the even split, averaged
  over seeds, is <= +1%.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .evaluate import EvaluationError, RDPoint, bd_rate, info_distribution, rd_point

VARIANTS = {
    "cca": dict(cca_enabled=True, schedule_k=1.7),
    "base": dict(cca_enabled=False, schedule_k=1.7),
    "even": dict(cca_enabled=True, schedule_k=0.0),
}
ABLATION_LAMBDAS = (0.85, 1.8, 3.5)
ABLATION_SEEDS = (0, 1, 2)
PROTOCOL = dict(profile="toy", steps=20000, crop_size=64, batch_size=8, schedule_n=3)
EVEN_TOLERANCE = 1.0


@dataclass
class RunResult:
    variant: str
    lmbda: float
    seed: int
    bpp: float
    psnr: float
    shares: list[float]
    checkpoint: str = ""
    protocol: dict = field(default_factory=dict)

    @property
    def slice1_share(self) -> float:
        return self.shares[1]


def run_name(variant: str, lmbda: float, seed: int) -> str:
    return f"{variant}_l{lmbda:g}_s{seed}"


def run_config(variant: str, lmbda: float, seed: int, data_dir: str, out_dir: str,
               steps: int | None = None):
    from .train import TrainConfig

    proto = dict(PROTOCOL)
    if steps is not None:
        proto["steps"] = steps
    return TrainConfig(seed=seed, lmbda=lmbda, data_dir=data_dir,
                       checkpoint_path=os.path.join(out_dir, run_name(variant, lmbda, seed) + ".ccaw"),
                       **proto, **VARIANTS[variant])


def execute_run(variant: str, lmbda: float, seed: int, data_dir: str, heldout, out_dir: str,
                steps: int | None = None) -> RunResult:
    """Train (or reuse a finished checkpoint) and evaluate one ablation run."""
    from .checkpoint import load_checkpoint, save_checkpoint
    from .train import load_dataset, train

    cfg = run_config(variant, lmbda, seed, data_dir, out_dir, steps)
    if os.path.exists(cfg.checkpoint_path):
        model = load_checkpoint(cfg.checkpoint_path)
    else:
        model, _ = train(cfg, load_dataset(cfg.data_dir, cfg.crop_size, cfg.seed))
        save_checkpoint(model, cfg.checkpoint_path)
    point = rd_point(model, heldout, lmbda, run_name(variant, lmbda, seed))
    dist = info_distribution(model, heldout)
    protocol = {k: getattr(cfg, k) for k in PROTOCOL}
    protocol.update(cca_enabled=cfg.cca_enabled, schedule_k=cfg.schedule_k)
    return RunResult(variant, lmbda, seed, point.bpp, point.psnr, [dist.z, *dist.slices],
                     cfg.checkpoint_path, protocol)


def save_results(results: list[RunResult], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([asdict(r) for r in results], f, indent=1)


def load_results(path) -> list[RunResult]:
    with open(path, encoding="utf-8") as f:
        return [RunResult(**r) for r in json.load(f)]


def protocol_mismatches(results: list[RunResult]) -> list[str]:
    """Runs missing from the grid or trained with settings other than the protocol."""
    problems = []
    have = {(r.variant, r.lmbda, r.seed): r for r in results}
    for variant, settings in VARIANTS.items():
        for lam in ABLATION_LAMBDAS:
            for seed in ABLATION_SEEDS:
                r = have.get((variant, lam, seed))
                name = run_name(variant, lam, seed)
                if r is None:
                    problems.append(f"{name}: missing")
                    continue
                for key, want in {**PROTOCOL, **settings}.items():
                    if r.protocol.get(key) != want:
                        problems.append(f"{name}: {key}={r.protocol.get(key)!r}, want {want!r}")
    return problems


@dataclass
class Verdicts:
    share_wins: int
    share_pairs: int
    bd_cca_vs_base: float
    bd_uneven_vs_even: float

    @property
    def share_ok(self) -> bool:
        return 2 * self.share_wins > self.share_pairs

    @property
    def bd_ok(self) -> bool:
        return self.bd_cca_vs_base <= 0.0

    @property
    def even_ok(self) -> bool:
        return self.bd_uneven_vs_even <= EVEN_TOLERANCE


def _curve(results, variant, seed) -> list[RDPoint]:
    pts = [RDPoint(r.lmbda, r.bpp, r.psnr) for r in results
           if r.variant == variant and r.seed == seed]
    if len(pts) < 2:
        raise EvaluationError(f"{variant} seed {seed}: need RD points at several lambdas")
    return pts


def verdicts(results: list[RunResult]) -> Verdicts:
    by_key = {(r.variant, r.lmbda, r.seed): r for r in results}
    pairs = [(lam, s) for lam in ABLATION_LAMBDAS for s in ABLATION_SEEDS
             if ("cca", lam, s) in by_key and ("base", lam, s) in by_key]
    wins = sum(by_key["cca", lam, s].slice1_share > by_key["base", lam, s].slice1_share
               for lam, s in pairs)
    seeds = sorted({r.seed for r in results})
    # three lambdas per seed: one fewer point than a published BD curve
    n_pts = len(ABLATION_LAMBDAS)
    bd_base = [bd_rate(_curve(results, "base", s), _curve(results, "cca", s), min_points=n_pts)
               for s in seeds]
    bd_even = [bd_rate(_curve(results, "even", s), _curve(results, "cca", s), min_points=n_pts)
               for s in seeds]
    return Verdicts(wins, len(pairs), sum(bd_base) / len(bd_base), sum(bd_even) / len(bd_even))
