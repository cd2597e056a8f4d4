"""Quality and rate measurement, BD-rate, bit-share reports and RD sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import PchipInterpolator

from .checkpoint import load_checkpoint, model_checksum
from .codec.container import Container, parse_container, serialize_container
from .network import CCAModel
from .pipeline import compress, decompress


class EvaluationError(ValueError):
    pass


def psnr(x: np.ndarray, x_hat: np.ndarray) -> float:
    """PSNR in dB for 8-bit images; ``math.inf`` when they are equal."""
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise EvaluationError(f"psnr: shapes {x.shape} and {x_hat.shape} differ")
    mse = float(np.mean((x.astype(np.float64) - x_hat.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


@dataclass(frozen=True)
class RateMeasure:
    bpp: float
    payload_bpp: float


def bpp_measure(container: Container | bytes, height: int | None = None,
                width: int | None = None) -> RateMeasure:
    """Total and payload-only bits per pixel of the image's true size."""
    if isinstance(container, (bytes, bytearray)):
        container = parse_container(bytes(container))
    h = container.height if height is None else height
    w = container.width if width is None else width
    total = len(serialize_container(container))
    return RateMeasure(8.0 * total / (h * w), 8.0 * container.payload_size / (h * w))


# ---------------------------------------------------------------------------
# Bjontegaard delta rate


@dataclass(frozen=True)
class RDPoint:
    lmbda: float
    bpp: float
    psnr: float
    model_id: str = ""

    def __post_init__(self):
        if not self.bpp > 0:
            raise EvaluationError(f"bpp must be positive, got {self.bpp}")
        if not (self.psnr > 0 or self.psnr == math.inf):
            raise EvaluationError(f"psnr must be positive, got {self.psnr}")


def _curve(points, min_points: int, which: str):
    pts = [(p.psnr, p.bpp) if isinstance(p, RDPoint) else (float(p[1]), float(p[0]))
           for p in points]
    if len(pts) < min_points:
        raise EvaluationError(f"{which} curve has {len(pts)} points, need at least {min_points}")
    pts.sort()
    q = np.array([p[0] for p in pts])
    r = np.array([p[1] for p in pts])
    if not np.all(np.isfinite(q)):
        raise EvaluationError(f"{which} curve has a non-finite PSNR")
    if np.any(np.diff(q) <= 0):
        raise EvaluationError(f"{which} curve has repeated PSNR values")
    if np.any(r <= 0):
        raise EvaluationError(f"{which} curve has a non-positive rate")
    return q, np.log(r)


def bd_rate(anchor, test, min_points: int = 4, samples: int = 1000) -> float:
    """Average rate difference of ``test`` against ``anchor`` at equal PSNR, in percent.

    Points are ``RDPoint`` objects or ``(bpp, psnr)`` pairs.  Log-rate is
    interpolated as a monotone piecewise cubic of PSNR and integrated with
    composite Simpson over the shared PSNR interval.  Negative means the
    test codec needs fewer bits.
    """
    qa, la = _curve(anchor, min_points, "anchor")
    qt, lt = _curve(test, min_points, "test")
    lo, hi = max(qa[0], qt[0]), min(qa[-1], qt[-1])
    if not hi > lo:
        raise EvaluationError(f"PSNR ranges do not overlap ([{qa[0]:.3f}, {qa[-1]:.3f}] vs "
                              f"[{qt[0]:.3f}, {qt[-1]:.3f}])")
    grid = np.linspace(lo, hi, samples + 1)
    diff = PchipInterpolator(qt, lt)(grid) - PchipInterpolator(qa, la)(grid)
    mean = simpson(diff, x=grid) / (hi - lo)
    return 100.0 * math.expm1(mean)


# ---------------------------------------------------------------------------
# per-image evaluation


@dataclass(frozen=True)
class ImageResult:
    image: str
    bpp: float
    psnr: float
    payload_bpp: float
    estimated_bits: float
    component_bits: tuple[float, ...]
    saturated: int


def evaluate_image(model: CCAModel, image: np.ndarray, name: str = "",
                   checksum: int | None = None) -> ImageResult:
    checksum = model_checksum(model) if checksum is None else checksum
    container, report = compress(model, image, checksum=checksum)
    blob = serialize_container(container)
    x_hat, _ = decompress(model, blob, checksum=checksum)
    rate = bpp_measure(container)
    return ImageResult(name, rate.bpp, psnr(image, x_hat), rate.payload_bpp,
                       report.estimated_bits,
                       (report.estimated_bits_z, *report.estimated_bits_slices),
                       report.saturated)


def evaluate_images(model: CCAModel, images, names=None) -> list[ImageResult]:
    images = list(images)
    if not images:
        raise EvaluationError("no images to evaluate")
    names = list(names) if names is not None else [f"image{i}" for i in range(len(images))]
    checksum = model_checksum(model)
    return [evaluate_image(model, img, n, checksum) for img, n in zip(images, names)]


@dataclass(frozen=True)
class InfoDistribution:
    z: float
    slices: tuple[float, ...]

    def rows(self) -> list[tuple[str, float]]:
        return [("z", self.z)] + [(f"s{i + 1}", s) for i, s in enumerate(self.slices)]

    def early_share(self) -> float:
        """Share held by the first ``ceil(n/2)`` slices."""
        return math.fsum(self.slices[:math.ceil(len(self.slices) / 2)])


def shares_from_bits(component_bits) -> InfoDistribution:
    bits = np.asarray(component_bits, dtype=np.float64)
    total = bits.sum()
    if not total > 0:
        raise EvaluationError("no payload bits to distribute")
    shares = bits / total
    return InfoDistribution(float(shares[0]), tuple(float(s) for s in shares[1:]))


def info_distribution(model: CCAModel, images) -> InfoDistribution:
    """Average per-image share of coded bits spent on ``z`` and on each slice.

    Bits are ideal code lengths under the coder's quantized CDFs, so the
    report does not depend on the container header or the checksum bytes.
    """
    results = evaluate_images(model, images)
    per_image = [shares_from_bits(r.component_bits) for r in results]
    z = math.fsum(d.z for d in per_image) / len(per_image)
    n = len(per_image[0].slices)
    slices = [math.fsum(d.slices[i] for d in per_image) / len(per_image) for i in range(n)]
    # renormalize away the rounding of the per-image averages
    total = z + math.fsum(slices)
    return InfoDistribution(z / total, tuple(s / total for s in slices))


def rd_point(model: CCAModel, images, lmbda: float, model_id: str = "") -> RDPoint:
    results = evaluate_images(model, images)
    bpp = float(np.mean([r.bpp for r in results]))
    quality = [r.psnr for r in results]
    return RDPoint(lmbda, bpp, float(np.mean(quality)), model_id)


def rd_sweep(checkpoints: dict[float, str], images, lambdas=None) -> list[RDPoint]:
    """One RD point per lambda from ``{lambda: checkpoint path}``; sorted by bpp."""
    lambdas = sorted(checkpoints) if lambdas is None else list(lambdas)
    images = list(images)
    points = []
    for lam in lambdas:
        path = checkpoints.get(lam)
        if path is None or not os.path.exists(path):
            raise EvaluationError(f"missing checkpoint for lambda={lam:g}")
        model = load_checkpoint(path)
        points.append(rd_point(model, images, lam, f"{model_checksum(model):016x}"))
    return sorted(points, key=lambda p: p.bpp)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))


def write_rd_csv(points, f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["lambda", "bpp", "psnr", "model_id"])
    for p in points:
        w.writerow([_fmt(p.lmbda), _fmt(p.bpp), _fmt(p.psnr), p.model_id])


def read_rd_csv(f) -> list[RDPoint]:
    rows = list(csv.DictReader(f))
    if rows and set(rows[0]) != {"lambda", "bpp", "psnr", "model_id"}:
        raise EvaluationError(f"not an RD csv (columns {sorted(rows[0])})")
    return [RDPoint(float(r["lambda"]), float(r["bpp"]), float(r["psnr"]), r["model_id"])
            for r in rows]


def write_info_csv(dist: InfoDistribution, f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["component", "share"])
    for name, share in dist.rows():
        w.writerow([name, _fmt(share)])


def read_info_csv(f) -> InfoDistribution:
    rows = list(csv.DictReader(f))
    got = {r["component"]: float(r["share"]) for r in rows}
    if "z" not in got:
        raise EvaluationError("info csv lacks the z row")
    n = len(got) - 1
    return InfoDistribution(got["z"], tuple(got[f"s{i + 1}"] for i in range(n)))


def write_eval_csv(results, f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["image", "bpp", "psnr"])
    for r in results:
        w.writerow([r.image, _fmt(r.bpp), _fmt(r.psnr)])


def read_eval_csv(f) -> list[tuple[str, float, float]]:
    return [(r["image"], float(r["bpp"]), float(r["psnr"])) for r in csv.DictReader(f)]


def to_csv_text(writer, payload) -> str:
    buf = io.StringIO()
    writer(payload, buf)
    return buf.getvalue()
