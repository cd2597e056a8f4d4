"""Rate, distortion, causal-context-adjustment and auxiliary losses.

All rates are in bits per source pixel.  The adjustment term is
``sum_i (major_nll_i - aux_nll_i) / pixels``: minimizing it widens the gap by
which the major model (full causal context) beats the auxiliary model (one
slice less context).  ``cca_sign=-1`` flips it to the literal
``sum_i (aux_nll_i - major_nll_i)`` form for comparison runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

LAMBDAS = (0.3, 0.85, 1.8, 3.5, 7.0, 15.0)

_LN2 = math.log(2.0)


@dataclass
class StageNLL:
    """Code lengths of one slice under the major and auxiliary models, in bits."""

    stage: int
    major_nll: Tensor
    aux_nll: Tensor
    element_count: int


@dataclass
class LossReport:
    rate_y: float
    rate_z: float
    distortion: float
    cca: float
    aux: float
    total: float
    lmbda: float

    def as_dict(self) -> dict[str, float]:
        return {"rate_y": self.rate_y, "rate_z": self.rate_z, "distortion": self.distortion,
                "cca": self.cca, "aux": self.aux, "total": self.total, "lambda": self.lmbda}


def nll_bits(likelihoods: Tensor) -> Tensor:
    """Total code length ``-sum log2 p``."""
    return T.sum_(T.log(likelihoods)) * (-1.0 / _LN2)


def rate_loss(likelihoods, num_pixels: int) -> Tensor:
    if num_pixels <= 0:
        raise ValueError("rate_loss: num_pixels must be positive")
    return nll_bits(T.as_tensor(likelihoods)) * (1.0 / num_pixels)


def distortion_mse(x, x_hat) -> Tensor:
    x, x_hat = T.as_tensor(x), T.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise T.ShapeError(f"distortion_mse: shapes {x.shape} and {x_hat.shape} differ")
    return T.mean(T.square(x_hat - x))


def _check_stages(stages, n: int | None):
    got = sorted(s.stage for s in stages)
    expect = list(range(1, (n if n is not None else len(got)) + 1))
    if got != expect:
        raise ValueError(f"stage list incomplete: got stages {got}, expected {expect}")


def cca_loss(stages: list[StageNLL], num_pixels: int, n: int | None = None,
             sign: float = 1.0) -> Tensor:
    """Negated information gain of the causal context, bits per pixel.

    The caller supplies ``aux_nll`` computed with auxiliary parameters cut off
    from the tape so that this term only reaches the encoder side.
    """
    _check_stages(stages, n)
    if num_pixels <= 0:
        raise ValueError("cca_loss: num_pixels must be positive")
    total = None
    for s in stages:
        gap = T.as_tensor(s.major_nll) - T.as_tensor(s.aux_nll)
        total = gap if total is None else total + gap
    return total * (sign / num_pixels)


def aux_loss(stages: list[StageNLL], num_pixels: int, n: int | None = None) -> Tensor:
    """Auxiliary models' own code length, bits per pixel.

    The caller supplies ``aux_nll`` computed on inputs cut off from the tape,
    so only auxiliary parameters receive gradient.  Stage 1 has no auxiliary
    model; the trainer passes a zero code length for it.
    """
    _check_stages(stages, n)
    if num_pixels <= 0:
        raise ValueError("aux_loss: num_pixels must be positive")
    total = Tensor(0.0)
    for s in stages:
        total = total + T.as_tensor(s.aux_nll)
    return total * (1.0 / num_pixels)


def total_loss(rate_y, rate_z, distortion, cca, aux, lmbda: float):
    """``lmbda * (rate_y + rate_z) + distortion + cca + aux``.

    Returns ``(total_tensor, LossReport)``; works for floats or tensors.
    """
    if not lmbda > 0:
        raise ValueError(f"lambda must be positive, got {lmbda}")
    parts = [T.as_tensor(v) for v in (rate_y, rate_z, distortion, cca, aux)]
    ry, rz, d, c, a = parts
    total = (ry + rz) * lmbda + d + c + a
    report = LossReport(rate_y=ry.item(), rate_z=rz.item(), distortion=d.item(), cca=c.item(),
                        aux=a.item(), total=total.item(), lmbda=float(lmbda))
    return total, report


def information_gain(stages: list[StageNLL], num_pixels: int) -> float:
    """Bits per pixel saved by the newest context slice, summed over stages."""
    gain = math.fsum(float(np.sum(T.as_tensor(s.aux_nll).data))
                     - float(np.sum(T.as_tensor(s.major_nll).data)) for s in stages)
    return gain / num_pixels
