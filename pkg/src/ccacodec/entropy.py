"""Latent probability models, quantizers and the channel grouping schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import tensor as T
from .tensor import Tensor, register_op

SIGMA_FLOOR = 0.04
LIKELIHOOD_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# grouping schedule


@dataclass(frozen=True)
class GroupSchedule:
    n: int
    k: float
    M: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != self.n or sum(self.counts) != self.M or min(self.counts) < 1:
            raise ValueError(f"inconsistent schedule {self.counts} for n={self.n}, M={self.M}")

    @property
    def offsets(self) -> list[int]:
        """Channel index where each slice starts, plus the total at the end."""
        out = [0]
        for c in self.counts:
            out.append(out[-1] + c)
        return out

    def context_channels(self, stage: int, lag: int = 0) -> int:
        """Channels of decoded context seen by 1-based ``stage`` (``lag=1`` for aux)."""
        return sum(self.counts[:max(stage - 1 - lag, 0)])


def build_schedule(M: int, n: int, k: float) -> GroupSchedule:
    """Split ``M`` channels into ``n`` slices with sizes proportional to ``i**k``.

    Integerization is largest-remainder (ties go to the later stage); any
    stage left empty takes one channel from the earliest largest stage.
    """
    if n < 2:
        raise ValueError(f"need at least 2 stages, got n={n}")
    if k < 0:
        raise ValueError(f"steepness k must be >= 0, got {k}")
    if M < n:
        raise ValueError(f"cannot split {M} channels into {n} non-empty slices")
    weights = [float(i) ** k for i in range(1, n + 1)]
    total = math.fsum(weights)
    raw = [M * w / total for w in weights]
    counts = [int(math.floor(r)) for r in raw]
    short = M - sum(counts)
    order = sorted(range(n), key=lambda i: (-(raw[i] - counts[i]), -i))
    for i in order[:short]:
        counts[i] += 1
    for i in range(n):
        while counts[i] < 1:
            donor = max(range(n), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return GroupSchedule(n=n, k=float(k), M=M, counts=tuple(counts))


# ---------------------------------------------------------------------------
# quantization


def quantize_train(y: Tensor, seed: int, index: int = 0) -> Tensor:
    """Additive U(-1/2, 1/2) noise proxy; identity gradient."""
    return T.add_uniform_noise(y, seed, index)


def quantize_infer(y, mu) -> tuple[np.ndarray, np.ndarray]:
    """Residual rounding: returns ``(round(y - mu), round(y - mu) + mu)``."""
    y = np.asarray(getattr(y, "data", y), dtype=np.float64)
    mu = np.asarray(getattr(mu, "data", mu), dtype=np.float64)
    if y.shape != mu.shape:
        raise T.ShapeError(f"quantize_infer: y {y.shape} and mu {mu.shape} differ")
    residuals = np.round(y - mu)
    return residuals.astype(np.int64), residuals + mu


# ---------------------------------------------------------------------------
# Gaussian conditional


@dataclass
class EntropyParams:
    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise T.ShapeError(f"EntropyParams: mu {self.mu.shape} vs sigma {self.sigma.shape}")


def sigma_from_raw(raw: Tensor, floor: float = SIGMA_FLOOR) -> Tensor:
    return T.softplus(raw) + floor


_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pdf(t):
    return _INV_SQRT2PI * np.exp(-0.5 * t * t)


@register_op("gaussian_mass")
def _gaussian_mass(v, mu, sigma):
    # evaluated on the upper side of the mean so the tail difference keeps precision
    d = np.abs(v - mu)
    a = (0.5 - d) / sigma
    b = (-0.5 - d) / sigma
    p = special.ndtr(a) - special.ndtr(b)

    def bwd(g):
        pa, pb = _pdf(a), _pdf(b)
        dd = (pb - pa) / sigma
        s = np.sign(v - mu)
        gv = g * dd * s
        gs = g * (b * pb - a * pa) / sigma
        return gv, -gv, gs

    return p, bwd


def gaussian_likelihood(value, params: EntropyParams,
                        floor: float = LIKELIHOOD_FLOOR) -> Tensor:
    """Mass of N(mu, sigma^2) on the unit interval around ``value``."""
    value = T.as_tensor(value)
    if value.shape != params.mu.shape:
        raise T.ShapeError(f"gaussian_likelihood: value {value.shape} vs params {params.mu.shape}")
    p = T.forward_op("gaussian_mass", (value, params.mu, params.sigma))
    return T.lower_bound(p, floor)


# ---------------------------------------------------------------------------
# factorized density


class FactorizedDensity:
    """Per-channel learned monotone CDF built from a chain of positive matrices.

    ``c(x) = sigmoid(f(x))`` where every stage applies a softplus-positive
    matrix, a bias and (except the last) a ``tanh``-bounded residual
    nonlinearity, so ``f`` is strictly increasing in ``x``.
    """

    def __init__(self, channels: int, filters=(3, 3, 3), init_scale: float = 8.0,
                 rng: np.random.Generator | None = None, prefix: str = "density"):
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.filters = tuple(filters)
        widths = (1,) + self.filters + (1,)
        scale = init_scale ** (1.0 / (len(self.filters) + 1))
        self.matrices: list[Tensor] = []
        self.biases: list[Tensor] = []
        self.factors: list[Tensor] = []
        for i in range(len(self.filters) + 1):
            init = math.log(math.expm1(1.0 / scale / widths[i + 1]))
            self.matrices.append(Tensor(np.full((channels, widths[i + 1], widths[i]), init),
                                        requires_grad=True, name=f"{prefix}.matrix{i}"))
            self.biases.append(Tensor(rng.uniform(-0.5, 0.5, (channels, widths[i + 1], 1)),
                                      requires_grad=True, name=f"{prefix}.bias{i}"))
            if i < len(self.filters):
                self.factors.append(Tensor(np.zeros((channels, widths[i + 1], 1)),
                                           requires_grad=True, name=f"{prefix}.factor{i}"))

    def parameters(self) -> list[Tensor]:
        out = []
        for i, m in enumerate(self.matrices):
            out += [m, self.biases[i]]
            if i < len(self.factors):
                out.append(self.factors[i])
        return out

    def logits(self, x: Tensor, frozen: bool = False) -> Tensor:
        """``x`` has shape (channels, 1, N); returns logits of the same shape."""
        wrap = T.detach if frozen else (lambda t: t)
        for i, m in enumerate(self.matrices):
            x = T.matmul(T.softplus(wrap(m)), x) + wrap(self.biases[i])
            if i < len(self.factors):
                x = x + T.tanh(wrap(self.factors[i])) * T.tanh(x)
        return x

    def cdf(self, x) -> np.ndarray:
        """Numeric CDF per channel; ``x`` is (channels, N) or broadcastable (N,)."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, (self.channels, arr.size))
        return special.expit(self.logits(Tensor(arr[:, None, :])).data[:, 0, :])

    def interval_mass(self, centers) -> np.ndarray:
        """``c(v + 1/2) - c(v - 1/2)`` per channel on a (channels, N) grid, no floor."""
        arr = np.asarray(centers, dtype=np.float64)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, (self.channels, arr.size))
        lo = self.logits(Tensor(arr[:, None, :] - 0.5)).data
        hi = self.logits(Tensor(arr[:, None, :] + 0.5)).data
        s = -np.sign(lo + hi)
        return np.abs(special.expit(s * hi) - special.expit(s * lo))[:, 0, :]


def factorized_likelihood(value, model: FactorizedDensity,
                          floor: float = LIKELIHOOD_FLOOR) -> Tensor:
    """Per-element interval mass of an NCHW tensor under the channel CDFs."""
    value = T.as_tensor(value)
    if value.ndim != 4 or value.shape[1] != model.channels:
        raise T.ShapeError(f"factorized_likelihood: value {value.shape} vs "
                           f"{model.channels} channels")
    n, c, h, w = value.shape
    # (N, C, H, W) -> (C, 1, N*H*W)
    flat = T.reshape(_to_channel_major(value), (c, 1, n * h * w))
    lower = model.logits(flat - 0.5)
    upper = model.logits(flat + 0.5)
    sign = -np.sign(lower.data + upper.data)
    p = T.absolute(T.sigmoid(upper * sign) - T.sigmoid(lower * sign))
    p = _from_channel_major(T.reshape(p, (c, n, h, w)))
    return T.lower_bound(p, floor)


@register_op("swap_nc")
def _swap_nc(a):
    return np.ascontiguousarray(a.swapaxes(0, 1)), \
        lambda g: (np.ascontiguousarray(g.swapaxes(0, 1)),)


def _to_channel_major(x: Tensor) -> Tensor:
    return T.forward_op("swap_nc", (x,))


_from_channel_major = _to_channel_major
