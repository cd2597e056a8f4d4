"""Integer CDFs for the range coder.

Everything that decides a count goes through IEEE basic arithmetic only
(``+ - * /``, ``floor``, ``ldexp``), so two machines that agree on the input
floats build identical tables.  The normal CDF uses a Chebyshev-fitted
``erfc`` (fractional error below 1.2e-7) on top of a hand-rolled ``exp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PRECISION = 16
RESIDUAL_CLAMP = 127
# support half-width in standard deviations
SUPPORT_SIGMAS = 5.0


class CDFError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuantizedCDF:
    """Cumulative counts ``c_0 = 0 <= ... <= c_S = 2**precision`` plus symbol offset."""

    counts: np.ndarray
    offset: int = 0
    precision: int = PRECISION

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.uint32)
        if c.ndim != 1 or c.size < 3:
            raise CDFError("a CDF needs at least two symbols")
        if c[0] != 0 or int(c[-1]) != 1 << self.precision:
            raise CDFError(f"CDF must run from 0 to {1 << self.precision}")
        if np.any(np.diff(c.astype(np.int64)) < 1):
            raise CDFError("every symbol needs a count of at least 1")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def num_symbols(self) -> int:
        return self.counts.size - 1

    @property
    def freqs(self) -> np.ndarray:
        return np.diff(self.counts.astype(np.int64))

    def __eq__(self, other):
        return (isinstance(other, QuantizedCDF) and self.offset == other.offset
                and self.precision == other.precision
                and np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash((self.offset, self.precision, self.counts.tobytes()))

    def bits(self, symbol: int) -> float:
        """Ideal code length of ``symbol`` (offset already applied by the caller)."""
        return self.precision - math.log2(int(self.freqs[symbol - self.offset]))


# ---------------------------------------------------------------------------
# deterministic transcendental functions

_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_INV_LN2 = 1.44269504088896338700e+00
_EXP_TERMS = tuple(1.0 / math.factorial(k) for k in range(14))


def det_exp(x):
    """``exp`` from basic operations; about 1 ulp accurate for |x| < 700."""
    x = np.asarray(x, dtype=np.float64)
    x = np.clip(x, -745.0, 709.0)
    k = np.floor(x * _INV_LN2 + 0.5)
    # Cody-Waite reduction, |r| <= ln2/2
    r = (x - k * _LN2_HI) - k * _LN2_LO
    acc = np.full_like(r, _EXP_TERMS[-1])
    for c in reversed(_EXP_TERMS[:-1]):
        acc = acc * r + c
    return np.ldexp(acc, k.astype(np.int32))


def det_erfc(x):
    x = np.asarray(x, dtype=np.float64)
    z = np.abs(x)
    t = 1.0 / (1.0 + 0.5 * z)
    poly = -z * z - 1.26551223 + t * (1.00002368 + t * (0.37409196 + t * (0.09678418 + t * (
        -0.18628806 + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (
            -0.82215223 + t * 0.17087277))))))))
    ans = t * det_exp(poly)
    return np.where(x >= 0.0, ans, 2.0 - ans)


_INV_SQRT2 = 0.70710678118654752440


def det_normal_sf(x):
    """Upper tail ``1 - Phi(x)``; accurate in relative terms for large ``x``."""
    return 0.5 * det_erfc(np.asarray(x, dtype=np.float64) * _INV_SQRT2)


def det_normal_cdf(x):
    return det_normal_sf(-np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# quantization


def _quantize_rows(pmf: np.ndarray, precision: int) -> np.ndarray:
    """Frequencies for each row of ``pmf``: rounded, floored at 1, fixed up on the largest bin.

    When several bins tie for largest the correction is shared between them
    (leftover counts go to the earliest), so symmetric inputs stay symmetric
    within one count.
    """
    total = 1 << precision
    freq = np.maximum(np.rint(pmf * total), 1.0).astype(np.int64)
    delta = total - freq.sum(axis=1)
    top = freq == freq.max(axis=1, keepdims=True)
    ties = top.sum(axis=1)
    share = np.floor_divide(delta, ties)
    rank = np.cumsum(top, axis=1) - 1
    freq += top * (share[:, None] + (rank < (delta - share * ties)[:, None]))
    bad = np.nonzero(np.any(freq < 1, axis=1))[0]
    # only reachable when almost every bin was floored; fall back to a fair spread
    for i in bad:
        freq[i] = _spread(pmf[i], total)
    return freq


def _spread(p: np.ndarray, total: int) -> np.ndarray:
    n = p.size
    if n > total:
        raise CDFError(f"{n} symbols do not fit in {total} counts")
    raw = p * (total - n)
    f = np.floor(raw).astype(np.int64)
    short = total - n - int(f.sum())
    order = np.argsort(-(raw - f), kind="stable")
    f[order[:short]] += 1
    return f + 1


def _check_pmf(p: np.ndarray):
    if p.shape[-1] < 2:
        raise CDFError("pmf needs at least two entries")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise CDFError("pmf entries must be finite and non-negative")
    err = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(err > 1e-6):
        raise CDFError(f"pmf sums to {1.0 + float(np.max(err)):.9g}, not 1 within 1e-6")


def quantize_cdf(pmf, precision: int = PRECISION, offset: int = 0) -> QuantizedCDF:
    p = np.asarray(pmf, dtype=np.float64)
    if p.ndim != 1:
        raise CDFError("quantize_cdf expects a 1-D pmf")
    _check_pmf(p)
    freq = _quantize_rows(p[None, :], precision)[0]
    return QuantizedCDF(np.concatenate([[0], np.cumsum(freq)]), offset, precision)


def quantize_cdf_rows(pmf: np.ndarray, precision: int = PRECISION) -> np.ndarray:
    """Vectorized ``quantize_cdf`` for a 2-D pmf; returns cumulative counts (rows, S+1)."""
    p = np.asarray(pmf, dtype=np.float64)
    _check_pmf(p)
    freq = _quantize_rows(p, precision)
    cum = np.zeros((p.shape[0], p.shape[1] + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cum[:, 1:])
    return cum


# ---------------------------------------------------------------------------
# Gaussian residual tables


def support_radius(sigma: float, clamp: int = RESIDUAL_CLAMP) -> int:
    return int(min(clamp, max(1, math.ceil(SUPPORT_SIGMAS * sigma))))


def gaussian_residual_pmf(sigma: float, radius: int) -> np.ndarray:
    """Interval masses of N(0, sigma^2) on integers ``-radius..radius``, tails folded in."""
    r = np.arange(0, radius + 1, dtype=np.float64)
    # upper-tail differences on |r| keep the pmf exactly symmetric
    upper = det_normal_sf((r + 0.5) / sigma)
    lower = det_normal_sf((r - 0.5) / sigma)
    half = lower - upper
    half[0] = 1.0 - 2.0 * upper[0]
    half[-1] = lower[-1]
    return np.concatenate([half[:0:-1], half])


def build_symbol_cdf(sigma: float, clamp: int = RESIDUAL_CLAMP,
                     precision: int = PRECISION) -> QuantizedCDF:
    """Quantized CDF of the residual ``round(y - mu)`` under N(0, sigma^2).

    The support shrinks with ``sigma`` (``ceil(5 sigma)``, at least 1, at
    most ``clamp``) so that narrow distributions are not taxed by the
    one-count minimum of far-away bins.
    """
    if not sigma > 0:
        raise CDFError(f"sigma must be positive, got {sigma}")
    radius = support_radius(sigma, clamp)
    pmf = gaussian_residual_pmf(float(sigma), radius)
    return quantize_cdf(pmf, precision, offset=-radius)


class ScaleTable:
    """Geometric grid of scales with one prebuilt residual CDF per level.

    Scales are snapped to the nearest level in the log domain; the boundaries
    are computed with ``det_exp`` so the snapping agrees across machines.
    """

    def __init__(self, sigma_min: float = 0.04, sigma_max: float = 64.0, steps_per_octave: int = 16,
                 clamp: int = RESIDUAL_CLAMP, precision: int = PRECISION):
        self.steps_per_octave = steps_per_octave
        count = int(math.ceil(math.log2(sigma_max / sigma_min) * steps_per_octave)) + 1
        j = np.arange(count, dtype=np.float64)
        ln2 = _LN2_HI + _LN2_LO
        self.levels = sigma_min * det_exp(j * (ln2 / steps_per_octave))
        self.bounds = sigma_min * det_exp((j[:-1] + 0.5) * (ln2 / steps_per_octave))
        self.cdfs = [build_symbol_cdf(float(s), clamp, precision) for s in self.levels]
        width = max(c.num_symbols for c in self.cdfs) + 1
        self.cum = np.full((count, width), 1 << precision, dtype=np.uint32)
        for i, c in enumerate(self.cdfs):
            self.cum[i, :c.counts.size] = c.counts
        self.nsym = np.array([c.num_symbols for c in self.cdfs], dtype=np.int64)
        self.offsets = np.array([c.offset for c in self.cdfs], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.cdfs)

    def index(self, sigma) -> np.ndarray:
        return np.searchsorted(self.bounds, np.asarray(sigma, dtype=np.float64), side="right")


@lru_cache(maxsize=4)
def default_scale_table(clamp: int = RESIDUAL_CLAMP, precision: int = PRECISION) -> ScaleTable:
    return ScaleTable(clamp=clamp, precision=precision)


def uniform_cdf(num_symbols: int, precision: int = PRECISION) -> QuantizedCDF:
    return quantize_cdf(np.full(num_symbols, 1.0 / num_symbols), precision)


def factorized_tables(interval_mass, lower_tail, upper_tail,
                      precision: int = PRECISION) -> np.ndarray:
    """Cumulative counts for per-channel factorized pmfs over ``-clamp..clamp``.

    ``interval_mass`` is (channels, 2*clamp+1); the tails below and above the
    grid are folded into the edge bins before quantization.
    """
    p = np.array(interval_mass, dtype=np.float64)
    p[:, 0] += np.asarray(lower_tail, dtype=np.float64)
    p[:, -1] += np.asarray(upper_tail, dtype=np.float64)
    # tolerate the density model's own rounding before quantization
    p /= p.sum(axis=1, keepdims=True)
    return quantize_cdf_rows(p, precision)
