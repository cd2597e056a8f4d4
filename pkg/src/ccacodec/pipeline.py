"""Image <-> ``.cca`` bitstream.

The encoder replays the decoder: every entropy-network input at stage ``i``
is built from the hyper features of the decoded ``z`` and from slices that
went through residual rounding and LRP exactly as the decoder will redo
them, so both sides derive the same scales and hence the same CDFs.

Scales are snapped to a fixed geometric grid before a CDF is chosen.  The
mean never reaches the coder (symbols are residuals ``round(y - mu)``), so
the decoded symbols depend on the network only through that grid index.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from . import tensor as T
from .checkpoint import model_checksum
from .codec.cdf import (RESIDUAL_CLAMP, ScaleTable, default_scale_table, factorized_tables,
                        uniform_cdf)
from .codec.container import Container, ContainerError, parse_container
from .codec.rangecoder import CDFTable, CorruptStreamError, decode_symbols, encode_symbols
from .imageio import from_nchw, to_nchw
from .network import CCAModel
from .tensor import Tensor

# two stride-2 stages in the hyper analysis on top of the 16x latent downsampling
PAD_MULTIPLE = 64
MAX_DIMENSION = 1 << 15
_CRC_BYTES = 4


class ImageSizeError(ValueError):
    pass


class ModelMismatchError(ContainerError):
    pass


@dataclass
class CodingReport:
    """Side information from one compress or decompress call."""

    height: int
    width: int
    z_symbols: np.ndarray
    slice_symbols: list[np.ndarray]
    y_hat: list[np.ndarray]
    estimated_bits_z: float
    estimated_bits_slices: list[float]
    saturated: int = 0
    crc: int = 0
    stage_inputs: list[np.ndarray] = field(default_factory=list)

    @property
    def estimated_bits(self) -> float:
        """Ideal code length of every coded symbol, the checksum bytes included."""
        return self.estimated_bits_z + sum(self.estimated_bits_slices) + 8 * _CRC_BYTES


def pad_image(img: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    h, w = img.shape[:2]
    ph, pw = -h % multiple, -w % multiple
    if not ph and not pw:
        return img
    mode = "reflect" if min(h, w) > 1 else "edge"
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode=mode)


def _check_image(img: np.ndarray):
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ImageSizeError(f"expected an HxWx3 uint8 image, got {img.dtype} {img.shape}")
    h, w = img.shape[:2]
    if h < 1 or w < 1 or h > MAX_DIMENSION or w > MAX_DIMENSION:
        raise ImageSizeError(f"image {h}x{w} outside 1..{MAX_DIMENSION} per side")


class _ZModel:
    """Per-channel hyperlatent CDFs, offsets -clamp..clamp, plus a byte table for the CRC."""

    def __init__(self, model: CCAModel, clamp: int = RESIDUAL_CLAMP):
        dens = model.density
        c = dens.channels
        grid = np.arange(-clamp, clamp + 1, dtype=np.float64)
        mass = dens.interval_mass(grid)
        edges = np.broadcast_to(np.array([-clamp - 0.5, clamp + 0.5]), (c, 2))
        logits = dens.logits(Tensor(np.ascontiguousarray(edges)[:, None, :])).data[:, 0, :]
        lower, upper = special.expit(logits[:, 0]), special.expit(-logits[:, 1])
        cum = factorized_tables(mass, lower, upper)
        byte = uniform_cdf(256).counts.astype(np.int64)
        width = max(cum.shape[1], byte.size)
        cum = np.vstack([np.pad(cum, ((0, 0), (0, width - cum.shape[1])), constant_values=1 << 16),
                         np.pad(byte, (0, width - byte.size), constant_values=1 << 16)])
        nsym = np.array([2 * clamp + 1] * c + [256], dtype=np.int64)
        offsets = np.array([-clamp] * c + [0], dtype=np.int64)
        self.table = CDFTable(cum, nsym, offsets)
        self.channels = c
        self.clamp = clamp
        self.crc_row = c


def _z_rows(shape) -> np.ndarray:
    _, c, h, w = shape
    return np.repeat(np.arange(c, dtype=np.int64), h * w)


def _crc(z_symbols: np.ndarray, slices: list[np.ndarray]) -> int:
    crc = 0
    for arr in (z_symbols, *slices):
        crc = zlib.crc32(np.asarray(arr, dtype=">i2").tobytes(), crc)
    return crc


@lru_cache(maxsize=1)
def _residual_tables() -> tuple[ScaleTable, CDFTable]:
    scales = default_scale_table()
    return scales, CDFTable(scales.cum, scales.nsym, scales.offsets)


def _stage_tables(sigma: np.ndarray) -> tuple[CDFTable, np.ndarray]:
    scales, table = _residual_tables()
    return table, scales.index(sigma.ravel())


def _replay(model: CCAModel, hyper: Tensor, residual_source, report: CodingReport):
    """Run stages 1..n; ``residual_source(i, mu, rows, table)`` supplies the integer residuals."""
    sched = model.schedule
    decoded: list[Tensor] = []
    for i in range(1, sched.n + 1):
        params = model.stage_params(i, hyper, decoded)
        mu = params.mu.data
        table, rows = _stage_tables(params.sigma.data)
        residual = residual_source(i, mu, rows, table).reshape(mu.shape)
        y_hat = residual + mu
        report.y_hat.append(y_hat)
        decoded.append(model.lrp_refine(i, hyper, decoded, Tensor(y_hat)))
        report.stage_inputs.append(decoded[-1].data)
    return decoded


def compress(model: CCAModel, image: np.ndarray, lambda_index: int = 0,
             checksum: int | None = None) -> tuple[Container, CodingReport]:
    _check_image(image)
    h, w = image.shape[:2]
    x = Tensor(to_nchw(pad_image(image)))
    y = model.analysis(x)
    z = model.hyper_analysis(y)
    zm = _ZModel(model)
    z_raw = np.rint(z.data)
    z_sym = np.clip(z_raw, -zm.clamp, zm.clamp).astype(np.int64)
    saturated = int(np.count_nonzero(z_sym != z_raw))
    hyper = model.hyper_synthesis(Tensor(z_sym.astype(np.float64)))

    report = CodingReport(h, w, z_sym, [], [], 0.0, [])
    y_slices = np.split(y.data, np.cumsum(model.schedule.counts)[:-1], axis=1)
    coded: list[tuple[np.ndarray, np.ndarray, CDFTable]] = []

    def residuals(i, mu, rows, table):
        nonlocal saturated
        r = np.rint(y_slices[i - 1].ravel() - mu.ravel())
        lo = table.offsets[rows]
        hi = lo + table.nsym[rows] - 1
        clipped = np.clip(r, lo, hi).astype(np.int64)
        saturated += int(np.count_nonzero(clipped != r))
        coded.append((clipped, rows, table))
        return clipped.astype(np.float64)

    _replay(model, hyper, residuals, report)
    report.slice_symbols = [c[0] for c in coded]
    report.saturated = saturated
    report.crc = _crc(z_sym, report.slice_symbols)

    crc_bytes = np.frombuffer(report.crc.to_bytes(_CRC_BYTES, "big"), dtype=np.uint8)
    z_all = np.concatenate([z_sym.ravel(), crc_bytes.astype(np.int64)])
    z_rows = np.concatenate([_z_rows(z_sym.shape), np.full(_CRC_BYTES, zm.crc_row)])
    report.estimated_bits_z = float(np.sum(zm.table.code_lengths(z_all[:-_CRC_BYTES],
                                                                 z_rows[:-_CRC_BYTES])))
    z_payload = encode_symbols(z_all, z_rows, zm.table)
    payloads = []
    for sym, rows, table in coded:
        report.estimated_bits_slices.append(float(np.sum(table.code_lengths(sym, rows))))
        payloads.append(encode_symbols(sym, rows, table))
    if checksum is None:
        checksum = model_checksum(model)
    container = Container(height=h, width=w, model_checksum=checksum, z_payload=z_payload,
                          slice_payloads=payloads, profile_id=model.config.profile_id,
                          lambda_index=lambda_index)
    return container, report


def decompress(model: CCAModel, container: Container | bytes,
               checksum: int | None = None) -> tuple[np.ndarray, CodingReport]:
    """Decode to an HxWx3 uint8 image; raises on any mismatch or corruption."""
    if checksum is None:
        checksum = model_checksum(model)
    if isinstance(container, (bytes, bytearray, memoryview)):
        container = parse_container(bytes(container))
    if container.model_checksum != checksum:
        raise ModelMismatchError(f"container was written for model {container.model_checksum:016x}"
                                 f", loaded model is {checksum:016x}")
    if container.profile_id != model.config.profile_id:
        raise ModelMismatchError(f"container profile {container.profile_id} does not match "
                                 f"model profile {model.config.profile_id}")
    n = model.schedule.n
    if len(container.slice_payloads) != n:
        raise ContainerError(f"container has {len(container.slice_payloads)} slices, model "
                             f"codes {n}")
    h, w = container.height, container.width
    if not (1 <= h <= MAX_DIMENSION and 1 <= w <= MAX_DIMENSION):
        raise ImageSizeError(f"container dimensions {h}x{w} out of range")
    hp, wp = h + (-h % PAD_MULTIPLE), w + (-w % PAD_MULTIPLE)
    zm = _ZModel(model)
    z_shape = (1, zm.channels, hp // PAD_MULTIPLE, wp // PAD_MULTIPLE)
    z_rows = np.concatenate([_z_rows(z_shape), np.full(_CRC_BYTES, zm.crc_row)])
    z_all = decode_symbols(container.z_payload, z_rows, zm.table)
    z_sym = z_all[:-_CRC_BYTES].reshape(z_shape)
    crc = int.from_bytes(bytes(z_all[-_CRC_BYTES:].astype(np.uint8)), "big")
    hyper = model.hyper_synthesis(Tensor(z_sym.astype(np.float64)))

    report = CodingReport(h, w, z_sym, [], [], 0.0, [], crc=crc)

    def residuals(i, mu, rows, table):
        sym = decode_symbols(container.slice_payloads[i - 1], rows, table)
        report.slice_symbols.append(sym)
        return sym.astype(np.float64)

    decoded = _replay(model, hyper, residuals, report)
    if _crc(z_sym, report.slice_symbols) != crc:
        raise CorruptStreamError("symbol checksum mismatch: payload corrupted")
    x_hat = model.synthesis(T.concat(decoded, axis=1))
    return from_nchw(x_hat.data)[:h, :w], report


def reconstruct(model: CCAModel, image: np.ndarray) -> np.ndarray:
    """What ``decompress(compress(image))`` returns, without entropy coding."""
    container, report = compress(model, image)
    decoded = [Tensor(d) for d in report.stage_inputs]
    x_hat = model.synthesis(T.concat(decoded, axis=1))
    return from_nchw(x_hat.data)[:image.shape[0], :image.shape[1]]
