"""Range coding of integer symbols under quantized CDFs.

32-bit low/range with carry propagation through a cached byte, 16-bit
probability precision.  The stream omits the encoder's always-zero first
byte and ends with a single flush byte.  The decoder reads past the end as
zeros, so the flush only has to place a multiple of 2^24 inside the final
range, which always exists; the stream is never shorter than the ideal code
length and at most about one byte longer.  Decoding
re-encodes its output and rejects any stream that is not the canonical
encoding, so truncation and most corruption surface as errors.

``rc_encode`` additionally codes a CRC32 of the symbols as four uniform
bytes after them, so a corrupted stream that happens to be canonical is
still rejected.  ``encode_symbols`` is the bare coder; the image pipeline
uses it with one checksum shared by all of its streams.
"""

from __future__ import annotations

import zlib

import numpy as np

from .. import kernels
from .cdf import PRECISION, QuantizedCDF, uniform_cdf

CHECK_BYTES = 4


class CodecError(ValueError):
    pass


class SymbolRangeError(CodecError):
    pass


class CorruptStreamError(CodecError):
    pass


class CDFTable:
    """Several quantized CDFs packed into one array for the coding kernels."""

    def __init__(self, cum: np.ndarray, nsym: np.ndarray, offsets: np.ndarray):
        self.cum = np.ascontiguousarray(cum, dtype=np.uint32)
        self.nsym = np.ascontiguousarray(nsym, dtype=np.int64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        if self.cum.ndim != 2 or self.cum.shape[0] != self.nsym.size:
            raise CodecError("table shapes disagree")
        if np.any(self.cum[np.arange(self.nsym.size), self.nsym] != 1 << PRECISION):
            raise CodecError(f"every table must total {1 << PRECISION}")

    @classmethod
    def from_cdfs(cls, cdfs: list[QuantizedCDF]) -> tuple["CDFTable", np.ndarray]:
        """Pack ``cdfs`` (repeats by identity are shared); returns the table and per-symbol rows."""
        rows: dict[int, int] = {}
        unique: list[QuantizedCDF] = []
        index = np.empty(len(cdfs), dtype=np.int64)
        for k, c in enumerate(cdfs):
            if c.precision != PRECISION:
                raise CodecError(f"only {PRECISION}-bit CDFs are supported")
            row = rows.get(id(c))
            if row is None:
                row = rows[id(c)] = len(unique)
                unique.append(c)
            index[k] = row
        width = max((c.counts.size for c in unique), default=2)
        cum = np.full((max(len(unique), 1), width), 1 << PRECISION, dtype=np.uint32)
        nsym = np.ones(max(len(unique), 1), dtype=np.int64)
        offsets = np.zeros(max(len(unique), 1), dtype=np.int64)
        cum[:, 0] = 0
        for i, c in enumerate(unique):
            cum[i, :c.counts.size] = c.counts
            nsym[i] = c.num_symbols
            offsets[i] = c.offset
        return cls(cum, nsym, offsets), index

    def code_lengths(self, symbols, rows) -> np.ndarray:
        """Ideal bits per symbol, ``P - log2 freq``."""
        idx = np.asarray(symbols, dtype=np.int64) - self.offsets[rows]
        cum = self.cum.astype(np.int64)
        freq = cum[rows, idx + 1] - cum[rows, idx]
        return PRECISION - np.log2(freq)


def encode_symbols(symbols, rows, table: CDFTable) -> bytes:
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.int64).ravel())
    if symbols.shape != rows.shape:
        raise CodecError(f"{symbols.size} symbols but {rows.size} CDF references")
    if rows.size and (rows.min() < 0 or rows.max() >= table.nsym.size):
        raise CodecError("CDF reference out of range")
    idx = symbols - table.offsets[rows]
    bad = (idx < 0) | (idx >= table.nsym[rows])
    if np.any(bad):
        k = int(np.argmax(bad))
        lo = int(table.offsets[rows[k]])
        raise SymbolRangeError(f"symbol {int(symbols[k])} at position {k} outside "
                               f"[{lo}, {lo + int(table.nsym[rows[k]]) - 1}]")
    return kernels.rc_encode(np.ascontiguousarray(idx), rows, table.cum)


def decode_symbols(data: bytes, rows, table: CDFTable) -> np.ndarray:
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.int64).ravel())
    if rows.size and (rows.min() < 0 or rows.max() >= table.nsym.size):
        raise CodecError("CDF reference out of range")
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    try:
        idx = kernels.rc_decode(buf, rows, table.cum, table.nsym)
    except ValueError as exc:
        raise CorruptStreamError(str(exc)) from None
    if kernels.rc_encode(idx, rows, table.cum) != bytes(data):
        raise CorruptStreamError("stream is not the canonical encoding of its symbols "
                                 "(truncated or corrupted)")
    return idx + table.offsets[rows]


def symbol_crc(symbols) -> int:
    return zlib.crc32(np.asarray(symbols, dtype=">i8").tobytes())


def _with_check(cdfs) -> tuple[CDFTable, np.ndarray]:
    byte = uniform_cdf(256)
    return CDFTable.from_cdfs(list(cdfs) + [byte] * CHECK_BYTES)


def rc_encode(symbols, cdfs: list[QuantizedCDF]) -> bytes:
    """Encode ``symbols[k]`` under ``cdfs[k]``; symbols carry each CDF's offset."""
    if len(symbols) != len(cdfs):
        raise CodecError(f"{len(symbols)} symbols but {len(cdfs)} CDFs")
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    table, rows = _with_check(cdfs)
    check = np.frombuffer(symbol_crc(symbols).to_bytes(CHECK_BYTES, "big"), dtype=np.uint8)
    return encode_symbols(np.concatenate([symbols, check.astype(np.int64)]), rows, table)


def rc_decode(data: bytes, cdfs: list[QuantizedCDF], count: int | None = None) -> list[int]:
    """Inverse of ``rc_encode``; raises ``CorruptStreamError`` rather than return wrong symbols."""
    if count is not None and count != len(cdfs):
        raise CodecError(f"count {count} does not match {len(cdfs)} CDFs")
    table, rows = _with_check(cdfs)
    out = decode_symbols(data, rows, table)
    n = len(cdfs)
    got = int.from_bytes(bytes(out[n:].astype(np.uint8)), "big")
    if got != symbol_crc(out[:n]):
        raise CorruptStreamError("symbol checksum mismatch (corrupted stream)")
    return out[:n].tolist()
