"""Pure-Python twin of the compiled kernels in ``_ccore``.

Patch extraction uses numpy strides; the range coder is a direct
transcription of the compiled loop and produces identical bytes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_TOP = 1 << 24
_PREC = 16
_TOTAL = 1 << _PREC
_MASK32 = 0xFFFFFFFF


def im2col(xp, kh, kw, stride, ho, wo):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    # rows ordered (n, h, w); columns ordered (c, i, j)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols, shape, kh, kw, stride, ho, wo):
    n, c = shape[:2]
    out = np.zeros(shape, dtype=np.float64)
    blocks = np.ascontiguousarray(cols.reshape(n, ho, wo, c, kh, kw).transpose(4, 5, 0, 3, 1, 2))
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + hs:stride, j:j + ws:stride] += blocks[i, j]
    return out


def rc_encode(symbols, tables, cum):
    out = bytearray()
    low, rng = 0, _MASK32
    cache, cache_size = 0, 1

    def shift_low():
        nonlocal low, cache, cache_size
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            temp = cache
            while True:
                out.append((temp + carry) & 0xFF)
                temp = 0xFF
                cache_size -= 1
                if cache_size == 0:
                    break
            cache = (low >> 24) & 0xFF
        cache_size += 1
        low = (low & 0x00FFFFFF) << 8

    rows = cum.tolist()
    for s, t in zip(np.asarray(symbols).tolist(), np.asarray(tables).tolist()):
        row = rows[t]
        start = row[s]
        r = rng >> _PREC
        low += r * start
        rng = r * (row[s + 1] - start)
        while rng < _TOP:
            rng <<= 8
            shift_low()
    # one byte: zeros are read past the end and rng >= _TOP
    low = (low + _TOP - 1) & ~(_TOP - 1)
    shift_low()
    shift_low()
    return bytes(out[1:])


def rc_decode(data, tables, cum, nsym):
    data = bytes(data)
    size = len(data)
    rows = cum.tolist()
    nsym = np.asarray(nsym).tolist()
    tables = np.asarray(tables).tolist()
    pos = 4
    code = int.from_bytes(data[:4].ljust(4, b"\x00"), "big")
    rng = _MASK32
    out = np.empty(len(tables), dtype=np.int64)
    for k, t in enumerate(tables):
        row = rows[t]
        r = rng >> _PREC
        v = code // r
        if v >= _TOTAL:
            raise ValueError(f"corrupt range-coded stream at symbol {k}")
        lo, hi = 0, nsym[t]
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if row[mid] <= v:
                lo = mid
            else:
                hi = mid
        start = row[lo]
        code -= r * start
        rng = r * (row[lo + 1] - start)
        while rng < _TOP:
            code = ((code << 8) | (data[pos] if pos < size else 0)) & _MASK32
            pos += 1
            rng <<= 8
        out[k] = lo
    return out


def fnv1a64(data) -> int:
    h = 0xCBF29CE484222325
    for b in bytes(data):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
