# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch extraction for convolutions and the range coder.

Must stay behaviourally identical to ``_pycore``.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int64_t

cnp.import_array()

cdef enum:
    TOP = 1 << 24
    PREC = 16
    TOTAL = 1 << 16

cdef uint64_t CARRY_LIMIT = 0xFF000000u
cdef uint64_t MASK32 = 0xFFFFFFFFu
cdef uint64_t MASK24 = 0x00FFFFFFu


def im2col(const double[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    out = np.empty((n * ho * wo, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t b, y, x, ch, i, j, row, col
    with nogil:
        for b in range(n):
            for y in range(ho):
                for x in range(wo):
                    row = (b * ho + y) * wo + x
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                cols[row, col] = xp[b, ch, y * stride + i, x * stride + j]
                                col += 1
    return out


def col2im(const double[:, ::1] cols, shape, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t ho, Py_ssize_t wo):
    out = np.zeros(shape, dtype=np.float64)
    cdef double[:, :, :, ::1] xp = out
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t b, y, x, ch, i, j, row, col
    # taps outermost so each output sums its contributions in (i, j) order,
    # matching the pure-Python twin bit for bit
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        col = (ch * kh + i) * kw + j
                        for y in range(ho):
                            row = (b * ho + y) * wo
                            for x in range(wo):
                                xp[b, ch, y * stride + i, x * stride + j] += cols[row + x, col]
    return out


cdef struct Encoder:
    uint64_t low
    uint32_t rng
    uint8_t cache
    uint64_t cache_size
    uint8_t *buf
    Py_ssize_t pos


cdef inline void _shift_low(Encoder *e) noexcept nogil:
    cdef uint8_t carry
    cdef uint8_t temp
    if e.low < CARRY_LIMIT or e.low > MASK32:
        carry = <uint8_t>(e.low >> 32)
        temp = e.cache
        while True:
            e.buf[e.pos] = <uint8_t>(temp + carry)
            e.pos += 1
            temp = 0xFF
            e.cache_size -= 1
            if e.cache_size == 0:
                break
        e.cache = <uint8_t>((e.low >> 24) & 0xFF)
    e.cache_size += 1
    e.low = (e.low & MASK24) << 8


def rc_encode(const int64_t[::1] symbols, const int64_t[::1] tables,
              const uint32_t[:, ::1] cum):
    """Encode symbol indices; ``cum[t]`` is table t's cumulative count row."""
    cdef Py_ssize_t count = symbols.shape[0]
    # each symbol emits at most 2 bytes at 16-bit precision, plus flush
    buf_arr = np.empty(2 * count + 16, dtype=np.uint8)
    cdef uint8_t[::1] buf = buf_arr
    cdef Encoder e
    e.low = 0
    e.rng = <uint32_t>MASK32
    e.cache = 0
    e.cache_size = 1
    e.buf = &buf[0]
    e.pos = 0
    cdef Py_ssize_t k
    cdef uint32_t r, start, freq
    cdef int64_t s, t
    cdef uint64_t unit
    with nogil:
        for k in range(count):
            s = symbols[k]
            t = tables[k]
            start = cum[t, s]
            freq = cum[t, s + 1] - start
            r = e.rng >> PREC
            e.low += <uint64_t>r * start
            e.rng = r * freq
            while e.rng < TOP:
                e.rng <<= 8
                _shift_low(&e)
        # the decoder reads zeros past the end, so one byte suffices: rng >= TOP
        # guarantees a multiple of 2^24 inside [low, low + rng)
        unit = (<uint64_t>1) << 24
        e.low = (e.low + unit - 1) & ~(unit - 1)
        _shift_low(&e)
        _shift_low(&e)
    # the first byte is always zero: the initial cache
    return bytes(buf_arr[1:e.pos])


def rc_decode(const uint8_t[::1] data, const int64_t[::1] tables,
              const uint32_t[:, ::1] cum, const int64_t[::1] nsym):
    cdef Py_ssize_t count = tables.shape[0]
    cdef Py_ssize_t size = data.shape[0]
    out_arr = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t pos = 0, k, i
    cdef uint32_t code = 0, rng = <uint32_t>MASK32, r, v, start
    cdef int64_t t, lo, hi, mid
    cdef bint bad = 0
    for i in range(4):
        code = (code << 8) | (data[pos] if pos < size else 0)
        pos += 1
    with nogil:
        for k in range(count):
            t = tables[k]
            r = rng >> PREC
            v = code // r
            if v >= TOTAL:
                bad = 1
                break
            lo = 0
            hi = nsym[t]
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if cum[t, mid] <= v:
                    lo = mid
                else:
                    hi = mid
            start = cum[t, lo]
            code -= r * start
            rng = r * (cum[t, lo + 1] - start)
            while rng < TOP:
                code = (code << 8) | (data[pos] if pos < size else 0)
                pos += 1
                rng <<= 8
            out[k] = lo
    if bad:
        raise ValueError(f"corrupt range-coded stream at symbol {k}")
    return out_arr


def fnv1a64(const uint8_t[::1] data):
    cdef uint64_t h = 0xCBF29CE484222325u
    cdef Py_ssize_t i
    with nogil:
        for i in range(data.shape[0]):
            h = (h ^ data[i]) * 0x100000001B3u
    return h
