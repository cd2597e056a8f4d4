"""Time the compiled kernels against their pure-Python twins.

    python benchmarks/bench_kernels.py [--symbols 200000] [--repeat 3]

Prints one line per kernel with the best-of-N wall time of each backend and
the speedup.  Exits nonzero if the compiled extension is missing.
"""

import argparse
import sys
import time

import numpy as np

from ccacodec import _pycore, kernels
from ccacodec.codec import CDFTable, build_symbol_cdf


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--symbols", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    fast = kernels.compiled_backend
    if fast is None:
        print("compiled extension not available", file=sys.stderr)
        return 1

    rng = np.random.default_rng(0)
    cdfs = [build_symbol_cdf(s) for s in (0.2, 0.8, 2.0, 6.0, 20.0)]
    table, _ = CDFTable.from_cdfs(cdfs)
    rows = rng.integers(0, len(cdfs), args.symbols).astype(np.int64)
    sigma = np.array([0.2, 0.8, 2.0, 6.0, 20.0])[rows]
    residual = np.clip(np.rint(rng.normal(scale=sigma)), -127, 127).astype(np.int64)
    idx = residual - table.offsets[rows]
    blob = fast.rc_encode(idx, rows, table.cum)
    buf = np.frombuffer(blob, dtype=np.uint8)

    xp = rng.normal(size=(8, 48, 36, 36))
    cols = fast.im2col(xp, 5, 5, 2, 16, 16)
    raw = np.frombuffer(rng.bytes(2_000_000), dtype=np.uint8)

    cases = [
        ("rc_encode", lambda m: m.rc_encode(idx, rows, table.cum)),
        ("rc_decode", lambda m: m.rc_decode(buf, rows, table.cum, table.nsym)),
        ("im2col", lambda m: m.im2col(xp, 5, 5, 2, 16, 16)),
        ("col2im", lambda m: m.col2im(cols, xp.shape, 5, 5, 2, 16, 16)),
        ("fnv1a64", lambda m: m.fnv1a64(raw)),
    ]
    print(f"{'kernel':<10} {'compiled s':>11} {'python s':>10} {'speedup':>8}")
    for name, call in cases:
        tc = best_of(lambda: call(fast), args.repeat)
        tp = best_of(lambda: call(_pycore), args.repeat)
        print(f"{name:<10} {tc:>11.4f} {tp:>10.4f} {tp / tc:>7.1f}x")
    print(f"range-coded {args.symbols} symbols into {len(blob)} bytes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
