"""Kernel benchmark: numba-jitted vs pure-numpy backends.

Runs itself in a subprocess per backend (the backend is chosen at import time
via the WIRETAPLAB_BACKEND environment variable) and prints a comparison
table. Covered kernels: batch BCH decoding and packed GF(2) matrix products.

Usage: python benchmarks/bench_kernels.py [--quick]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _bench_one(quick: bool) -> dict:
    import numpy as np

    from wiretaplab import backend, ecc, gf2

    rng = np.random.default_rng(0)
    results = {"backend": backend.backend_name()}

    spec = ecc.parse_code("bch:15:5")
    count = 20_000 if quick else 200_000
    msgs = rng.integers(0, 2, (count, 5), dtype=np.uint8)
    words = ecc.encode_batch(spec, msgs)
    flips = rng.random((count, 15)) < 0.12
    recv = words ^ flips.astype(np.uint8)
    ecc.decode_batch(spec, recv[:100])  # warm-up covers jit compilation
    t0 = time.perf_counter()
    ecc.decode_batch(spec, recv)
    results["bch_decode_s"] = time.perf_counter() - t0
    results["bch_words"] = count

    dim = 256 if quick else 1024
    a = gf2.Gf2Matrix.from_dense(rng.integers(0, 2, (dim, dim), dtype=np.uint8))
    b = gf2.Gf2Matrix.from_dense(rng.integers(0, 2, (dim, dim), dtype=np.uint8))
    gf2.gf2_matmul(a, b)
    t0 = time.perf_counter()
    for _ in range(5):
        gf2.gf2_matmul(a, b)
    results["gf2_matmul_s"] = (time.perf_counter() - t0) / 5
    results["gf2_dim"] = dim

    nvec = 50_000 if quick else 500_000
    vecs = rng.integers(0, 2, (nvec, dim), dtype=np.uint8)
    gf2.gf2_vecmat_batch(vecs[:100], a)
    t0 = time.perf_counter()
    gf2.gf2_vecmat_batch(vecs, a)
    results["vecmat_batch_s"] = time.perf_counter() - t0
    results["vecmat_count"] = nvec
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="smaller problem sizes")
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.child:
        print(json.dumps(_bench_one(args.quick)))
        return

    rows = []
    for backend_name in ("numpy", "numba"):
        env = dict(os.environ, WIRETAPLAB_BACKEND=backend_name)
        cmd = [sys.executable, __file__, "--child"]
        if args.quick:
            cmd.append("--quick")
        out = subprocess.run(cmd, env=env, capture_output=True, text=True,
                             check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    np_row, nb_row = rows
    print(f"{'kernel':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for key, label in [("bch_decode_s", "bch(15,5) batch decode"),
                       ("gf2_matmul_s", "packed gf2 matmul"),
                       ("vecmat_batch_s", "packed vec-mat batch")]:
        a, b = np_row[key], nb_row[key]
        print(f"{label:<28}{a:>11.4f}s{b:>11.4f}s{a / b:>9.2f}x")
    if nb_row["backend"] != "numba":
        print("note: numba unavailable; both columns ran the numpy path")


if __name__ == "__main__":
    main()
