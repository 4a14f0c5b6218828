"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Kernel timings call the ``*_nb`` and ``*_np`` functions directly, after one
warm-up call so compilation is excluded.  ``--end-to-end`` also runs the
``frame`` and ``family`` commands in subprocesses with and without
ASYMDIAG_DISABLE_NUMBA=1.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from asymdiag import _accel
from asymdiag import kernels as K

ROOT = Path(__file__).resolve().parent.parent


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def cases(rng):
    d = 3
    H = cplx(rng, 4096, d, d)
    H = H + np.conj(np.swapaxes(H, 1, 2))
    A = cplx(rng, 8192, d, d)
    B = cplx(rng, 8192, d, d)
    Asub = cplx(rng, 2048, 9, d, d)
    g = cplx(rng, 2048, 9, d)
    Phi = np.eye(d) + 0.01 * cplx(rng, 4096, d, d)
    p = cplx(rng, 4096, d)
    u0 = cplx(rng, d)
    F = rng.standard_normal(1 << 16).cumsum()
    T = 513
    Bdiag = np.tile(np.array([0.0, 2.0, 5.0], dtype=np.complex128), (T, 1))
    C = 0.05 * cplx(rng, T, d, d)
    Hd = cplx(rng, T, d, d)
    return [
        ("jacobi_eigh 4096x3x3", K._jacobi_eigh_nb, K._jacobi_eigh_np, (H, True)),
        ("solve_batch 8192x3x3", K._solve_nb, K._solve_np, (A, B)),
        ("rk4_matrix 2048x4 substeps", K._rk4_matrix_nb, K._rk4_matrix_np, (Asub, 0.001)),
        ("rk4_forced 2048x4 substeps", K._rk4_forced_nb, K._rk4_forced_np, (Asub, g, 0.001)),
        ("chain 4096", K._chain_nb, K._chain_np, (Phi, np.eye(d, dtype=np.complex128))),
        ("forward_recursion 4096", K._forward_nb, K._forward_np, (Phi, p, u0)),
        ("running_excess 65536", K._running_excess_nb, K._running_excess_np, (F,)),
        ("riesz 513 nodes, Nc=64", K._riesz_nb, K._riesz_np, (Bdiag, C, Hd, Bdiag.copy(), 0.8, 64)),
    ]


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def end_to_end(repeat):
    rows = []
    for cmd, cfg in (("frame", "frame_two_atoms.json"), ("family", "family_two_blocks.json")):
        res = {}
        for label, flag in (("numba", "0"), ("numpy", "1")):
            env = dict(os.environ, ASYMDIAG_DISABLE_NUMBA=flag)
            argv = [sys.executable, "-m", "asymdiag", cmd, "--config", str(ROOT / "configs" / cfg)]
            best = float("inf")
            with tempfile.TemporaryDirectory() as out:
                # the first run fills numba's on-disk cache
                subprocess.run(argv + ["--out", out], env=env, check=True, capture_output=True)
                for _ in range(repeat):
                    t0 = time.perf_counter()
                    subprocess.run(argv + ["--out", out], env=env, check=True, capture_output=True)
                    best = min(best, time.perf_counter() - t0)
            res[label] = best
        rows.append((f"cli {cmd}", res["numba"], res["numpy"]))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    rows = [(name, best_of(nb, a, args.repeat), best_of(npf, a, args.repeat))
            for name, nb, npf, a in cases(rng)]
    if args.end_to_end:
        rows += end_to_end(max(1, args.repeat // 2))
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, a, b in rows:
        print(f"{name:32s} {a * 1e3:10.2f} {b * 1e3:10.2f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
