"""Timing comparison of the compiled and pure-Python step kernels.

Runs the same coupled scenarios through both backends and reports
wall time plus the worst-case midspan disagreement (the backends
implement identical arithmetic, so differences are at round-off
level).

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from vbisim._kernels import HAVE_NATIVE
from vbisim.analysis import benchmark_config
from vbisim.coupling import run_coupled


def time_run(cfg, backend, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run_coupled(cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="single repetition")
    args = parser.parse_args()
    repeats = 1 if args.quick else 3

    if not HAVE_NATIVE:
        print("compiled core not available; nothing to compare")
        return

    cases = ["yang2004", "yang2019", "nube_v2", "eshkevari_50_heavy"]
    print(f"{'case':22s} {'python':>10s} {'native':>10s} {'speedup':>8s} {'max |diff|':>12s}")
    for name in cases:
        cfg = benchmark_config(name)
        t_py, res_py = time_run(cfg, "python", repeats)
        t_nat, res_nat = time_run(cfg, "native", repeats)
        diff = float(np.max(np.abs(res_py.midspan_displacement - res_nat.midspan_displacement)))
        print(f"{name:22s} {t_py:9.2f}s {t_nat:9.2f}s {t_py / t_nat:7.1f}x {diff:12.3e}")


if __name__ == "__main__":
    main()
