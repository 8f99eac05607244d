"""Wall-clock comparison of the compiled and numpy time-stepping kernels.

Usage: python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from stoburgers import kernels
from stoburgers.dynamics import SimConfig
from stoburgers.noise import sample_block

CASES = [
    # (label, n, paths, steps)
    ("single path, n=32", 32, 1, 20000),
    ("batch of 64, n=32", 32, 64, 1000),
    ("batch of 64, n=64", 64, 64, 1000),
    ("batch of 256, n=8", 8, 256, 1000),
]


def best_of(func, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(sorted(backends))} (active: {kernels.BACKEND})")
    header = f"{'case':<22}{'kernel':<16}" + "".join(f"{b:>12}" for b in sorted(backends))
    print(header + ("   speedup" if len(backends) > 1 else ""))
    for label, n, paths, steps in CASES:
        cfg = SimConfig(0.0, n, 1e-3, steps * 1e-3)
        decay, phi_dt, coef, _ = cfg.coefficients
        b = cfg.basis
        inc = sample_block(0, 0, paths, cfg.dt, steps, n)
        x0 = np.zeros((paths, n))
        xpath, _ = backends["python"].burgers_run(x0, inc, decay, phi_dt, coef, None,
                                                  b.synthesis_matrix, b.flux_matrix, True, 1)
        h = np.broadcast_to(np.eye(n)[0], (paths, n))
        timings = {"burgers_run": {}, "derivative_run": {}}
        for name, mod in sorted(backends.items()):
            timings["burgers_run"][name] = best_of(
                lambda m=mod: m.burgers_run(x0, inc, decay, phi_dt, coef, None,
                                            b.synthesis_matrix, b.flux_matrix, True, 1),
                args.repeat)
            timings["derivative_run"][name] = best_of(
                lambda m=mod: m.derivative_run(xpath, h, decay, phi_dt, b.synthesis_matrix,
                                               b.flux_matrix, True),
                args.repeat)
        for kernel, row in timings.items():
            line = f"{label:<22}{kernel:<16}" + "".join(f"{row[k]:>11.4f}s" for k in sorted(row))
            if "cython" in row:
                line += f"{row['python'] / row['cython']:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
