"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on a fixed seeded workload; the script prints the best
wall time per backend, the speed-up and the max absolute difference.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from infogames import _kernels_py
from infogames.fractional import gl_weights

try:
    from infogames import _kernels
except ImportError:  # extension not built
    _kernels = None


def workloads(rng: np.random.Generator) -> dict:
    n, K, n_u = 41, 250, 9
    x = np.linspace(0.0, 1.0, n)
    dx = x[1] - x[0]
    u = np.linspace(-1.0, 1.0, n_u)
    cost = np.ascontiguousarray(np.broadcast_to(
        (x[None, None, :] - 0.5) ** 2 + 0.5 * u[None, :, None] ** 2, (K, n_u, n)))
    drift = np.ascontiguousarray(np.broadcast_to(u[:, None], (n_u, n)))
    g = gl_weights(0.8, K + 1)
    order = np.argsort(np.abs(u), kind="stable")
    policy = rng.integers(0, n_u, size=(K, n))
    m0 = np.full(n, 1.0 / n)
    m = rng.random(128)
    m /= m.sum()
    claims = rng.uniform(1.0, 10.0, 14)
    return {
        "causal_convolve": (rng.random(4000), rng.random(4000)),
        "fpk_steps": (m, np.full(128, 0.2), np.full(128, 0.2), 5000, True),
        "kuramoto_rk4": (rng.uniform(-np.pi, np.pi, 64), rng.normal(0, 0.1, 64), 1.0, 0.01, 500),
        "shapley_bankruptcy": (0.6 * claims.sum(), claims),
        "hjb_pass_1d": (cost, drift, np.zeros(n), dx, 0.005, 0.002**0.8, g, order, False),
        "fpk_pass_1d": (m0, drift, policy, dx, 0.005, 0.002**0.8, g),
    }


def best_time(fn, args, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'python s':>12}{'cython s':>12}{'speedup':>10}{'max diff':>12}")
    for name, work in workloads(rng).items():
        t_py, out_py = best_time(getattr(_kernels_py, name), work, args.repeat)
        if _kernels is None:
            print(f"{name:<20}{t_py:>12.4f}{'n/a':>12}{'':>10}{'':>12}")
            continue
        t_cy, out_cy = best_time(getattr(_kernels, name), work, args.repeat)
        print(f"{name:<20}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}{max_diff(out_py, out_cy):>12.2e}")


if __name__ == "__main__":
    main()
