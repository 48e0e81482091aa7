"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--steps 4000] [--dim 4] [--repeat 5]

Each kernel is compiled once before timing; results are checked for
agreement and reported as best-of-``repeat`` wall times.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from symindex import _kernels
from symindex.symplectic_core import standard_j


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def _hamiltonian_generators(rng: np.random.Generator, steps: int, n: int) -> np.ndarray:
    s = rng.standard_normal((steps, 2 * n, 2 * n))
    return standard_j(n) @ (s + np.swapaxes(s, 1, 2))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=2, help="degrees of freedom n (matrices are 2n x 2n)")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(7)
    n, steps = args.dim, args.steps
    h = np.full(steps, 1.0 / steps)
    g1 = _hamiltonian_generators(rng, steps, n)
    g2 = _hamiltonian_generators(rng, steps, n)
    j = standard_j(n)
    mats = _kernels.gauss_propagate_numpy(g1, g2, h)

    cases = {
        "gauss_propagate": (lambda: _kernels.gauss_propagate(g1, g2, h),
                            lambda: _kernels.gauss_propagate_numpy(g1, g2, h)),
        "cayley_propagate": (lambda: _kernels.cayley_propagate(g1, h),
                             lambda: _kernels.cayley_propagate_numpy(g1, h)),
        "det_minus_identity": (lambda: _kernels.det_minus_identity(mats),
                               lambda: _kernels.det_minus_identity_numpy(mats)),
        "sympl_residuals": (lambda: _kernels.sympl_residuals(mats, j),
                            lambda: _kernels.sympl_residuals_numpy(mats, j)),
    }
    _kernels.use_numba(True)
    print(f"steps={steps}  matrix size={2 * n}  best of {args.repeat}")
    print(f"{'kernel':<20} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8} {'max diff':>10}")
    for name, (fast, slow) in cases.items():
        a, b = fast(), slow()  # first call compiles
        diff = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
        t_fast = _best(fast, args.repeat)
        t_slow = _best(slow, args.repeat)
        print(f"{name:<20} {1e3 * t_fast:>11.3f} {1e3 * t_slow:>11.3f} {t_slow / t_fast:>7.1f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
