"""Compare the numba and numpy backends on the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once per backend to warm up (JIT compile for numba), then
``--repeat`` timed runs; the best time is reported. Outputs are checked to
agree between backends before timing.
"""

import argparse
import time

import numpy as np

from inkpd import _accel, _kernels, emd
from inkpd.svm import C_GRID, Z_GRID, kernel_matrix, sq_dists


def _cases(rng):
    t = np.arange(20_000) / 150.0
    signal = np.sin(2 * np.pi * 3 * t) + 0.3 * np.sin(2 * np.pi * 9 * t) + 0.05 * rng.standard_normal(t.size)
    X = rng.standard_normal((60, 4))
    y = np.where(X[:, 0] + 0.5 * rng.standard_normal(60) > 0, 1.0, -1.0)
    K = kernel_matrix(X, X, 1.0)
    tr, te = np.arange(54), np.arange(54, 60)
    fold = (sq_dists(X[tr], X[tr]), sq_dists(X[te], X[tr]), y[tr], y[te],
            np.array(C_GRID), np.array(Z_GRID), 1e-3, 100_000)
    short = signal[:1500]
    return {
        "find_extrema (n=20000)": lambda: _kernels.find_extrema(signal),
        "sign_changes (n=20000)": lambda: _kernels.sign_changes(np.diff(signal)),
        "smo (n=60, C=10)": lambda: _kernels.smo(K, y, 10.0, 1e-6, 100_000)[0],
        "grid_fold (54 train, 143 cells)": lambda: _kernels.grid_fold(*fold),
        "emd.decompose (n=1500)": lambda: emd.decompose(short).reconstruct(),
    }


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, float), np.asarray(b, float), atol=1e-6)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    prev = _accel.backend()
    print(f"{'kernel':34s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}  agree")
    try:
        for name, fn in cases.items():
            times, outs = {}, {}
            for backend in ("numba", "numpy"):
                _accel.set_backend(backend)
                outs[backend] = fn()  # warm-up / JIT
                times[backend] = _best(fn, args.repeat)
            agree = _same(outs["numba"], outs["numpy"])
            print(f"{name:34s} {1e3 * times['numba']:11.3f} {1e3 * times['numpy']:11.3f} "
                  f"{times['numpy'] / times['numba']:7.1f}x  {agree}")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
