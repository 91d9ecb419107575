"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 2000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from survkit._kernels import _pure

try:
    from survkit._kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(n, rng):
    p = 8
    X = rng.normal(size=(n, p))
    t = np.round(rng.exponential(size=n), 2)
    e = (rng.random(n) < 0.7).astype(float)
    beta = rng.normal(scale=0.2, size=p)
    eta = X @ beta
    F = (X - X.min(0)) / np.ptp(X, axis=0)
    y = t / np.ptp(t)
    idx = np.arange(0, n, max(1, n // 200))
    return {
        "cox_loglik_grad": lambda m: m.cox_loglik_grad(eta, t, e),
        "cox_newton_terms": lambda m: m.cox_newton_terms(X, beta, t, e),
        "concordance_counts": lambda m: m.concordance_counts(t, e, eta),
        "relief_accumulate": lambda m: m.relief_accumulate(X, F, y, idx, 10, 20.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(args.n, rng).items():
        py = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<20} {py:10.2f} {'-':>10} {'-':>8}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
