"""Time the compiled prox kernel against the pure-Python fallback.

    python benchmarks/bench_prox.py [--points 2000] [--repeat 3]

Both backends run on identical random instances and must agree to 1e-10.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kolmostrip import _backend
from kolmostrip._kernels_py import OK
from kolmostrip.polyfun import DEFAULT_TOL, _max_iter


def instance(rng, m, d):
    V = rng.normal(size=(m, d))
    V /= np.maximum(1.0, np.linalg.norm(V, axis=1))[:, None]
    return V, rng.normal(size=m)


def timed(kern, V, c, X, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = kern.prox_batch(V, c, X, DEFAULT_TOL.act_tol, DEFAULT_TOL.grad_tol, _max_iter(V.shape[0]))
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if _backend.BACKEND != "cython":
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    fast, slow = _backend.kernels, _backend.python_kernels
    rng = np.random.default_rng(args.seed)
    print(f"{'d':>2} {'m':>5} {'cython ms':>10} {'python ms':>10} {'speedup':>8} {'max |dy|':>10}")
    for d, m in [(2, 4), (2, 32), (2, 256), (3, 12), (3, 128), (4, 12), (4, 64), (8, 32)]:
        V, c = instance(rng, m, d)
        X = rng.normal(scale=2.0, size=(args.points, d))
        tf, (Yf, *_, sf, _, _, _) = timed(fast, V, c, X, args.repeat)
        ts, (Ys, *_, ss, _, _, _) = timed(slow, V, c, X, 1)
        ok = (sf == OK) & (ss == OK)
        dy = float(np.max(np.abs(Yf[ok] - Ys[ok]))) if ok.any() else float("nan")
        print(f"{d:>2} {m:>5} {1e3 * tf:>10.2f} {1e3 * ts:>10.1f} {ts / tf:>8.0f} {dy:>10.1e}")
        if dy > 1e-10:
            raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
