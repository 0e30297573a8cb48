"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--n 128] [--repeats 5]

Prints best-of-N wall-clock seconds per kernel and backend, the speedup, and
the max abs difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from intomo import _backend
from intomo.fbp import fbp_reconstruct
from intomo.phantom import make_random_phantom, rasterize
from intomo.projector import desk_geometry, radon_adjoint, radon_forward, truncate


def best_of(fn, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not _backend.available("cython"):
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    n = args.n
    g = desk_geometry(n, truncate=False)
    f = rasterize(make_random_phantom(7, 8), n)
    y = radon_forward(f, g)
    y_t = truncate(radon_forward(f, desk_geometry(n)))
    cases = {
        "radon_forward": lambda b: radon_forward(f, g, backend=b),
        "radon_adjoint": lambda b: radon_adjoint(y, n, backend=b),
        "fbp (truncated)": lambda b: fbp_reconstruct(y_t, n=n, backend=b),
    }
    print(f"n={n}, {g.n_views} views, {g.n_det} detectors, best of {args.repeats}")
    print(f"{'kernel':18s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases.items():
        tc, oc = best_of(lambda: fn("cython"), args.repeats)
        tp, op = best_of(lambda: fn("python"), args.repeats)
        diff = float(np.max(np.abs(np.asarray(getattr(oc, "data", oc)) - np.asarray(getattr(op, "data", op)))))
        print(f"{name:18s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
