"""Wall time of the two-photon stencil step: compiled kernel versus numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 201 801 2001] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from supercorr import _kernels


def _setup(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    v1 = np.ascontiguousarray(X + X.T)
    v0 = v1.copy()
    acc = np.zeros_like(v1)
    out = np.empty_like(v1)
    u = np.ascontiguousarray(rng.normal(size=n) + 0j)
    return (v1, v0, out, acc, 0.3 + 0j, 0.7 + 0j, -1.5 + 0j, 1.0, 1.0, 0, u, n // 3, u)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[201, 801, 2001])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"python": _kernels.python_backend.pair_cheb_step}
    if _kernels.BACKEND == "cython":
        backends["cython"] = _kernels.pair_cheb_step
    print(f"{'N_c':>6} " + " ".join(f"{b + ' [ms]':>14}" for b in backends) + f" {'speedup':>8}")
    for n in args.sizes:
        a = _setup(n)
        ms = {}
        for name, fn in backends.items():
            t = min(timeit.repeat(lambda: fn(*a), number=1, repeat=args.repeat))
            ms[name] = 1e3 * t
        speed = ms["python"] / ms["cython"] if "cython" in ms else float("nan")
        print(f"{n:>6} " + " ".join(f"{v:>14.3f}" for v in ms.values()) + f" {speed:>8.2f}")


if __name__ == "__main__":
    main()
