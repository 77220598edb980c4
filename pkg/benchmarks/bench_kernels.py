"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--size 48] [--bands 16] [--kernel 13] [--repeat 20]

Prints one line per kernel with the best-of-N time for each backend and the
largest relative difference between their outputs.
"""

import argparse
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from bglrf import _pykernels, simulate

try:
    from bglrf import _ckernels
except ImportError:
    _ckernels = None


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _diff(a, b):
    a = [np.asarray(v) for v in (a if isinstance(a, tuple) else (a,))]
    b = [np.asarray(v) for v in (b if isinstance(b, tuple) else (b,))]
    return max(float(np.abs(x - y).max() / max(np.abs(y).max(), 1e-300)) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=48)
    ap.add_argument("--bands", type=int, default=16)
    ap.add_argument("--msi-bands", type=int, default=6)
    ap.add_argument("--kernel", type=int, default=13)
    ap.add_argument("--ratio", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
        return 1

    n, d, p = args.size, args.ratio, args.kernel
    x = np.ascontiguousarray(simulate.make_phantom(n, n, args.bands, 6, seed=0).data)
    z = np.ascontiguousarray(x[: args.msi_bands])
    K = simulate.gaussian_kernel(d)
    K = np.pad(K, (p - K.shape[0]) // 2) if K.shape[0] < p else K
    y = np.ascontiguousarray(x[:, ::d, ::d])

    cases = {
        "normal_apply": lambda m: m.normal_apply(x, K, d, 0, 0),
        "kernel_gram": lambda m: m.kernel_gram(x, y, p, d, 0, 0),
        "matting_triplets": lambda m: m.matting_triplets(z, 1, 1e-7),
    }
    print(f"cube {n}x{n}x{args.bands}, MSI bands {args.msi_bands}, kernel {p}x{p}, ratio {d}, "
          f"best of {args.repeat}, 1 thread")
    print(f"{'kernel':<18}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}{'max rel diff':>14}")
    with threadpool_limits(1):
        for name, call in cases.items():
            t_py = _best(lambda: call(_pykernels), args.repeat)
            t_c = _best(lambda: call(_ckernels), args.repeat)
            diff = _diff(call(_ckernels), call(_pykernels))
            print(f"{name:<18}{1e3 * t_py:>10.2f}{1e3 * t_c:>11.2f}{t_py / t_c:>8.2f}x{diff:>14.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
