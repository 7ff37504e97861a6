"""Compiled vs pure-Python kernels: transducer forward-backward and Levenshtein counts.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, size) with the best-of-N wall time of each
backend and the speedup. Both backends are checked to agree before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fntlab import _pykernels
from fntlab.numerics import log_softmax

try:
    from fntlab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def lattice_case(rng, T, U, V):
    logp = log_softmax(rng.normal(size=(T, U + 1, V + 1)))
    return logp, rng.integers(0, V, size=U), V


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)

    print(f"{'kernel':<22}{'size':<16}{'python [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for T, U in [(20, 8), (60, 20), (150, 40)]:
        logp, tgt, blank = lattice_case(rng, T, U, 31)
        a = _pykernels.transducer_fwd_bwd(logp, tgt, blank)
        b = _ckernels.transducer_fwd_bwd(logp, tgt, blank)
        assert abs(a[2] - b[2]) < 1e-9 and np.allclose(a[3], b[3], atol=1e-12)
        tp = best_time(lambda: _pykernels.transducer_fwd_bwd(logp, tgt, blank), args.repeat)
        tc = best_time(lambda: _ckernels.transducer_fwd_bwd(logp, tgt, blank), args.repeat)
        print(f"{'transducer_fwd_bwd':<22}{f'T={T} U={U}':<16}{1e3 * tp:>12.3f}{1e3 * tc:>13.3f}{tp / tc:>8.1f}x")

    for n in (20, 100, 400):
        ref = rng.integers(0, 30, size=n)
        hyp = ref.copy()
        flip = rng.random(n) < 0.2
        hyp[flip] = rng.integers(0, 30, size=flip.sum())
        hyp = np.delete(hyp, rng.choice(n, size=n // 10, replace=False))
        assert tuple(_pykernels.levenshtein_counts(ref, hyp)) == tuple(_ckernels.levenshtein_counts(ref, hyp))
        tp = best_time(lambda: _pykernels.levenshtein_counts(ref, hyp), args.repeat)
        tc = best_time(lambda: _ckernels.levenshtein_counts(ref, hyp), args.repeat)
        print(f"{'levenshtein_counts':<22}{f'N={n}':<16}{1e3 * tp:>12.3f}{1e3 * tc:>13.3f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
