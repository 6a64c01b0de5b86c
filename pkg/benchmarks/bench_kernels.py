"""Time the numba kernels against their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from ssem_ukf import _kernels as K
from ssem_ukf.model import SSEMModel, default_initial_population


def cases(rng):
    model = SSEMModel()
    n = model.n
    pop = np.repeat(default_initial_population(model.grid).as_array()[None], 64, axis=0)
    phi = model.phi[None]
    coef = model.coef()
    dt = 1.0 / model.grid.n_shells / 100
    samples = rng.standard_normal((4000, 3 * n))
    a = rng.standard_normal((324, 324))
    spd = a @ a.T + 324 * np.eye(324)
    return {
        "rhs (64 x 36 shells)": lambda b: getattr(K, f"rhs_{b}")(pop, phi, model.lam, model.kd0,
                                                                 model.kn0, coef),
        "rk4 (64 members, 100 substeps)": lambda b: getattr(K, f"rk4_populations_{b}")(
            pop, phi, model.lam, model.kd0, model.kn0, coef, 0.0, dt, 100, 0.0, 11.0, 0.0),
        "moments (4000 x 108)": lambda b: getattr(K, f"moments_{b}")(samples),
        "cholesky (324 x 324)": lambda b: getattr(K, f"cholesky_psd_{b}")(spd, 1e-12),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s}{'numpy [ms]':>12s}{'numba [ms]':>12s}{'speedup':>10s}")
    for name, fn in cases(rng).items():
        fn("numba")  # compile outside the timed region
        t = {}
        for b in ("numpy", "numba"):
            t[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s}{t['numpy']:12.3f}{t['numba']:12.3f}{t['numpy'] / t['numba']:10.1f}x")


if __name__ == "__main__":
    main()
