"""Time the numba and numpy flavour of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from diractfa import kernels
from diractfa._accel import HAVE_NUMBA
from diractfa.clifford import build_dirac_matrices


def cases(rng):
    ds = build_dirac_matrices(2, 1.0)
    K = 128 * 128
    fhat = rng.normal(size=(4, K, 2)) + 1j * rng.normal(size=(4, K, 2))
    xi = rng.normal(size=(K, 2))
    times = np.linspace(0.1, 1.0, 4)
    yield "dirac_apply", (fhat, xi, ds.alphas, ds.m, times)

    N = 128
    sig = rng.normal(size=(2 * N, N, 2, 2)) + 0j
    yield "weyl_kernel", (sig, 0.125, (np.arange(N) - N // 2) / 16.0, 1 / 16.0)

    z = rng.normal(size=(65536, 2)) + 1j * rng.normal(size=(65536, 2))
    comp = np.array([0, 0, 1, 1])
    alpha = np.array([[2, 0], [1, 1], [0, 2], [1, 1]])
    beta = np.array([[1, 0], [0, 1], [0, 1], [1, 0]])
    coeff = np.ones(4, dtype=complex)
    yield "poly_eval", (z, comp, alpha, beta, coeff)

    mats = rng.normal(size=(65536, 2, 2)) + 1j * rng.normal(size=(65536, 2, 2))
    yield "matvec", (mats, z)
    yield "opnorm", (mats,)


def flavours(name):
    if name == "opnorm":
        return kernels._opnorm2_numba, kernels.opnorm_numpy
    return getattr(kernels, f"{name}_numba"), getattr(kernels, f"{name}_numpy")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'numba [ms]':>11} {'numpy [ms]':>11} {'speed-up':>9} {'max diff':>10}")
    for name, inputs in cases(rng):
        nb, npy = flavours(name)
        a, b = nb(*inputs), npy(*inputs)  # warm-up also triggers compilation
        diff = float(np.max(np.abs(a - b)))
        t_nb = min(timeit.repeat(lambda: nb(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: npy(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<12} {t_nb:11.2f} {t_np:11.2f} {t_np / t_nb:9.2f} {diff:10.1e}")


if __name__ == "__main__":
    main()
