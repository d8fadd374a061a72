"""The compiled and numpy flavours of every kernel agree."""
import numpy as np
import pytest
import scipy.linalg as sla

from diractfa import kernels
from diractfa._accel import HAVE_NUMBA
from diractfa.clifford import build_dirac_matrices

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_dirac_apply_agrees_and_matches_expm(rng):
    ds = build_dirac_matrices(2, 0.7)
    xi = rng.normal(size=(30, 2))
    fhat = _c(rng, 3, 30, 2)
    times = np.array([0.0, 0.3, 2.1])
    a = kernels.dirac_apply_numba(fhat, xi, ds.alphas, ds.m, times)
    b = kernels.dirac_apply_numpy(fhat, xi, ds.alphas, ds.m, times)
    assert np.allclose(a, b, atol=1e-13)
    for l, t in enumerate(times):
        for k in range(30):
            U = sla.expm(-2j * np.pi * t * ds.generator(xi[k]))
            assert np.allclose(a[l, k], U @ fhat[l, k], atol=1e-12)


def test_sinc_small_argument_branch():
    z = np.array([0.0, 1e-6, 5e-5, 0.5])
    assert np.allclose(kernels.sinc(z), np.sinc(z / np.pi), atol=1e-16, rtol=1e-15)


def test_weyl_kernel_agrees(rng):
    N, n = 16, 2
    sig = _c(rng, 2 * N, N, n, n)
    xi = (np.arange(N) - N // 2) / 4.0
    a = kernels.weyl_kernel_numba(sig, 0.25, xi, 0.25)
    b = kernels.weyl_kernel_numpy(sig, 0.25, xi, 0.25)
    assert np.allclose(a, b, atol=1e-12)


def test_poly_eval_agrees(rng):
    z = _c(rng, 40, 2)
    comp = np.array([0, 1, 1])
    alpha = np.array([[2, 0], [1, 1], [0, 0]])
    beta = np.array([[1, 0], [0, 1], [0, 3]])
    coeff = np.array([1.0, -0.5j, 2.0])
    a = kernels.poly_eval_numba(z, comp, alpha, beta, coeff)
    b = kernels.poly_eval_numpy(z, comp, alpha, beta, coeff)
    assert np.allclose(a, b, atol=1e-13)
    expected1 = -0.5j * z[:, 0] * z[:, 1] * np.conj(z[:, 1]) + 2.0 * np.conj(z[:, 1]) ** 3
    assert np.allclose(a[:, 1], expected1, atol=1e-13)


def test_matvec_agrees(rng):
    m, v = _c(rng, 25, 3, 3), _c(rng, 25, 3)
    assert np.allclose(kernels.matvec_numba(m, v), kernels.matvec_numpy(m, v), atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_opnorm_matches_svd(backend, rng, n):
    m = _c(rng, 50, n, n)
    expected = np.linalg.svd(m, compute_uv=False)[:, 0]
    assert np.allclose(kernels.opnorm(m), expected, rtol=1e-12)


def test_env_flag_selects_numpy():
    import os
    import subprocess
    import sys
    code = "from diractfa import _accel, kernels; print(_accel.USE_NUMBA, kernels.USE_NUMBA, _accel.backend())"
    env = dict(os.environ, DIRACTFA_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "False", "numpy"]
    env["DIRACTFA_NO_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "True", "numba"]
