"""Hot numeric kernels, each in a numba and a numpy flavour.

Every public name here is a dispatcher picking the compiled loop or the
vectorised numpy version according to :data:`diractfa._accel.USE_NUMBA`
(the Weyl kernel always takes the faster numpy path).
Both flavours are importable directly (``*_numba`` / ``*_numpy``) so tests
and ``benchmarks/bench_kernels.py`` can compare them.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# free Dirac multiplier  mu_t(xi) = cos(z) I - i 2 pi t sinc(z) G(xi)
# with z = 2 pi t <xi>_m and G(xi) = m alpha_0 + sum_j xi_j alpha_j
# --------------------------------------------------------------------------

@njit
def _sinc_nb(z):
    if abs(z) < 1e-4:
        z2 = z * z
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    return math.sin(z) / z


def sinc(z):
    """sin(z)/z with the 4-term Taylor branch below |z| < 1e-4."""
    z = np.asarray(z, dtype=float)
    z2 = z * z
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    series = 1.0 - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    return np.where(small, series, np.sin(safe) / safe)


@njit
def dirac_apply_numba(fhat, xi, alphas, mass, times):
    """Apply mu_{times[l]} nodewise to ``fhat[l]``.

    fhat : (M, K, n) complex, xi : (K, d), alphas : (d+1, n, n), times : (M,)
    """
    M, K, n = fhat.shape
    d = xi.shape[1]
    out = np.empty_like(fhat)
    gv = np.empty(n, dtype=np.complex128)
    for l in range(M):
        t = times[l]
        for k in range(K):
            r2 = mass * mass
            for j in range(d):
                r2 += xi[k, j] * xi[k, j]
            z = TWO_PI * t * math.sqrt(r2)
            c = math.cos(z)
            coef = -1j * TWO_PI * t * _sinc_nb(z)
            for a in range(n):
                acc = 0j
                for b in range(n):
                    g = mass * alphas[0, a, b]
                    for j in range(d):
                        g += xi[k, j] * alphas[j + 1, a, b]
                    acc += g * fhat[l, k, b]
                gv[a] = acc
            for a in range(n):
                out[l, k, a] = c * fhat[l, k, a] + coef * gv[a]
    return out


def dirac_apply_numpy(fhat, xi, alphas, mass, times):
    times = np.asarray(times, dtype=float)
    bracket = np.sqrt(mass * mass + np.sum(xi * xi, axis=1))  # (K,)
    z = TWO_PI * times[:, None] * bracket[None, :]  # (M, K)
    c = np.cos(z)
    coef = -1j * TWO_PI * times[:, None] * sinc(z)
    gen = mass * alphas[0][None] + np.einsum("kj,jab->kab", xi, alphas[1:])
    gv = np.einsum("kab,mkb->mka", gen, fhat)
    return c[..., None] * fhat + coef[..., None] * gv


def dirac_apply(fhat, xi, alphas, mass, times):
    fhat = np.ascontiguousarray(fhat, dtype=np.complex128)
    xi = np.ascontiguousarray(xi, dtype=float)
    alphas = np.ascontiguousarray(alphas, dtype=np.complex128)
    times = np.ascontiguousarray(np.atleast_1d(times), dtype=float)
    if USE_NUMBA:
        return dirac_apply_numba(fhat, xi, alphas, float(mass), times)
    return dirac_apply_numpy(fhat, xi, alphas, float(mass), times)


# --------------------------------------------------------------------------
# Weyl kernel  K(x_a, x_b) = sum_j dxi e^{2 pi i delta xi_j} sigma(mid_ab, xi_j)
# sigma_fine : (2N, N, n, n) symbol on the half-step x grid
# --------------------------------------------------------------------------

@njit
def weyl_kernel_numba(sigma_fine, dx, xi, dxi):
    """Direct midpoint quadrature, O(N^3 n^2)."""
    M2, N, n, _ = sigma_fine.shape
    half = N // 2
    phase = np.empty((N, N), dtype=np.complex128)
    for e in range(N):
        delta = (e - half) * dx
        for j in range(N):
            phase[e, j] = complex(math.cos(TWO_PI * delta * xi[j]),
                                  math.sin(TWO_PI * delta * xi[j])) * dxi
    out = np.zeros((N, n, N, n), dtype=np.complex128)
    for a in range(N):
        for b in range(N):
            s = (a - b + half) % N  # wrapped displacement index, delta in [-N/2, N/2)
            r = (2 * b + (s - half)) % M2  # fine-grid midpoint index
            for j in range(N):
                w = phase[s, j]
                for p in range(n):
                    for q in range(n):
                        out[a, p, b, q] += w * sigma_fine[r, j, p, q]
    return out


def weyl_kernel_numpy(sigma_fine, dx, xi, dxi):
    """Same kernel through one inverse DFT per fine midpoint row."""
    M2, N, n, _ = sigma_fine.shape
    half = N // 2
    e = np.arange(N)
    delta = (e - half) * dx
    phase = np.exp(2j * np.pi * np.outer(delta, xi)) * dxi  # (N_e, N_j)
    # S[e, r] = sum_j phase[e, j] sigma[r, j]
    S = np.tensordot(phase, sigma_fine, axes=([1], [1]))
    a = np.arange(N)[:, None]
    b = np.arange(N)[None, :]
    s = (a - b + half) % N
    r = (2 * b + (s - half)) % M2
    K = S[s, r]  # (N, N, n, n)
    return np.ascontiguousarray(K.transpose(0, 2, 1, 3))


def weyl_kernel(sigma_fine, dx, xi, dxi):
    """Always the numpy flavour: its tensordot runs in BLAS and beats the
    compiled direct sum (see benchmarks/bench_kernels.py), which stays as a
    cross-check."""
    sigma_fine = np.ascontiguousarray(sigma_fine, dtype=np.complex128)
    xi = np.ascontiguousarray(xi, dtype=float)
    return weyl_kernel_numpy(sigma_fine, float(dx), xi, float(dxi))


# --------------------------------------------------------------------------
# polynomial nonlinearity  F_j(z) = sum c z^alpha conj(z)^beta
# --------------------------------------------------------------------------

@njit
def poly_eval_numba(z, comp, alpha, beta, coeff):
    """z : (K, n); comp : (T,); alpha, beta : (T, n) ints; coeff : (T,)."""
    K, n = z.shape
    T = comp.shape[0]
    out = np.zeros((K, n), dtype=np.complex128)
    zc = np.conj(z)
    for k in range(K):
        for t in range(T):
            term = coeff[t]
            for i in range(n):
                for _ in range(alpha[t, i]):
                    term *= z[k, i]
                for _ in range(beta[t, i]):
                    term *= zc[k, i]
            out[k, comp[t]] += term
    return out


def poly_eval_numpy(z, comp, alpha, beta, coeff):
    K, n = z.shape
    out = np.zeros((K, n), dtype=np.complex128)
    zc = np.conj(z)
    for t in range(comp.shape[0]):
        term = np.full(K, coeff[t], dtype=np.complex128)
        for i in range(n):
            if alpha[t, i]:
                term = term * z[:, i] ** alpha[t, i]
            if beta[t, i]:
                term = term * zc[:, i] ** beta[t, i]
        out[:, comp[t]] += term
    return out


def poly_eval(z, comp, alpha, beta, coeff):
    z = np.ascontiguousarray(z, dtype=np.complex128)
    comp = np.ascontiguousarray(comp, dtype=np.int64)
    alpha = np.ascontiguousarray(alpha, dtype=np.int64)
    beta = np.ascontiguousarray(beta, dtype=np.int64)
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    if USE_NUMBA:
        return poly_eval_numba(z, comp, alpha, beta, coeff)
    return poly_eval_numpy(z, comp, alpha, beta, coeff)


# --------------------------------------------------------------------------
# pointwise matrix field times spinor field
# --------------------------------------------------------------------------

@njit
def matvec_numba(mats, v):
    """mats : (K, n, n) or (M, K, n, n) flattened to (B, n, n); v : (B, n)."""
    B, n = v.shape
    out = np.zeros((B, n), dtype=np.complex128)
    for k in range(B):
        for a in range(n):
            acc = 0j
            for b in range(n):
                acc += mats[k, a, b] * v[k, b]
            out[k, a] = acc
    return out


def matvec_numpy(mats, v):
    return np.einsum("kab,kb->ka", mats, v)


def matvec(mats, v):
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    v = np.ascontiguousarray(v, dtype=np.complex128)
    if USE_NUMBA:
        return matvec_numba(mats, v)
    return matvec_numpy(mats, v)


# --------------------------------------------------------------------------
# largest singular value of a stack of small matrices
# --------------------------------------------------------------------------

def opnorm_numpy(mats):
    """Spectral norm over the trailing (n, n) axes."""
    n = mats.shape[-1]
    if n == 1:
        return np.abs(mats[..., 0, 0])
    if n == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, d = mats[..., 1, 0], mats[..., 1, 1]
        sq = lambda z: z.real * z.real + z.imag * z.imag
        fro2 = sq(a) + sq(b) + sq(c) + sq(d)
        det2 = sq(a * d - b * c)
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det2, 0.0))
        return np.sqrt(np.maximum(0.5 * (fro2 + disc), 0.0))
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


@njit
def _opnorm2_numba(flat):
    out = np.empty(flat.shape[0])
    for k in range(flat.shape[0]):
        a, b, c, d = flat[k, 0, 0], flat[k, 0, 1], flat[k, 1, 0], flat[k, 1, 1]
        fro2 = (a.real * a.real + a.imag * a.imag + b.real * b.real + b.imag * b.imag
                + c.real * c.real + c.imag * c.imag + d.real * d.real + d.imag * d.imag)
        det = a * d - b * c
        disc = fro2 * fro2 - 4.0 * (det.real * det.real + det.imag * det.imag)
        out[k] = math.sqrt(0.5 * (fro2 + math.sqrt(max(disc, 0.0))))
    return out


def opnorm(mats):
    """Spectral norm over the trailing (n, n) axes (compiled for n = 2)."""
    mats = np.asarray(mats)
    if USE_NUMBA and mats.shape[-1] == 2 and mats.shape[-2] == 2:
        flat = np.ascontiguousarray(mats.reshape(-1, 2, 2), dtype=np.complex128)
        return _opnorm2_numba(flat).reshape(mats.shape[:-2])
    return opnorm_numpy(mats)
