"""Wigner distribution, Weyl quantization and the Sjostrand-class norm.

Weyl operators use the midpoint kernel

    K(x, y) = int e^{2 pi i (x - y).xi} sigma((x + y)/2, xi) dxi,
    (sigma^w f)(x) = int K(x, y) f(y) dy,

and satisfy ``<sigma^w f, g> = int int tr[sigma W(f, g)] dx dxi`` with
``W(f, g)_{ab}(x, xi) = int f_a(x + y/2) conj(g_b(x - y/2)) e^{-2 pi i y.xi} dy``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import Lattice, SpinorField, forward_ft, inverse_ft
from .tfa import TAIL_THRESHOLD, NormSpec, Window, _stft_chunks, _values_of, pointwise_size, smooth_step, stft_norm

MAX_QUANTIZE_N = 256
MAX_POSITIONS = 1024


class SizeGuardError(ValueError):
    pass


# --------------------------------------------------------------------------
# symbols
# --------------------------------------------------------------------------

@dataclass(eq=False)
class WeylSymbol:
    """n x n matrix symbol sampled on (x-nodes, xi-nodes) of a lattice.

    values has shape ``lattice.shape + lattice.shape + (n, n)``.
    """

    lattice: Lattice
    values: np.ndarray = field(repr=False)
    time: float = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shp = self.lattice.shape * 2
        if v.shape[:2 * self.lattice.d] != shp or v.ndim != 2 * self.lattice.d + 2 or v.shape[-1] != v.shape[-2]:
            raise ValueError(f"symbol values must have shape {shp} + (n, n), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("symbol values must be finite")
        self.values = v

    @property
    def n(self):
        return self.values.shape[-1]

    @classmethod
    def from_function(cls, lattice, func, n, time=None):
        """Sample ``func(x, xi)`` (broadcast to ``(..., n, n)``) on the node grid.

        ``x`` and ``xi`` are lists of ``d`` coordinate arrays shaped to
        broadcast over the ``2d`` node axes.
        """
        d = lattice.d
        xs = [a.reshape([-1 if i == j else 1 for i in range(2 * d)]) for j, a in enumerate(lattice.x_axes())]
        xis = [a.reshape([-1 if i == d + j else 1 for i in range(2 * d)]) for j, a in enumerate(lattice.xi_axes())]
        raw = np.asarray(func(xs, xis), dtype=complex)
        if raw.ndim == 2 * d:
            raw = raw[..., None, None] * np.eye(n)
        return cls(lattice, np.broadcast_to(raw, lattice.shape * 2 + (n, n)).copy(), time)

    @classmethod
    def constant(cls, lattice, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(lattice, np.broadcast_to(matrix, lattice.shape * 2 + matrix.shape).copy())

    def phase_space_lattice(self):
        """2d lattice with x-periods ``L`` followed by xi-periods ``N/L``."""
        lat = self.lattice
        return Lattice(2 * lat.d, lat.N, lat.periods + tuple(lat.N / p for p in lat.periods))

    def is_hermitian(self, tol=1e-12):
        return bool(np.max(np.abs(self.values - np.conj(np.swapaxes(self.values, -1, -2)))) <= tol)


@dataclass(frozen=True)
class SymplecticMap:
    """Canonical symplectic matrix ``J = [[0, I], [-I, 0]]`` on R^{2d}."""

    d: int

    @property
    def matrix(self):
        eye = np.eye(self.d)
        zero = np.zeros((self.d, self.d))
        return np.block([[zero, eye], [-eye, zero]])

    @property
    def inverse(self):
        return -self.matrix

    def pullback(self, sigma):
        """sigma o J^{-1} as a symbol on the dual lattice, (X, Xi) -> sigma(-Xi, X).

        Only d = 1 is supported; the dual lattice's xi-nodes coincide with
        the original x-nodes and ``-x_k`` is node ``(N - k) mod N``.
        """
        if sigma.lattice.d != 1:
            raise ValueError("symplectic pullback implemented for d = 1")
        N = sigma.lattice.N
        flip = (N - np.arange(N)) % N
        # new[i, k] = old[flip[k], i]
        vals = np.transpose(sigma.values, (1, 0, 2, 3))[:, flip]
        return WeylSymbol(sigma.lattice.dual(), vals, sigma.time)


# --------------------------------------------------------------------------
# Wigner distribution
# --------------------------------------------------------------------------

def fourier_upsample(values, lattice, factor=2):
    """Trigonometric interpolation onto ``lattice.refined(factor)``."""
    fine = lattice.refined(factor)
    d, N, M = lattice.d, lattice.N, fine.N
    spec = forward_ft(values, lattice)
    pad = np.zeros(fine.shape + values.shape[d:], dtype=complex)
    lo = (M - N) // 2
    pad[tuple(slice(lo, lo + N) for _ in range(d))] = spec
    return inverse_ft(pad, fine), fine


def wigner(f, g=None, lattice=None, chunk=None):
    """Cross-Wigner distribution W(f, g) on the (x, xi) nodes of the lattice.

    Scalars give a scalar array ``shape * 2``; spinors give a matrix array
    ``shape * 2 + (n, n)`` whose entry ``[a, b]`` pairs ``f_a`` with ``g_b``.
    """
    g = f if g is None else g
    lat, fv, fk = _values_of(f, lattice)
    _, gv, gk = _values_of(g, lat if lattice is None else lattice)
    if fk == "matrix" or gk == "matrix":
        raise ValueError("Wigner distribution takes scalar or spinor fields")
    scalar = fk == "scalar" and gk == "scalar"
    if fk == "scalar":
        fv = fv[..., None]
    if gk == "scalar":
        gv = gv[..., None]
    d, N = lat.d, lat.N
    ff, fine = fourier_upsample(fv, lat)
    gf, _ = fourier_upsample(gv, lat)
    M = fine.N
    na, nb = ff.shape[-1], gf.shape[-1]
    xs = np.stack([gr.ravel() for gr in np.meshgrid(*[np.arange(N)] * d, indexing="ij")], axis=-1)
    if chunk is None:
        chunk = max(1, int(2 ** 21 // (lat.size * na * nb)))
    out = np.empty((lat.size,) + lat.shape + (na, nb), dtype=complex)
    # relative variable y_m = (m - N/2) dx over one period; x_k +- y_m/2 are
    # fine-grid nodes 2k +- (m - N/2)
    ym = np.arange(N) - N // 2
    for start in range(0, xs.shape[0], chunk):
        ks = xs[start:start + chunk]
        c = ks.shape[0]
        plus, minus = [], []
        for a in range(d):
            shape = [c] + [1] * d
            shape[a + 1] = N
            plus.append(((2 * ks[:, a, None] + ym[None, :]) % M).reshape(shape))
            minus.append(((2 * ks[:, a, None] - ym[None, :]) % M).reshape(shape))
        fp = ff[tuple(plus)]  # (c, N.., na)
        gm = np.conj(gf[tuple(minus)])  # (c, N.., nb)
        prod = fp[..., :, None] * gm[..., None, :]
        out[start:start + c] = forward_ft(prod, lat, axes=range(1, d + 1))
    out = out.reshape(lat.shape * 2 + (na, nb))
    return out[..., 0, 0] if scalar else out


# --------------------------------------------------------------------------
# Weyl quantization
# --------------------------------------------------------------------------

def _check_guard(lattice):
    if lattice.d != 1 or lattice.N > MAX_QUANTIZE_N:
        raise SizeGuardError(
            f"dense Weyl quantization limited to d = 1 and N <= {MAX_QUANTIZE_N}; got d={lattice.d}, N={lattice.N}")


def quantize(sigma):
    """Dense ``(N n) x (N n)`` matrix ``A`` with ``(sigma^w f)_a = sum_b A_ab f_b``.

    Row/column ordering is (node, component).  The node measure ``dx`` is
    already folded into ``A``.
    """
    lat = sigma.lattice
    _check_guard(lat)
    N, n = lat.N, sigma.n
    fine_vals, fine = fourier_upsample(sigma.values, lat)  # x-axis refined, xi untouched
    K = kernels.weyl_kernel(fine_vals, lat.dx[0], lat.xi_axes()[0], lat.dxi[0])
    return K.reshape(N * n, N * n) * lat.dx[0]


def apply_weyl(sigma, f, matrix=None):
    """sigma^w f for a spinor field (or ``(N, n)`` array)."""
    A = quantize(sigma) if matrix is None else matrix
    vals = f.values if isinstance(f, SpinorField) else np.asarray(f, dtype=complex)
    out = (A @ vals.reshape(-1)).reshape(vals.shape)
    return f.with_values(out) if isinstance(f, SpinorField) else out


def weyl_pairing(sigma, f, g):
    """Trace pairing ``int int tr[sigma W(f, g)]`` by lattice quadrature."""
    W = wigner(f, g, sigma.lattice)
    if W.ndim == 2 * sigma.lattice.d:
        W = W[..., None, None]
    tr = np.einsum("...pq,...qp->...", sigma.values, W)
    return complex(np.sum(tr) * sigma.lattice.cell * sigma.lattice.dual_cell)


def dft_matrix(lattice):
    """F with ``(F f)_j = sum_b dx e^{-2 pi i xi_j x_b} f_b`` (d = 1)."""
    x = lattice.x_axes()[0]
    xi = lattice.xi_axes()[0]
    return np.exp(-2j * np.pi * np.outer(xi, x)) * lattice.dx[0]


def symplectic_covariance_check(sigma):
    """Operator-norm residual of ``F sigma^w - (sigma o J^{-1})^w F``.

    Both sides map L^2 on the x-nodes to L^2 on the xi-nodes; the norm is
    taken with the node measures so ``F`` itself is unitary.
    """
    lat = sigma.lattice
    _check_guard(lat)
    n = sigma.n
    F = np.kron(dft_matrix(lat), np.eye(n))
    lhs = F @ quantize(sigma)
    rhs = quantize(SymplecticMap(1).pullback(sigma)) @ F
    scale = np.sqrt(lat.dxi[0] / lat.dx[0])
    return float(np.linalg.norm((lhs - rhs) * scale, 2))


# --------------------------------------------------------------------------
# Sjostrand norm, splitting and envelope diagnostics
# --------------------------------------------------------------------------

def _symbol_field(sigma):
    plat = sigma.phase_space_lattice()
    return plat, sigma.values.reshape(plat.shape + (sigma.n, sigma.n))


def sjostrand_norm(sigma, s=0.0, x_step=None, window=None, threshold=TAIL_THRESHOLD):
    """M^{inf,1}_{0,s} norm of a symbol (on the 2d phase-space lattice) or a field.

    Matrix values are measured in operator norm.  ``x_step`` strides the
    outer sup over positions; by default it is chosen so that at most 1024
    positions are visited.
    """
    spec = NormSpec("M", np.inf, 1, 0, s)
    if isinstance(sigma, WeylSymbol):
        lat, vals = _symbol_field(sigma)
    else:
        lat, vals, _ = _values_of(sigma, getattr(sigma, "lattice", None))
    if x_step is None:
        x_step = 1
        while (lat.N // x_step) ** lat.d > MAX_POSITIONS:
            x_step *= 2
    return stft_norm(vals, spec, window, lat, x_step, threshold=threshold)


def cutoff(xi_norm):
    """Radial smoothed step, 1 on |xi| <= 1 and 0 on |xi| >= 2."""
    return 1.0 - smooth_step(np.asarray(xi_norm, dtype=float) - 1.0)


def split(f, k=0, lattice=None):
    """Low/high frequency split ``f = chi(D) f + (I - chi(D)) f``.

    ``k`` is the derivative order above which the low part is claimed to
    be of Sjostrand type; it does not change the split itself and is
    returned for bookkeeping.
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a non-negative integer")
    lat, vals, _ = _values_of(f, lattice)
    r = np.sqrt(sum(g ** 2 for g in lat.xi_grid()))
    chi = cutoff(r).reshape(lat.shape + (1,) * (vals.ndim - lat.d))
    low = inverse_ft(chi * forward_ft(vals, lat), lat)
    high = vals - low
    if isinstance(f, SpinorField):
        return f.with_values(low), f.with_values(high)
    return low, high


def spectral_derivative(f, order, axis=0, lattice=None):
    """d^order/dx_axis^order by multiplication with (2 pi i xi)^order."""
    lat, vals, _ = _values_of(f, lattice)
    xi = lat.xi_grid()[axis].reshape(lat.shape + (1,) * (vals.ndim - lat.d))
    out = inverse_ft((2j * np.pi * xi) ** order * forward_ft(vals, lat), lat)
    return f.with_values(out) if isinstance(f, SpinorField) else out


def narrow_envelope(symbols, x_step=None, window=None):
    """Empirical dominating function ``h(zeta) = sup_{nu, z} |V_G sigma_nu(z, zeta)|``.

    Returns ``(h, l1)`` where ``h`` lives on the frequency nodes of the
    phase-space lattice and ``l1`` is its integral, the quantity that must
    stay finite for narrow convergence.
    """
    h = None
    for sigma in symbols:
        lat, vals = _symbol_field(sigma)
        step = x_step
        if step is None:
            step = 1
            while (lat.N // step) ** lat.d > MAX_POSITIONS:
                step *= 2
        for _, block, vk in _stft_chunks(vals, window, lat, step):
            m = np.max(pointwise_size(block, vk), axis=0)
            h = m if h is None else np.maximum(h, m)
    if h is None:
        return None, 0.0
    return h, float(np.sum(h) * lat.dual_cell)
