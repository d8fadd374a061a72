"""Free Dirac propagator as a matrix Fourier multiplier.

The free evolution ``U0(t) = e^{-itD_m}`` acts on the spectrum by

    mu_t(xi) = cos(2 pi t <xi>_m) I - 2 pi i t sinc(2 pi t <xi>_m) G(xi),
    G(xi) = m alpha_0 + sum_j xi_j alpha_j,

which is exact because ``G(xi)^2 = <xi>_m^2 I``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import SpinorField, bracket_weight, forward_ft, inverse_ft


class DegenerateNodeError(ValueError):
    """Raised when <xi>_m vanishes at a requested node."""

    def __init__(self, xi):
        self.xi = tuple(np.atleast_1d(xi).tolist())
        super().__init__(f"energy projectors undefined at massless zero mode xi={self.xi}")


def multiplier(xi, t, dset):
    """mu_t(xi) for xi of shape (d,) or (..., d); returns (..., n, n)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    z = kernels.TWO_PI * t * bracket_weight(xi, 1.0, dset.m)
    eye = np.eye(dset.n)
    gen = dset.generator(xi)
    c = np.cos(z)[..., None, None]
    s = (kernels.TWO_PI * t * kernels.sinc(z))[..., None, None]
    return c * eye - 1j * s * gen


@dataclass(eq=False)
class MultiplierSymbol:
    """mu_t on the frequency nodes of a lattice, cached per (t, lattice)."""

    dirac: object
    _key: tuple = field(default=None, repr=False)
    _table: np.ndarray = field(default=None, repr=False)

    def generator(self, xi):
        return self.dirac.generator(xi)

    def table(self, t, lattice):
        """(N**d, n, n) array of mu_t at the frequency nodes in row-major order."""
        key = (float(t), lattice)
        if self._key != key:
            self._table = multiplier(lattice.xi_points(), t, self.dirac)
            self._key = key
        return self._table


def apply_free(values, lattice, dset, times):
    """Apply ``U0(times[l])`` to ``values[l]``.

    values : (M,) + lattice.shape + (n,), times : (M,)
    """
    values = np.asarray(values, dtype=complex)
    M = values.shape[0]
    fhat = forward_ft(values, lattice, axes=range(1, lattice.d + 1))
    flat = fhat.reshape(M, lattice.size, dset.n)
    out = kernels.dirac_apply(flat, lattice.xi_points(), dset.alphas, dset.m, times)
    return inverse_ft(out.reshape(values.shape), lattice, axes=range(1, lattice.d + 1))


def evolve_free(psi0, t):
    """U0(t) psi0 = F^{-1} mu_t F psi0."""
    if psi0.dirac is None:
        raise ValueError("free evolution needs a field with an attached Dirac set")
    out = apply_free(psi0.values[None], psi0.lattice, psi0.dirac, [t])[0]
    return psi0.with_values(out)


def evolve_free_many(psi0, times):
    """Stack of U0(t) psi0 for every t in ``times``; shape (M,) + values.shape."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    vals = np.broadcast_to(psi0.values, (times.size,) + psi0.values.shape)
    return apply_free(vals, psi0.lattice, psi0.dirac, times)


def energy_projectors(xi, dset, tol=0.0):
    """P_pm = (I pm G(xi)/<xi>_m)/2 at a single node."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    w = float(bracket_weight(xi, 1.0, dset.m))
    if w <= tol:
        raise DegenerateNodeError(xi)
    g = dset.generator(xi) / w
    eye = np.eye(dset.n)
    return 0.5 * (eye + g), 0.5 * (eye - g)


def projector_field(lattice, dset):
    """P_pm at every frequency node, (N**d, n, n) each; zero mode left at I/2."""
    xi = lattice.xi_points()
    w = bracket_weight(xi, 1.0, dset.m)
    safe = np.where(w > 0, w, 1.0)
    g = dset.generator(xi) / safe[:, None, None]
    eye = np.eye(dset.n)
    return 0.5 * (eye + g), 0.5 * (eye - g)


def dispersion_residuals(psi0, times):
    """Per-mode deviation of free evolution from the Klein-Gordon two-phase law.

    Each spectral coefficient must equal ``a e^{-2 pi i t w} + b e^{2 pi i t w}``
    with ``w = <k>_m`` and ``a + b``, ``a - b`` fixed at ``t = 0`` by the
    coefficient and its time derivative.  Returns (N**d,) maximal residuals
    over ``times`` relative to the largest coefficient of ``psi0``.
    """
    lat, dset = psi0.lattice, psi0.dirac
    xi = lat.xi_points()
    f0 = psi0.spectrum().reshape(lat.size, dset.n)
    w = bracket_weight(xi, 1.0, dset.m)
    # a - b from i d/dt f(0) = 2 pi G f0, divided by 2 pi w
    g = dset.generator(xi)
    gf = np.einsum("kab,kb->ka", g, f0)
    safe = np.where(w > 0, w, 1.0)
    diff = np.where((w > 0)[:, None], gf / safe[:, None], 0.0)
    a, b = 0.5 * (f0 + diff), 0.5 * (f0 - diff)
    scale = max(float(np.max(np.abs(f0))), np.finfo(float).tiny)
    traj = evolve_free_many(psi0, times)
    res = np.zeros(lat.size)
    for l, t in enumerate(np.atleast_1d(times)):
        ft = forward_ft(traj[l], lat).reshape(lat.size, dset.n)
        ph = np.exp(-2j * np.pi * t * w)[:, None]
        pred = a * ph + b * np.conj(ph)
        res = np.maximum(res, np.max(np.abs(ft - pred), axis=1) / scale)
    return res


def plane_wave(lattice, dset, k_index, branch=+1):
    """e^{2 pi i k.x} v with v a unit eigenvector of G(k) for eigenvalue branch*<k>_m."""
    xi_axes = lattice.xi_axes()
    k = np.array([xi_axes[a][i] for a, i in enumerate(k_index)])
    vals, vecs = np.linalg.eigh(dset.generator(k))
    v = vecs[:, -1] if branch > 0 else vecs[:, 0]
    phase = np.exp(2j * np.pi * sum(kk * g for kk, g in zip(k, lattice.x_grid())))
    return SpinorField(lattice, phase[..., None] * v, dset), k, float(vals[-1] if branch > 0 else vals[0])
