"""Periodic lattices, the lattice Fourier transform and bracket weights.

Conventions
-----------
x-nodes along an axis of period ``L`` with ``N`` points are
``x_k = -L/2 + k L/N``; frequency nodes are ``xi_j = (j - N/2)/L``, i.e.
centred (fftshifted) with spacing ``1/L``.  :func:`forward_ft` returns
samples of ``int e^{-2 pi i x.xi} f(x) dx`` by the rectangle rule, so the
transform carries the node measure ``dx^d`` and the pair is exact:
``inverse_ft(forward_ft(f)) == f``.  Norms weight sums by ``dx^d`` in x
and ``dxi^d`` in xi; with those weights the transform is unitary.

The frequency grid of a lattice is itself the x grid of
:meth:`Lattice.dual`, which has the same ``N`` and period ``N/L``.
"""

from dataclasses import dataclass, field
import numbers

import numpy as np
import scipy.fft as sfft


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Lattice:
    """``N**d`` nodes on a torus of period ``L`` per axis.

    ``L`` may be a tuple of per-axis periods; phase-space lattices use
    that to hold x-axes of period ``L`` next to xi-axes of period ``N/L``.
    """

    d: int
    N: int
    L: float | tuple = 1.0

    def __post_init__(self):
        if isinstance(self.d, bool) or not isinstance(self.d, numbers.Integral) or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.N, numbers.Integral) or not _is_pow2(int(self.N)):
            raise ValueError(f"N must be a power of two, got {self.N!r}")
        periods = tuple(float(p) for p in np.broadcast_to(np.asarray(self.L, dtype=float), (self.d,)))
        if any(p <= 0 or not np.isfinite(p) for p in periods):
            raise ValueError("periods must be positive and finite")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", periods[0] if len(set(periods)) == 1 else periods)

    @property
    def periods(self):
        return tuple(float(p) for p in np.broadcast_to(np.asarray(self.L, dtype=float), (self.d,)))

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def size(self):
        return self.N ** self.d

    @property
    def dx(self):
        return tuple(p / self.N for p in self.periods)

    @property
    def dxi(self):
        return tuple(1.0 / p for p in self.periods)

    @property
    def cell(self):
        """x node measure dx_1 ... dx_d."""
        return float(np.prod(self.dx))

    @property
    def dual_cell(self):
        return float(np.prod(self.dxi))

    def x_axes(self):
        return [-p / 2 + np.arange(self.N) * p / self.N for p in self.periods]

    def xi_axes(self):
        return [(np.arange(self.N) - self.N // 2) / p for p in self.periods]

    def x_grid(self):
        return np.meshgrid(*self.x_axes(), indexing="ij")

    def xi_grid(self):
        return np.meshgrid(*self.xi_axes(), indexing="ij")

    def x_points(self):
        """(N**d, d) node coordinates in row-major order."""
        return np.stack([g.ravel() for g in self.x_grid()], axis=-1)

    def xi_points(self):
        return np.stack([g.ravel() for g in self.xi_grid()], axis=-1)

    def dual(self):
        """Lattice whose x-nodes are this lattice's frequency nodes."""
        return Lattice(self.d, self.N, tuple(self.N / p for p in self.periods))

    def refined(self, factor=2):
        """Same periods, ``factor`` times more nodes per axis."""
        return Lattice(self.d, self.N * factor, self.L)

    def doubled(self):
        """Twice the period and twice the nodes (same spacing)."""
        return Lattice(self.d, self.N * 2, tuple(2 * p for p in self.periods))


def forward_ft(values, lattice, axes=None):
    """Lattice Fourier transform over the ``d`` spatial axes.

    ``axes`` defaults to the leading ``d`` axes of ``values``; any trailing
    axes (spinor components, matrix entries) are transformed componentwise.
    """
    axes = tuple(range(lattice.d)) if axes is None else tuple(axes)
    v = sfft.ifftshift(values, axes=axes)
    v = sfft.fftn(v, axes=axes)
    return sfft.fftshift(v, axes=axes) * lattice.cell


def inverse_ft(values, lattice, axes=None):
    """Inverse of :func:`forward_ft`; ``values`` live on the frequency nodes."""
    axes = tuple(range(lattice.d)) if axes is None else tuple(axes)
    v = sfft.ifftshift(values, axes=axes)
    v = sfft.ifftn(v, axes=axes)
    return sfft.fftshift(v, axes=axes) * (lattice.size * lattice.dual_cell)


def bracket_weight(z, s=1.0, m=1.0):
    """<z>_m^s = (m^2 + |z|^2)^(s/2) with |z| over the trailing axis.

    A scalar or 0-d ``z`` is treated as a single coordinate.
    """
    z = np.asarray(z, dtype=float)
    r2 = z * z if z.ndim == 0 else np.sum(z * z, axis=-1)
    return (m * m + r2) ** (0.5 * s)


def bracket_grid(axes, s, m=1.0):
    """<x>^s evaluated on the product grid spanned by 1-d ``axes``."""
    r2 = 0.0
    for i, a in enumerate(axes):
        shape = [1] * len(axes)
        shape[i] = a.size
        r2 = r2 + (a * a).reshape(shape)
    return (m * m + r2) ** (0.5 * s)


@dataclass(eq=False)
class SpinorField:
    """C^n-valued samples on a lattice; values have shape ``lattice.shape + (n,)``.

    Scalar fields are spinor fields with ``n = 1`` and no Dirac set.
    """

    lattice: Lattice
    values: np.ndarray = field(repr=False)
    dirac: object = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shp = self.lattice.shape
        if v.shape == shp:
            v = v[..., None]
        if v.shape[:-1] != shp:
            raise ValueError(f"values must have shape {shp} + (n,), got {v.shape}")
        if self.dirac is not None and v.shape[-1] != self.dirac.n:
            raise ValueError(f"field has {v.shape[-1]} components but the Dirac set has n={self.dirac.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @property
    def n(self):
        return self.values.shape[-1]

    @classmethod
    def zeros(cls, lattice, n, dirac=None):
        return cls(lattice, np.zeros(lattice.shape + (n,), dtype=complex), dirac)

    @classmethod
    def from_function(cls, lattice, func, spinor=None, dirac=None):
        """Sample ``func(*x_grid)`` and tensor it with a constant ``spinor``."""
        prof = np.asarray(func(*lattice.x_grid()), dtype=complex)
        if spinor is None:
            return cls(lattice, prof, dirac)
        spinor = np.asarray(spinor, dtype=complex)
        return cls(lattice, prof[..., None] * spinor, dirac)

    def with_values(self, values):
        return SpinorField(self.lattice, values, self.dirac)

    def spectrum(self):
        return forward_ft(self.values, self.lattice)

    def norm(self):
        """L^2 norm with node measure dx^d."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.lattice.cell))

    def spectral_norm(self):
        """L^2 norm of the spectrum with node measure dxi^d."""
        return float(np.sqrt(np.sum(np.abs(self.spectrum()) ** 2) * self.lattice.dual_cell))

    def inner(self, other):
        """<self, other> = sum (self_i, conj other_i) dx^d."""
        return complex(np.sum(self.values * np.conj(other.values)) * self.lattice.cell)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


def gaussian(lattice, width=1.0, center=None, normalized=True):
    """``2^{d/4} w^{-d/2} e^{-pi |x - c|^2 / w^2}`` (or without the prefactor)."""
    grids = lattice.x_grid()
    center = np.zeros(lattice.d) if center is None else np.broadcast_to(center, (lattice.d,))
    r2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    g = np.exp(-np.pi * r2 / width ** 2)
    if normalized:
        g = g * 2.0 ** (lattice.d / 4) * width ** (-lattice.d / 2)
    return g
