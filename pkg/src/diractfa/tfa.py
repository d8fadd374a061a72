"""Short-time Fourier transform, weighted mixed norms and BUPU norms.

Phase-space arrays keep the ``d`` x-axes first, then the ``d`` xi-axes,
then the value axes (none for scalars, ``(n,)`` for spinors, ``(n, n)``
for matrices).  Pointwise sizes are the modulus, the Euclidean norm and
the operator norm respectively.

Mixed norms follow the placement rule

* kind ``M``: inner ``L^p`` over x weighted by ``<x>^r``, outer ``L^q``
  over xi weighted by ``<xi>^s``;
* kind ``W``: inner ``L^p`` over xi weighted by ``<xi>^r``, outer ``L^q``
  over x weighted by ``<x>^s``.

Integrals are node sums times ``dx^d`` (or ``dxi^d``); an x-stride
multiplies the x measure by ``x_step^d``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.fft as sfft

from .kernels import opnorm
from .lattice import Lattice, SpinorField, bracket_grid, forward_ft, gaussian, inverse_ft

TAIL_THRESHOLD = 1e-8
TAIL_SHELL = 0.9


# --------------------------------------------------------------------------
# windows and value handling
# --------------------------------------------------------------------------

@dataclass(eq=False)
class Window:
    """Scalar window sampled on a lattice."""

    lattice: Lattice
    profile: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.profile, dtype=complex)
        if p.shape != self.lattice.shape:
            raise ValueError(f"window must have shape {self.lattice.shape}, got {p.shape}")
        if not np.all(np.isfinite(p)) or not np.any(p != 0):
            raise ValueError("window must be finite and nonzero")
        self.profile = p

    @classmethod
    def gaussian(cls, lattice, width=1.0):
        """L^2-normalised Gaussian ``2^{d/4} e^{-pi x^2}`` (scaled by ``width``)."""
        return cls(lattice, gaussian(lattice, width))

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.profile) ** 2) * self.lattice.cell))

    def spectrum(self):
        return forward_ft(self.profile, self.lattice)


def _values_of(f, lattice=None):
    """Return ``(lattice, values, vkind)`` for a field or raw array."""
    if isinstance(f, SpinorField):
        return f.lattice, f.values, "spinor"
    if lattice is None:
        raise ValueError("a lattice is required for raw arrays")
    v = np.asarray(f, dtype=complex)
    extra = v.ndim - lattice.d
    if v.shape[:lattice.d] != lattice.shape or extra not in (0, 1, 2):
        raise ValueError(f"array of shape {v.shape} does not live on {lattice}")
    return lattice, v, ("scalar", "spinor", "matrix")[extra]


def pointwise_size(values, vkind):
    """|.| for scalars, Euclidean norm for spinors, operator norm for matrices."""
    if vkind == "scalar":
        return np.abs(values)
    if vkind == "spinor":
        return np.sqrt(np.sum(values.real ** 2 + values.imag ** 2, axis=-1))
    return opnorm(values)


@dataclass(eq=False)
class PhaseSpaceArray:
    """Samples on (x-nodes, xi-nodes) of a lattice.

    ``x_step`` records the stride of the x-nodes actually sampled.
    """

    lattice: Lattice
    values: np.ndarray = field(repr=False)
    vkind: str = "scalar"
    x_step: int = 1

    def __post_init__(self):
        v = np.asarray(self.values)
        d = self.lattice.d
        xs = tuple(len(range(0, self.lattice.N, self.x_step)) for _ in range(d))
        nv = {"scalar": 0, "spinor": 1, "matrix": 2}[self.vkind]
        if v.shape[:2 * d] != xs + self.lattice.shape or v.ndim != 2 * d + nv:
            raise ValueError(f"values of shape {v.shape} inconsistent with {self.vkind} array on {self.lattice}")
        if not np.all(np.isfinite(v)):
            raise ValueError("phase-space values must be finite")
        self.values = v

    def x_axes(self):
        return [a[::self.x_step] for a in self.lattice.x_axes()]

    def xi_axes(self):
        return self.lattice.xi_axes()

    def size(self):
        return pointwise_size(self.values, self.vkind)


# --------------------------------------------------------------------------
# norm specification and results
# --------------------------------------------------------------------------

def _exponent(v):
    if isinstance(v, str):
        v = v.strip().lower()
        v = math.inf if v in ("inf", "infinity", "oo") else float(v)
    v = float(v)
    if not (v >= 1.0):
        raise ValueError(f"exponent must lie in [1, inf], got {v}")
    return v


@dataclass(frozen=True)
class NormSpec:
    """Weighted mixed norm ``kind^{p,q}_{r,s}`` with kind ``M`` or ``W``."""

    kind: str = "M"
    p: float = 2.0
    q: float = 2.0
    r: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in ("M", "W"):
            raise ValueError(f"kind must be M or W, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "p", _exponent(self.p))
        object.__setattr__(self, "q", _exponent(self.q))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "s", float(self.s))

    @classmethod
    def parse(cls, text):
        """Parse ``"M:p:q:r:s"`` (``r`` and ``s`` optional, ``inf`` allowed)."""
        parts = text.split(":")
        if len(parts) < 3 or len(parts) > 5:
            raise ValueError(f"norm spec must look like M:p:q[:r[:s]], got {text!r}")
        return cls(parts[0], parts[1], parts[2], *[float(x) for x in parts[3:]])

    def __str__(self):
        fmt = lambda v: "inf" if math.isinf(v) else f"{v:g}"
        return f"{self.kind}:{fmt(self.p)}:{fmt(self.q)}:{self.r:g}:{self.s:g}"


@dataclass
class NormResult:
    value: float
    tail_fraction: float
    flagged: bool
    method: str = "direct"
    spec: NormSpec = None

    def __float__(self):
        return float(self.value)

    def to_dict(self):
        return {"value": self.value, "tail_fraction": self.tail_fraction,
                "flagged": self.flagged, "method": self.method,
                "spec": str(self.spec) if self.spec is not None else None}


def _lp(a, p, weight, axis):
    """(sum a^p weight)^(1/p) along ``axis``; exact max for p = inf."""
    if math.isinf(p):
        return np.max(a, axis=axis)
    if p == 1.0:
        return np.sum(a, axis=axis) * weight
    return (np.sum(a ** p, axis=axis) * weight) ** (1.0 / p)


def _shell_mask(axes, periods):
    """True on nodes with any coordinate in the outer 10% of its half-period."""
    mask = np.zeros([a.size for a in axes], dtype=bool)
    for i, (a, p) in enumerate(zip(axes, periods)):
        shape = [1] * len(axes)
        shape[i] = a.size
        mask = mask | (np.abs(a) >= TAIL_SHELL * p / 2).reshape(shape)
    return mask


def _xi_periods(lattice):
    return tuple(lattice.N / p for p in lattice.periods)


# --------------------------------------------------------------------------
# short-time Fourier transform
# --------------------------------------------------------------------------

def _x_indices(lattice, x_step):
    sub = [np.arange(0, lattice.N, x_step)] * lattice.d
    grids = np.meshgrid(*sub, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _stft_chunks(f, window=None, lattice=None, x_step=1, chunk=None):
    """Yield ``(start, block, vkind)`` with block shaped (c, xi..., vdims)."""
    lattice, vals, vkind = _values_of(f, lattice)
    if window is None:
        window = Window.gaussian(lattice)
    elif not isinstance(window, Window):
        window = Window(lattice, window)
    if window.lattice.shape != lattice.shape or window.lattice.periods != lattice.periods:
        raise ValueError("signal and window must share a lattice")
    d, N = lattice.d, lattice.N
    gc = np.conj(window.profile)
    xidx = _x_indices(lattice, x_step)
    if chunk is None:
        per = max(1, vals.size // lattice.size)
        chunk = max(1, int(2 ** 22 // (lattice.size * per)))
    nvals = vals.ndim - d
    # transform axes last and pre-shifted so the FFT runs on contiguous rows
    sp = tuple(range(nvals, nvals + d))
    vt = sfft.ifftshift(np.moveaxis(vals, tuple(range(d)), sp), axes=sp)
    ar = np.arange(N)
    for start in range(0, xidx.shape[0], chunk):
        ks = xidx[start:start + chunk]
        c = ks.shape[0]
        # window T_x g at shifted position j is g[(j - k) mod N] per axis
        idx = []
        for a in range(d):
            shape = [c] + [1] * d
            shape[a + 1] = N
            idx.append(((ar[None, :] - ks[:, a, None]) % N).reshape(shape))
        wins = gc[tuple(idx)]
        prod = vt[None] * wins.reshape((c,) + (1,) * nvals + lattice.shape)
        axes = tuple(range(1 + nvals, 1 + nvals + d))
        block = sfft.fftshift(sfft.fftn(prod, axes=axes, overwrite_x=True), axes=axes)
        block *= lattice.cell
        block = np.moveaxis(block, tuple(range(1, 1 + nvals)), tuple(range(1 + d, 1 + d + nvals)))
        yield start, block, vkind


def stft(f, window=None, lattice=None, x_step=1, chunk=None):
    """V_g f(x, xi) = int f(y) conj(g(y - x)) e^{-2 pi i y.xi} dy on the lattice.

    Parameters
    ----------
    f : SpinorField or array
        Field values; raw arrays need ``lattice`` and may carry zero, one
        or two trailing value axes.
    window : Window or array, optional
        Defaults to the L^2-normalised Gaussian.
    x_step : int
        Stride of the x-nodes at which the transform is sampled.
    """
    lat, vals, vkind = _values_of(f, lattice)
    nx = len(range(0, lat.N, x_step))
    out = np.empty((nx ** lat.d,) + lat.shape + vals.shape[lat.d:], dtype=complex)
    for start, block, _ in _stft_chunks(f, window, lattice, x_step, chunk):
        out[start:start + block.shape[0]] = block
    out = out.reshape((nx,) * lat.d + out.shape[1:])
    return PhaseSpaceArray(lat, out, vkind, x_step)


def tail_fraction(V):
    """Share of the |V|^2 mass in the outer 10% shell of the phase-space lattice."""
    lat = V.lattice
    a2 = V.size() ** 2
    total = float(np.sum(a2))
    if total == 0.0:
        return 0.0
    mask = _shell_mask(V.x_axes() + V.xi_axes(), lat.periods + _xi_periods(lat))
    return float(np.sum(a2[mask]) / total)


def mixed_norm(V, spec, threshold=TAIL_THRESHOLD):
    """Weighted mixed norm of a phase-space array; returns a :class:`NormResult`."""
    if isinstance(spec, str):
        spec = NormSpec.parse(spec)
    lat = V.lattice
    d = lat.d
    a = V.size().reshape(-1, lat.size)  # (x-nodes, xi-nodes)
    wx = lat.cell * V.x_step ** d
    wxi = lat.dual_cell
    bx = bracket_grid(V.x_axes(), 1.0).ravel()
    bxi = bracket_grid(V.xi_axes(), 1.0).ravel()
    if spec.kind == "M":
        inner = _lp(a * (bx ** spec.r)[:, None], spec.p, wx, axis=0)
        value = _lp(inner * bxi ** spec.s, spec.q, wxi, axis=0)
    else:
        inner = _lp(a * (bxi ** spec.r)[None, :], spec.p, wxi, axis=1)
        value = _lp(inner * bx ** spec.s, spec.q, wx, axis=0)
    tf = tail_fraction(V)
    return NormResult(float(value), tf, tf > threshold, "direct", spec)


def stft_norm(f, spec, window=None, lattice=None, x_step=1, chunk=None, threshold=TAIL_THRESHOLD):
    """:func:`mixed_norm` of :func:`stft` without storing the whole array."""
    if isinstance(spec, str):
        spec = NormSpec.parse(spec)
    lat, _, _ = _values_of(f, lattice)
    d = lat.d
    wx = lat.cell * x_step ** d
    wxi = lat.dual_cell
    xaxes = [a[::x_step] for a in lat.x_axes()]
    bx = bracket_grid(xaxes, 1.0).ravel()
    bxi = bracket_grid(lat.xi_axes(), 1.0).ravel()
    shell_xi = _shell_mask(lat.xi_axes(), _xi_periods(lat)).ravel()
    shell_x = _shell_mask(xaxes, lat.periods).ravel()
    acc_m = np.zeros(lat.size)
    inner_w = np.zeros(bx.size)
    total = shell = 0.0
    for start, block, vkind in _stft_chunks(f, window, lattice, x_step, chunk):
        a = pointwise_size(block, vkind).reshape(block.shape[0], -1)
        sl = slice(start, start + a.shape[0])
        a2 = a * a
        total += float(np.sum(a2))
        shell += float(np.sum(a2[shell_x[sl]])) + float(np.sum(a2[~shell_x[sl]][:, shell_xi]))
        if spec.kind == "M":
            w = a * (bx[sl] ** spec.r)[:, None]
            if math.isinf(spec.p):
                acc_m = np.maximum(acc_m, np.max(w, axis=0))
            else:
                acc_m += np.sum(w ** spec.p, axis=0)
        else:
            inner_w[sl] = _lp(a * (bxi ** spec.r)[None, :], spec.p, wxi, axis=1)
    if spec.kind == "M":
        inner = acc_m if math.isinf(spec.p) else (acc_m * wx) ** (1.0 / spec.p)
        value = _lp(inner * bxi ** spec.s, spec.q, wxi, axis=0)
    else:
        value = _lp(inner_w * bx ** spec.s, spec.q, wx, axis=0)
    tf = shell / total if total > 0 else 0.0
    return NormResult(float(value), tf, tf > threshold, "direct", spec)


def field_norm(f, spec, method="direct", window=None, lattice=None, x_step=1, bupu=None):
    """Norm of a field by the STFT (``direct``) or the BUPU decomposition (``bupu``)."""
    if isinstance(spec, str):
        spec = NormSpec.parse(spec)
    if method == "direct":
        return stft_norm(f, spec, window, lattice, x_step)
    if method == "bupu":
        lat, _, _ = _values_of(f, lattice)
        if bupu is None:
            bupu = build_bupu(lat, "frequency" if spec.kind == "M" else "space")
        return uniform_decomposition_norm(f, spec, bupu, lattice)
    raise ValueError(f"unknown norm method {method!r}")


# --------------------------------------------------------------------------
# bounded uniform partition of unity
# --------------------------------------------------------------------------

def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C^infinity step: 0 for t <= 0, 1 for t >= 1."""
    a = _h(t)
    return a / (a + _h(1.0 - np.asarray(t, dtype=float)))


def base_bump(t):
    """One-dimensional bump, 1 on [0, 1] and 0 outside (-1, 2)."""
    t = np.asarray(t, dtype=float)
    return smooth_step(t + 1.0) * smooth_step(2.0 - t)


@dataclass(eq=False)
class Bupu:
    """Separable BUPU ``psi_k = prod_a psi1[a][k_a]`` on a periodic axis set.

    ``domain`` is ``"frequency"`` (bumps act on the xi-nodes, for kind M)
    or ``"space"`` (bumps act on the x-nodes, for kind W).  ``centers`` are
    the integer translates ``k`` (one per row).
    """

    lattice: Lattice
    domain: str
    offsets: list
    tables: list = field(repr=False)
    raw_tables: list = field(repr=False)

    @property
    def centers(self):
        grids = np.meshgrid(*self.offsets, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def __len__(self):
        return int(np.prod([len(o) for o in self.offsets]))

    def bump(self, k_index):
        """psi_k on the lattice for a multi-index into ``offsets``."""
        out = np.ones(())
        for a, i in enumerate(k_index):
            shape = [1] * self.lattice.d
            shape[a] = self.lattice.N
            out = out * self.tables[a][i].reshape(shape)
        return out

    def raw_bump(self, k_index):
        out = np.ones(())
        for a, i in enumerate(k_index):
            shape = [1] * self.lattice.d
            shape[a] = self.lattice.N
            out = out * self.raw_tables[a][i].reshape(shape)
        return out

    def indices(self):
        return np.ndindex(*[len(o) for o in self.offsets])

    def overlap_count(self):
        """Number of bumps with nonzero value at each node."""
        cnt = np.ones(())
        for a in range(self.lattice.d):
            shape = [1] * self.lattice.d
            shape[a] = self.lattice.N
            cnt = cnt * np.sum(self.tables[a] > 0, axis=0).reshape(shape)
        return np.broadcast_to(cnt, self.lattice.shape)

    def total(self):
        s = np.ones(())
        for a in range(self.lattice.d):
            shape = [1] * self.lattice.d
            shape[a] = self.lattice.N
            s = s * np.sum(self.tables[a], axis=0).reshape(shape)
        return np.broadcast_to(s, self.lattice.shape)


def build_bupu(lattice, domain="frequency"):
    """Unit-cube BUPU on the frequency nodes (default) or on the x-nodes.

    The periodic axis must have an integer period of at least 4 and at
    least 8 nodes per unit length.
    """
    if domain == "frequency":
        axes, periods = lattice.xi_axes(), _xi_periods(lattice)
    elif domain == "space":
        axes, periods = lattice.x_axes(), lattice.periods
    else:
        raise ValueError(f"domain must be 'frequency' or 'space', got {domain!r}")
    offsets, tables, raws = [], [], []
    for a, P in zip(axes, periods):
        if lattice.N / P < 8:
            raise ValueError(f"lattice too coarse for a unit BUPU: {lattice.N / P:g} nodes per unit, need 8")
        if abs(P - round(P)) > 1e-9 or round(P) < 4:
            raise ValueError(f"BUPU axis period must be an integer >= 4, got {P:g}")
        P = int(round(P))
        ks = np.arange(-P // 2, P - P // 2)
        # periodised translates phi(t - k - jP), j in {-1, 0, 1}
        raw = np.zeros((ks.size, a.size))
        for i, k in enumerate(ks):
            for j in (-1, 0, 1):
                raw[i] += base_bump(a - k - j * P)
        tot = np.sum(raw, axis=0)
        offsets.append(ks)
        raws.append(raw)
        tables.append(raw / tot[None, :])
    return Bupu(lattice, domain, offsets, tables, raws)


def _field_tail(lattice, vals, vkind):
    a2 = pointwise_size(vals, vkind) ** 2
    total = float(np.sum(a2))
    if total == 0.0:
        return 0.0
    spec = pointwise_size(forward_ft(vals, lattice), vkind) ** 2
    fx = float(np.sum(a2[_shell_mask(lattice.x_axes(), lattice.periods)])) / total
    fxi = float(np.sum(spec[_shell_mask(lattice.xi_axes(), _xi_periods(lattice))])) / float(np.sum(spec))
    return max(fx, fxi)


def uniform_decomposition_norm(f, spec, bupu, lattice=None, threshold=TAIL_THRESHOLD):
    """Discrete norm through the BUPU.

    Kind ``M``: ``(sum_k ||box_k f||_{L^p_r}^q <k>^{sq})^{1/q}`` with
    ``box_k = F^{-1} psi_k F``.  Kind ``W``: ``(sum_k ||F(psi_k f)||_{L^p_r}^q
    <k>^{sq})^{1/q}`` with space-domain bumps.
    """
    if isinstance(spec, str):
        spec = NormSpec.parse(spec)
    lat, vals, vkind = _values_of(f, lattice if lattice is not None else bupu.lattice)
    nv = vals.ndim - lat.d
    if spec.kind == "M" and bupu.domain != "frequency" or spec.kind == "W" and bupu.domain != "space":
        raise ValueError(f"kind {spec.kind} needs a {'frequency' if spec.kind == 'M' else 'space'} BUPU")
    if spec.kind == "M":
        fhat = forward_ft(vals, lat)
        weight = bracket_grid(lat.x_axes(), spec.r)
        meas = lat.cell
    else:
        weight = bracket_grid(lat.xi_axes(), spec.r)
        meas = lat.dual_cell
    pieces, kw = [], []
    centers = bupu.centers
    for n, idx in enumerate(bupu.indices()):
        psi = bupu.bump(idx)
        psi = psi.reshape(psi.shape + (1,) * nv)
        if spec.kind == "M":
            piece = inverse_ft(psi * fhat, lat)
        else:
            piece = forward_ft(psi * vals, lat)
        a = pointwise_size(piece, vkind) * weight
        pieces.append(_lp(a.ravel(), spec.p, meas, axis=0))
        kw.append(float(np.sqrt(1.0 + np.sum(centers[n] ** 2.0)) ** spec.s))
    value = _lp(np.asarray(pieces) * np.asarray(kw), spec.q, 1.0, axis=0)
    tf = _field_tail(lat, vals, vkind)
    return NormResult(float(value), tf, tf > threshold, "bupu", spec)


# --------------------------------------------------------------------------
# Bernstein-type bound
# --------------------------------------------------------------------------

def bernstein_bound_check(f, lattice=None, order=None):
    """Return ``(||f^||_{L^1}, ||f||_2^{1-d/2N} (sum_j ||d_j^N f||_2)^{d/2N})``.

    ``order`` is the derivative order ``N`` (default ``ceil(d/2) + 1``,
    must exceed ``d/2``).  Derivatives are spectral.
    """
    lat, vals, vkind = _values_of(f, lattice)
    d = lat.d
    N = order if order is not None else math.ceil(d / 2) + 1
    if N <= d / 2:
        raise ValueError(f"derivative order must exceed d/2, got {N}")
    fhat = forward_ft(vals, lat)
    size = pointwise_size(fhat, vkind)
    lhs = float(np.sum(size) * lat.dual_cell)
    if lhs == 0.0:
        return 0.0, 0.0
    l2 = float(np.sqrt(np.sum(size ** 2) * lat.dual_cell))
    grids = lat.xi_grid()
    deriv = sum(float(np.sqrt(np.sum((size * np.abs(2 * np.pi * g) ** N) ** 2) * lat.dual_cell)) for g in grids)
    theta = d / (2.0 * N)
    return lhs, l2 ** (1.0 - theta) * deriv ** theta
