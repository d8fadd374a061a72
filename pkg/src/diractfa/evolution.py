"""Perturbed and nonlinear Dirac evolution by Picard iteration.

Both solvers work on a uniform time grid ``t_m = m dt`` and iterate the
Duhamel map in the interaction picture

    u(t_m) = U0(t_m) psi0 - i U0(t_m) int_0^{t_m} U0(-s) G(s, u(s)) ds,

with ``G = V(s) u`` (linear) or ``G = F(u)`` (nonlinear).  The integral is
the composite trapezoid rule, so each sweep is explicit.  After
convergence the quadrature residual at every grid time is the distance
between the trapezoid integral and a fourth-order cumulative Simpson
integral of the same integrand.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.integrate import cumulative_simpson

from . import kernels
from .lattice import SpinorField
from .propagator import apply_free
from .tfa import NormSpec, stft_norm


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (last increment {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class ContractionError(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class EvolutionConfig:
    """Horizon ``T``, step ``dt`` and Picard controls."""

    T: float
    dt: float
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        if self.dt > self.T * (1 + 1e-12):
            raise ValueError("dt must not exceed T")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be a positive integer")

    @property
    def steps(self):
        return max(1, int(round(self.T / self.dt)))

    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    def with_horizon(self, T):
        steps = max(1, int(round(self.steps * T / self.T)))
        return EvolutionConfig(T, T / steps, self.tol, self.max_iter)


@dataclass(eq=False)
class Trajectory:
    """Fields at the grid times; ``values`` has shape (M,) + field shape."""

    lattice: object
    dirac: object
    times: np.ndarray
    values: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(default=None, repr=False)
    iterations: int = 0
    increments: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def field(self, i):
        return SpinorField(self.lattice, self.values[i], self.dirac)

    def final(self):
        return self.field(-1)

    def l2_norms(self):
        axes = tuple(range(1, self.values.ndim))
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=axes) * self.lattice.cell)

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if self.residuals is not None else math.nan


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

class MultiplicationPotential:
    """Pointwise matrix field ``V(t, x)`` of shape lattice.shape + (n, n).

    ``values`` is either a fixed array or a callable ``t -> array``.
    """

    def __init__(self, values):
        self._func = values if callable(values) else None
        self._const = None if callable(values) else np.asarray(values, dtype=complex)
        if self._const is not None and not np.all(np.isfinite(self._const)):
            raise ValueError("potential entries must be finite")

    def at(self, t):
        v = self._const if self._func is None else np.asarray(self._func(t), dtype=complex)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"potential is not finite at t={t}")
        return v

    def apply(self, t, values):
        mats = self.at(t)
        n = values.shape[-1]
        out = kernels.matvec(np.broadcast_to(mats, values.shape + (n,)).reshape(-1, n, n), values.reshape(-1, n))
        return out.reshape(values.shape)

    def apply_many(self, times, stack):
        n = stack.shape[-1]
        if self._func is None:
            mats = np.broadcast_to(self._const, stack.shape + (n,))
        else:
            mats = np.stack([np.broadcast_to(self.at(t), stack.shape[1:] + (n,)) for t in times])
        return kernels.matvec(mats.reshape(-1, n, n), stack.reshape(-1, n)).reshape(stack.shape)

    def bound(self, times):
        return max(float(np.max(kernels.opnorm_numpy(self.at(t)))) for t in np.atleast_1d(times))


class WeylPotential:
    """Weyl operator ``sigma(t)^w``; ``symbol`` is a WeylSymbol or ``t -> WeylSymbol``."""

    def __init__(self, symbol):
        self._func = symbol if callable(symbol) else None
        self._const = None if callable(symbol) else symbol
        self._matrix = None
        self._key = None

    def matrix(self, t):
        from .weyl import quantize
        if self._func is None:
            if self._matrix is None:
                self._matrix = quantize(self._const)
            return self._matrix
        if self._key != t:
            self._matrix = quantize(self._func(t))
            self._key = t
        return self._matrix

    def apply(self, t, values):
        return (self.matrix(t) @ values.reshape(-1)).reshape(values.shape)

    def apply_many(self, times, stack):
        if self._func is None:
            flat = stack.reshape(stack.shape[0], -1)
            return (flat @ self.matrix(0.0).T).reshape(stack.shape)
        return np.stack([self.apply(t, v) for t, v in zip(times, stack)])

    def bound(self, times):
        # operator norm on L^2 equals the matrix 2-norm after the symmetric dx scaling
        return max(float(np.linalg.norm(self.matrix(t), 2)) for t in np.atleast_1d(times))


class ZeroPotential:
    def apply(self, t, values):
        return np.zeros_like(values)

    def apply_many(self, times, stack):
        return np.zeros_like(stack)

    def bound(self, times):
        return 0.0


def as_potential(V):
    if V is None:
        return ZeroPotential()
    if isinstance(V, (MultiplicationPotential, WeylPotential, ZeroPotential)):
        return V
    from .weyl import WeylSymbol
    if isinstance(V, WeylSymbol):
        return WeylPotential(V)
    return MultiplicationPotential(V)


# --------------------------------------------------------------------------
# Duhamel machinery
# --------------------------------------------------------------------------

def _l2_sup(diff, cell):
    axes = tuple(range(1, diff.ndim))
    return float(np.max(np.sqrt(np.sum(np.abs(diff) ** 2, axis=axes) * cell)))


def _interaction_integrand(G, times, lattice, dset):
    """w_l = U0(-t_l) G_l."""
    return apply_free(G, lattice, dset, -times)


def _trapezoid(w, dt):
    c = np.cumsum(w, axis=0)
    return dt * (c - 0.5 * w[0][None] - 0.5 * w)


def _duhamel(G, times, lattice, dset):
    """-i U0(t_m) int_0^{t_m} U0(-s) G(s) ds by the trapezoid rule."""
    dt = times[1] - times[0]
    w = _interaction_integrand(G, times, lattice, dset)
    return -1j * apply_free(_trapezoid(w, dt), lattice, dset, times)


def quadrature_residuals(G, times, lattice, dset):
    """Per-time L^2 gap between trapezoid and cumulative Simpson integrals."""
    dt = times[1] - times[0]
    w = _interaction_integrand(G, times, lattice, dset)
    ct = _trapezoid(w, dt)
    if len(times) < 3:
        return np.zeros(len(times))
    cs = (cumulative_simpson(w.real, dx=dt, axis=0, initial=0)
          + 1j * cumulative_simpson(w.imag, dx=dt, axis=0, initial=0))
    axes = tuple(range(1, w.ndim))
    return np.sqrt(np.sum(np.abs(cs - ct) ** 2, axis=axes) * lattice.cell)


def _check_field(psi0):
    if psi0.dirac is None:
        raise ValueError("evolution needs a field with an attached Dirac set")


def solve_linear(psi0, V, cfg):
    """Fixed point of the trapezoid-discretised Volterra equation.

    Raises :class:`ConvergenceError` if successive iterates stay farther
    apart (sup over grid times, L^2) than ``cfg.tol`` after
    ``cfg.max_iter`` sweeps.
    """
    _check_field(psi0)
    V = as_potential(V)
    lat, dset = psi0.lattice, psi0.dirac
    times = cfg.times()
    free = apply_free(np.broadcast_to(psi0.values, (len(times),) + psi0.values.shape), lat, dset, times)
    u = free
    increments = []
    for it in range(1, cfg.max_iter + 1):
        new = free + _duhamel(V.apply_many(times, u), times, lat, dset)
        inc = _l2_sup(new - u, lat.cell)
        increments.append(inc)
        u = new
        if inc < cfg.tol:
            break
    else:
        raise ConvergenceError("Picard iteration did not converge", increments[-1], cfg.max_iter)
    res = quadrature_residuals(V.apply_many(times, u), times, lat, dset)
    return Trajectory(lat, dset, times, u, res, it, increments)


def dyson_phillips_terms(psi0, V, cfg, order):
    """Terms ``U_0 .. U_order`` of the Dyson-Phillips series on the time grid.

    ``U_0(t) = U0(t) psi0`` and ``U_{k+1} = -i int U0(t - s) V(s) U_k(s) ds``;
    partial sums coincide with the Picard iterates of :func:`solve_linear`.
    """
    _check_field(psi0)
    V = as_potential(V)
    lat, dset = psi0.lattice, psi0.dirac
    times = cfg.times()
    term = apply_free(np.broadcast_to(psi0.values, (len(times),) + psi0.values.shape), lat, dset, times)
    terms = [term]
    for _ in range(order):
        term = _duhamel(V.apply_many(times, term), times, lat, dset)
        terms.append(term)
    return times, terms


def increment_ratios(terms, cell):
    """sup_t ||U_{k+1}|| / sup_t ||U_k|| for consecutive series terms."""
    sizes = [_l2_sup(t, cell) for t in terms]
    return np.array([b / a if a > 0 else 0.0 for a, b in zip(sizes[:-1], sizes[1:])]), np.array(sizes)


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearitySpec:
    """``zero``, ``power`` (|psi|^{2k} psi), ``thirring`` or ``general``.

    A general table lists ``(component, alpha, beta, coeff)`` meaning
    ``F_component += coeff * z^alpha conj(z)^beta`` with multi-indices over
    the spinor components; terms above total degree ``degree`` are dropped.
    """

    kind: str = "zero"
    k: int = 1
    terms: tuple = ()
    degree: int = None

    def __post_init__(self):
        if self.kind not in ("zero", "power", "thirring", "general"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power" and (int(self.k) != self.k or self.k < 1):
            raise ValueError("power nonlinearity needs a positive integer k")
        if self.kind == "general":
            clean = []
            for comp, alpha, beta, coeff in self.terms:
                alpha, beta = tuple(int(a) for a in alpha), tuple(int(b) for b in beta)
                if len(alpha) != len(beta) or min(alpha + beta) < 0:
                    raise ValueError("multi-indices must be non-negative and of equal length")
                if sum(alpha) + sum(beta) == 0:
                    raise ValueError("constant terms are not allowed, F(0) must vanish")
                coeff = complex(coeff)
                if not np.isfinite(coeff):
                    raise ValueError("coefficients must be finite")
                if self.degree is None or sum(alpha) + sum(beta) <= self.degree:
                    clean.append((int(comp), alpha, beta, coeff))
            object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def parse(cls, text, base_dir=None):
        """``none``, ``power:k``, ``thirring`` or ``general:path.json``."""
        head, _, arg = text.partition(":")
        if head in ("none", "zero"):
            return cls("zero")
        if head == "power":
            return cls("power", int(arg or 1))
        if head == "thirring":
            return cls("thirring")
        if head == "general":
            return cls.from_json(arg)
        raise ValueError(f"unknown nonlinearity {text!r}")

    @classmethod
    def from_json(cls, path):
        """Read ``{"degree": D, "terms": [{"component", "alpha", "beta", "coeff"}]}``.

        ``coeff`` is a number or a ``[re, im]`` pair.
        """
        with open(path) as fh:
            data = json.load(fh)
        terms = []
        for t in data.get("terms", []):
            c = t["coeff"]
            c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
            terms.append((t["component"], t["alpha"], t["beta"], c))
        return cls("general", terms=tuple(terms), degree=data.get("degree"))

    def to_json(self, path):
        data = {"degree": self.degree,
                "terms": [{"component": c, "alpha": list(a), "beta": list(b), "coeff": [v.real, v.imag]}
                          for c, a, b, v in self.terms]}
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)

    def conserves_charge(self):
        return self.kind in ("zero", "power", "thirring")


def _eval_values(values, F, dset=None):
    if F.kind == "zero":
        return np.zeros_like(values)
    if F.kind == "power":
        r2 = np.sum(np.abs(values) ** 2, axis=-1, keepdims=True)
        return r2 ** F.k * values
    if F.kind == "thirring":
        if dset is None:
            raise ValueError("the Thirring nonlinearity needs a Dirac set")
        a0v = values @ dset.alpha0.T
        bil = np.sum(a0v * np.conj(values), axis=-1, keepdims=True)
        return bil * a0v
    n = values.shape[-1]
    if not F.terms:
        return np.zeros_like(values)
    comp = np.array([t[0] for t in F.terms])
    alpha = np.array([t[1] for t in F.terms])
    beta = np.array([t[2] for t in F.terms])
    coeff = np.array([t[3] for t in F.terms])
    if alpha.shape[1] != n or comp.max() >= n:
        raise ValueError(f"coefficient table does not match n={n}")
    flat = values.reshape(-1, n)
    return kernels.poly_eval(flat, comp, alpha, beta, coeff).reshape(values.shape)


def eval_nonlinearity(psi, F, dset=None):
    """Pointwise F(psi) as a field on the same lattice."""
    dset = dset if dset is not None else psi.dirac
    return psi.with_values(_eval_values(psi.values, F, dset))


# --------------------------------------------------------------------------
# nonlinear solver
# --------------------------------------------------------------------------

@dataclass
class Certificate:
    contraction_factors: list
    residuals: list
    horizon_used: float
    xnorm: str
    l2_increments: list
    restarts: int
    quadrature_residual: float = math.nan
    converged: bool = True

    def to_dict(self):
        return {"contraction_factors": list(self.contraction_factors),
                "residuals": list(self.residuals),
                "horizon_used": self.horizon_used,
                "xnorm": self.xnorm,
                "l2_increments": list(self.l2_increments),
                "restarts": self.restarts,
                "quadrature_residual": self.quadrature_residual,
                "converged": self.converged}


def x_norm_sup(stack, lattice, spec, samples):
    """sup over ``samples`` time indices of the X-norm of the slices."""
    return max(stft_norm(stack[i], spec, lattice=lattice).value for i in samples)


def _nonlinear_attempt(psi0, F, cfg, spec, n_samples):
    lat, dset = psi0.lattice, psi0.dirac
    times = cfg.times()
    free = apply_free(np.broadcast_to(psi0.values, (len(times),) + psi0.values.shape), lat, dset, times)
    samples = np.unique(np.linspace(0, len(times) - 1, n_samples).round().astype(int))
    u = free
    xinc, linc, factors = [], [], []
    for it in range(1, cfg.max_iter + 1):
        new = free + _duhamel(_eval_values(u, F, dset), times, lat, dset)
        diff = new - u
        li = _l2_sup(diff, lat.cell)
        xi = x_norm_sup(diff, lat, spec, samples) if li > 0 else 0.0
        if xinc and xinc[-1] > 0:
            factors.append(xi / xinc[-1])
        xinc.append(xi)
        linc.append(li)
        u = new
        if li < cfg.tol:
            return u, times, factors, xinc, linc, True
        # a factor above 1 after the start-up sweep means no contraction
        if len(factors) >= 2 and factors[-1] > 1.0:
            return u, times, factors, xinc, linc, False
    return u, times, factors, xinc, linc, False


def solve_nonlinear(psi0, F, cfg, xnorm="M:2:1:0:0", min_horizon=None, n_samples=9):
    """Picard iteration of the nonlinear Duhamel map with horizon halving.

    Returns ``(trajectory, certificate)``.  The certificate records the
    X-norm contraction factor of every sweep (X defaults to M^{2,1}, on
    which the free flow is an isometry), the X and L^2 increments and the
    horizon finally used.  When a sweep expands or ``max_iter`` is reached
    the horizon is halved, down to ``min_horizon`` (default ``T/64``).
    """
    _check_field(psi0)
    spec = NormSpec.parse(xnorm) if isinstance(xnorm, str) else xnorm
    floor = cfg.T / 64 if min_horizon is None else min_horizon
    restarts = 0
    history = []
    while True:
        u, times, factors, xinc, linc, ok = _nonlinear_attempt(psi0, F, cfg, spec, n_samples)
        if ok:
            res = quadrature_residuals(_eval_values(u, F, psi0.dirac), times, psi0.lattice, psi0.dirac)
            cert = Certificate(factors, xinc, float(cfg.T), str(spec), linc, restarts, float(np.max(res)))
            traj = Trajectory(psi0.lattice, psi0.dirac, times, u, res, len(linc), linc)
            return traj, cert
        history.append({"horizon": cfg.T, "factors": factors, "l2_increments": linc})
        if cfg.T / 2 < floor:
            raise ContractionError(f"no contraction for horizons down to {cfg.T:g}", history)
        cfg = cfg.with_horizon(cfg.T / 2)
        restarts += 1


def charge_drift(traj):
    """max_t | ||psi(t)||^2 - ||psi(0)||^2 |."""
    q = traj.l2_norms() ** 2
    return float(np.max(np.abs(q - q[0])))
