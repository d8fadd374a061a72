"""Desk-scale experiments: growth exponents, smoothing ratios and suites.

Suite configuration is an INI file::

    [suite]
    seed = 1234
    experiments = free-growth-d1, free-growth-d1-l2

    [free-growth-d1]      ; optional overrides for one experiment
    N = 1024
    L = 64
    sentinel = yes

Every experiment writes ``<id>.csv`` (columns ``t, norm, tail_fraction``)
and ``<id>.json`` into the output directory.
"""

import configparser
import csv
from dataclasses import dataclass, field
import json
import math
import os

import numpy as np
from scipy import stats

from .clifford import build_dirac_matrices
from .lattice import Lattice, SpinorField, gaussian
from .propagator import dispersion_residuals, evolve_free_many
from .tfa import NormSpec, stft_norm

SENTINEL_DRIFT = 0.02


class TailError(RuntimeError):
    """A norm in the series was flagged by the tail diagnostic."""


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# data helpers
# --------------------------------------------------------------------------

def gaussian_datum(lattice, dset, width=1.0, spinor=None, amplitude=1.0):
    """Normalised Gaussian profile times a unit spinor (default e_1)."""
    if spinor is None:
        spinor = np.zeros(dset.n)
        spinor[0] = 1.0
    spinor = np.asarray(spinor, dtype=complex)
    spinor = spinor / np.linalg.norm(spinor)
    return SpinorField(lattice, amplitude * gaussian(lattice, width)[..., None] * spinor, dset)


def random_corpus(lattice, count, seed, n=1, packets=3, dset=None):
    """Sums of random Gaussian wave packets well inside the lattice.

    Centres lie in the inner quarter of each axis and modulations in the
    inner quarter of the frequency range, so tails stay negligible.
    """
    rng = np.random.default_rng(seed)
    grids = lattice.x_grid()
    out = []
    for _ in range(count):
        vals = np.zeros(lattice.shape + (n,), dtype=complex)
        for _ in range(packets):
            c = [rng.uniform(-p / 8, p / 8) for p in lattice.periods]
            k = [rng.uniform(-lattice.N / p / 8, lattice.N / p / 8) for p in lattice.periods]
            w = rng.uniform(0.6, 1.6)
            r2 = sum((g - ci) ** 2 for g, ci in zip(grids, c))
            prof = np.exp(-np.pi * r2 / w ** 2) * np.exp(2j * np.pi * sum(ki * g for ki, g in zip(k, grids)))
            amp = rng.normal(size=n) + 1j * rng.normal(size=n)
            vals += prof[..., None] * amp
        out.append(SpinorField(lattice, vals, dset))
    return out


# --------------------------------------------------------------------------
# growth exponent
# --------------------------------------------------------------------------

@dataclass
class GrowthFit:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple
    residual_rms: float
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    tail_fractions: np.ndarray = field(repr=False)
    witness: str = "refocus"

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "ci95": list(self.ci95), "residual_rms": self.residual_rms, "witness": self.witness}


def growth_series(psi0, spec, times, witness="refocus", x_step=1):
    """Norm series used by :func:`fit_growth_exponent`.

    ``forward``: ``||U0(t) psi0||``.  ``refocus``: ``||psi0|| / ||U0(-t) psi0||``,
    the growth the free flow realises on the datum ``U0(-t) psi0`` and so a
    lower bound for the operator constant C(t).
    """
    times = np.asarray(times, dtype=float)
    lat, dset = psi0.lattice, psi0.dirac
    if witness == "forward":
        stack = evolve_free_many(psi0, times)
    elif witness == "refocus":
        stack = evolve_free_many(psi0, -times)
    else:
        raise ValueError(f"unknown witness {witness!r}")
    norms, tails = np.empty(times.size), np.empty(times.size)
    flagged = False
    for i in range(times.size):
        r = stft_norm(SpinorField(lat, stack[i], dset), spec, x_step=x_step)
        norms[i], tails[i] = r.value, r.tail_fraction
        flagged |= r.flagged
    if witness == "refocus":
        r0 = stft_norm(psi0, spec, x_step=x_step)
        flagged |= r0.flagged
        tails = np.maximum(tails, r0.tail_fraction)
        norms = r0.value / norms
    return norms, tails, flagged


def fit_growth_exponent(psi0, spec, times, witness="refocus", x_step=1):
    """Least-squares slope of ``log norm`` against ``log(1 + t)``.

    Raises :class:`TailError` when any norm in the series is flagged by the
    tail diagnostic, and ``ValueError`` unless ``spec`` is of kind M with
    ``r = 0``.
    """
    spec = NormSpec.parse(spec) if isinstance(spec, str) else spec
    if spec.kind != "M" or spec.r != 0:
        raise ValueError("growth fits need a modulation norm with r = 0")
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise ValueError("need at least three times for a fit")
    norms, tails, flagged = growth_series(psi0, spec, times, witness, x_step)
    if flagged:
        raise TailError(f"tail fraction {np.max(tails):.2e} exceeds the diagnostic threshold")
    X, Y = np.log1p(times), np.log(norms)
    lr = stats.linregress(X, Y)
    tq = stats.t.ppf(0.975, times.size - 2)
    resid = Y - (lr.intercept + lr.slope * X)
    return GrowthFit(float(lr.slope), float(lr.intercept), float(lr.stderr),
                     (float(lr.slope - tq * lr.stderr), float(lr.slope + tq * lr.stderr)),
                     float(np.sqrt(np.mean(resid ** 2))), times, norms, tails, witness)


# --------------------------------------------------------------------------
# smoothing ratio
# --------------------------------------------------------------------------

@dataclass
class SmoothingResult:
    times: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    gamma: float = 0.0
    degenerate: bool = False
    tail_fractions: np.ndarray = field(default=None, repr=False)

    @property
    def max_ratio(self):
        return math.nan if self.degenerate else float(np.max(self.ratios))


def smoothing_ratio(psi0, p, q, s, gamma=None, times=None, x_step=1):
    """``||U0(t) psi0||_{M^{p,q}_{0,s}} / (||psi0||_{M^{p,q}_{0,s}} + t^gamma ||psi0||_{M^{p,q}_{0,s-gamma}})``.

    ``gamma`` defaults to ``d |1/2 - 1/p|``; all times must exceed 1.  A zero
    datum is reported as degenerate with NaN ratios.
    """
    d = psi0.lattice.d
    if gamma is None:
        gamma = d * abs(0.5 - (0.0 if math.isinf(p) else 1.0 / p))
    times = np.asarray(times, dtype=float)
    if np.any(times <= 1.0):
        raise ValueError("smoothing ratios are defined for t > 1")
    if not np.any(psi0.values):
        return SmoothingResult(times, np.full(times.size, np.nan), gamma, True)
    top = NormSpec("M", p, q, 0, s)
    low = NormSpec("M", p, q, 0, s - gamma)
    n_top = stft_norm(psi0, top, x_step=x_step).value
    n_low = stft_norm(psi0, low, x_step=x_step).value
    stack = evolve_free_many(psi0, times)
    ratios, tails = np.empty(times.size), np.empty(times.size)
    for i, t in enumerate(times):
        r = stft_norm(SpinorField(psi0.lattice, stack[i], psi0.dirac), top, x_step=x_step)
        ratios[i] = r.value / (n_top + t ** gamma * n_low)
        tails[i] = r.tail_fraction
    return SmoothingResult(times, ratios, gamma, False, tails)


# --------------------------------------------------------------------------
# reports and suites
# --------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    experiment_id: str
    parameters: dict
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    tail_fractions: np.ndarray = field(repr=False)
    fitted: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    passed: bool = True
    sentinel_drift: float = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"experiment_id": self.experiment_id, "parameters": self.parameters,
                "fitted": self.fitted, "tolerance": self.tolerance, "passed": self.passed,
                "sentinel_drift": self.sentinel_drift, "flags": list(self.flags)}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm", "tail_fraction"])
            for t, n, tf in zip(self.times, self.norms, self.tail_fractions):
                w.writerow([repr(float(t)), repr(float(n)), repr(float(tf))])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _growth_params(over, p_default):
    return {
        "dim": over.getint("dim", 1),
        "mass": over.getfloat("mass", 1.0),
        "N": over.getint("N", 1024),
        "L": over.getfloat("L", 64.0),
        "width": over.getfloat("width", 2.5),
        "spec": over.get("spec", f"M:{p_default}:{p_default}:0:0"),
        "t_min": over.getfloat("t_min", 1.0),
        "t_max": over.getfloat("t_max", 50.0),
        "t_count": over.getint("t_count", 50),
        "witness": over.get("witness", "refocus"),
    }


def _run_growth(params, lattice):
    dset = build_dirac_matrices(params["dim"], params["mass"])
    psi0 = gaussian_datum(lattice, dset, params["width"])
    times = np.linspace(params["t_min"], params["t_max"], params["t_count"])
    return fit_growth_exponent(psi0, params["spec"], times, params["witness"])


def _growth_experiment(eid, over, seed, p_default, lower, upper):
    params = _growth_params(over, p_default)
    params["seed"] = seed
    lo = over.getfloat("lower", lower)
    hi = over.getfloat("upper", upper)
    lat = Lattice(params["dim"], params["N"], params["L"])
    fit = _run_growth(params, lat)
    rep = ExperimentReport(eid, params, fit.times, fit.norms, fit.tail_fractions,
                           {"slope": fit.to_dict()}, {"slope": [lo, hi]}, lo <= fit.slope <= hi)
    if over.getboolean("sentinel", True):
        fit2 = _run_growth(params, lat.doubled())
        ref = max(abs(fit.slope), 0.05)
        rep.sentinel_drift = abs(fit2.slope - fit.slope) / ref
        if rep.sentinel_drift > SENTINEL_DRIFT:
            rep.flags.append("sentinel-drift")
            rep.passed = False
    return rep


def _smoothing_experiment(eid, over, seed):
    params = {
        "dim": over.getint("dim", 1), "mass": over.getfloat("mass", 1.0),
        "N": over.getint("N", 1024), "L": over.getfloat("L", 64.0),
        "width": over.getfloat("width", 2.5), "p": over.get("p", "inf"),
        "q": over.get("q", "inf"), "s": over.getfloat("s", 1.0),
        "t_min": over.getfloat("t_min", 2.0), "t_max": over.getfloat("t_max", 50.0),
        "t_count": over.getint("t_count", 25), "bound": over.getfloat("bound", 1.0), "seed": seed,
    }
    p = math.inf if params["p"] == "inf" else float(params["p"])
    q = math.inf if params["q"] == "inf" else float(params["q"])

    def run(lat):
        dset = build_dirac_matrices(params["dim"], params["mass"])
        psi0 = gaussian_datum(lat, dset, params["width"])
        times = np.linspace(params["t_min"], params["t_max"], params["t_count"])
        return smoothing_ratio(psi0, p, q, params["s"], times=times)

    lat = Lattice(params["dim"], params["N"], params["L"])
    res = run(lat)
    rep = ExperimentReport(eid, params, res.times, res.ratios, res.tail_fractions,
                           {"max_ratio": res.max_ratio, "gamma": res.gamma},
                           {"max_ratio": [0.0, params["bound"]]}, res.max_ratio <= params["bound"])
    if over.getboolean("sentinel", True):
        res2 = run(lat.doubled())
        rep.sentinel_drift = abs(res2.max_ratio - res.max_ratio) / res.max_ratio
        if rep.sentinel_drift > SENTINEL_DRIFT:
            rep.flags.append("sentinel-drift")
            rep.passed = False
    return rep


def _dispersion_experiment(eid, over, seed):
    params = {"dim": over.getint("dim", 1), "mass": over.getfloat("mass", 1.0),
              "N": over.getint("N", 256), "L": over.getfloat("L", 16.0),
              "t_max": over.getfloat("t_max", 10.0), "t_count": over.getint("t_count", 11),
              "tol": over.getfloat("tol", 1e-10), "seed": seed}
    lat = Lattice(params["dim"], params["N"], params["L"])
    dset = build_dirac_matrices(params["dim"], params["mass"])
    psi0 = random_corpus(lat, 1, seed, dset.n, dset=dset)[0]
    times = np.linspace(0.0, params["t_max"], params["t_count"])
    res = dispersion_residuals(psi0, times)
    worst = float(np.max(res))
    norms = np.full(times.size, psi0.norm())
    return ExperimentReport(eid, params, times, norms, np.zeros(times.size),
                            {"max_residual": worst}, {"max_residual": [0.0, params["tol"]]},
                            worst < params["tol"])


EXPERIMENTS = {
    "free-growth-d1": lambda eid, over, seed: _growth_experiment(eid, over, seed, "inf", 0.35, 0.65),
    "free-growth-d1-l2": lambda eid, over, seed: _growth_experiment(eid, over, seed, "2", -0.02, 0.02),
    "smoothing-d1": _smoothing_experiment,
    "dispersion-d1": _dispersion_experiment,
}


def read_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not cp.has_section("suite"):
        raise ConfigError(f"{path} has no [suite] section")
    ids = [e.strip() for e in cp.get("suite", "experiments", fallback="").split(",") if e.strip()]
    unknown = [e for e in ids if e not in EXPERIMENTS]
    if unknown:
        raise ConfigError(f"unknown experiment id(s): {', '.join(unknown)}")
    return cp, ids


def run_suite(config_path, out_dir=None):
    """Run every experiment listed in the config; returns the reports."""
    cp, ids = read_config(config_path)
    seed = cp.getint("suite", "seed", fallback=0)
    out_dir = out_dir or cp.get("suite", "output", fallback=None)
    reports = []
    for eid in ids:
        over = cp[eid] if cp.has_section(eid) else cp[cp.default_section]
        rep = EXPERIMENTS[eid](eid, over, seed)
        reports.append(rep)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            rep.write_csv(os.path.join(out_dir, f"{eid}.csv"))
            rep.write_json(os.path.join(out_dir, f"{eid}.json"))
    return reports
