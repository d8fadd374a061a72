"""Command line entry point ``diractfa``."""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .clifford import build_dirac_matrices, verify_clifford
from .evolution import (ConvergenceError, ContractionError, EvolutionConfig, MultiplicationPotential,
                        NonlinearitySpec, WeylPotential, solve_linear, solve_nonlinear)
from .experiments import (ConfigError, TailError, fit_growth_exponent, gaussian_datum, random_corpus, run_suite,
                          smoothing_ratio)
from .lattice import Lattice, SpinorField
from .propagator import dispersion_residuals, evolve_free
from .snapshot import SnapshotError, load_field, load_matrix_field, load_symbol, read_array, save_field
from .tfa import NormSpec, field_norm
from .weyl import apply_weyl


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_with_dirac(path, dim=None, mass=None):
    psi = load_field(path, attach_dirac=False)
    d = psi.lattice.d if dim is None else dim
    if d != psi.lattice.d:
        raise ValueError(f"--dim {dim} does not match the snapshot dimension {psi.lattice.d}")
    dset = build_dirac_matrices(d, read_array(path)[3] if mass is None else mass)
    return SpinorField(psi.lattice, psi.values, dset)


def _datum(args):
    if getattr(args, "input", None):
        return _load_with_dirac(args.input, args.dim, args.mass)
    lat = Lattice(args.dim, args.N, args.L)
    return gaussian_datum(lat, build_dirac_matrices(args.dim, args.mass), args.width)


def _times(args):
    return np.linspace(args.t_min, args.t_max, args.t_count)


def cmd_clifford_check(args):
    rep = verify_clifford(build_dirac_matrices(args.dim, args.mass), args.tol)
    out = rep.to_dict()
    out.update(dim=args.dim, n=int(2 ** math.ceil(args.dim / 2)))
    _emit(out)
    return 0 if rep.ok else 1


def cmd_make_gaussian(args):
    psi = gaussian_datum(Lattice(args.dim, args.N, args.L), build_dirac_matrices(args.dim, args.mass),
                         args.width, amplitude=args.amplitude)
    save_field(args.output, psi)
    _emit({"output": args.output, "l2": psi.norm()})
    return 0


def cmd_evolve(args):
    psi = _load_with_dirac(args.input, args.dim, args.mass)
    step = args.t / args.steps
    for _ in range(args.steps):
        psi = evolve_free(psi, step)
    save_field(args.output, psi)
    _emit({"t": args.t, "steps": args.steps, "l2": psi.norm(), "output": args.output})
    return 0


def cmd_norm(args):
    psi = load_field(args.input)
    res = field_norm(psi, NormSpec.parse(args.spec), args.method, x_step=args.x_step)
    _emit({"value": res.value, "tail_fraction": res.tail_fraction, "method": res.method,
           "flagged": res.flagged, "spec": str(res.spec)})
    return 0


def cmd_weyl_apply(args):
    sigma = load_symbol(args.symbol)
    psi = load_field(args.input)
    out = apply_weyl(sigma, psi)
    if args.output:
        save_field(args.output, out)
    _emit({"l2_in": psi.norm(), "l2_out": out.norm(), "output": args.output})
    return 0


def _write_series(path, times, norms):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "l2"])
        for t, n in zip(times, norms):
            w.writerow([repr(float(t)), repr(float(n))])


def cmd_solve(args):
    psi = _load_with_dirac(args.input, None, args.mass)
    cfg = EvolutionConfig(args.T, args.dt, args.tol, args.max_iter)
    F = NonlinearitySpec.parse(args.nonlinearity)
    pot_kind, _, pot_file = args.potential.partition(":")
    if F.kind != "zero" and pot_kind != "none":
        raise ValueError("combine either a potential or a nonlinearity, not both")
    os.makedirs(args.out, exist_ok=True)
    try:
        if F.kind != "zero":
            traj, cert = solve_nonlinear(psi, F, cfg, xnorm=args.xnorm)
            cert = cert.to_dict()
        else:
            if pot_kind == "none":
                V = None
            elif pot_kind == "mult":
                V = MultiplicationPotential(load_matrix_field(pot_file)[1])
            elif pot_kind == "weyl":
                V = WeylPotential(load_symbol(pot_file))
            else:
                raise ValueError(f"unknown potential {args.potential!r}")
            traj = solve_linear(psi, V, cfg)
            cert = {"contraction_factors": [], "residuals": list(traj.increments),
                    "horizon_used": float(traj.times[-1]), "quadrature_residual": traj.max_residual}
    except (ConvergenceError, ContractionError) as exc:
        _emit({"error": str(exc)})
        return 2
    save_field(os.path.join(args.out, "final.bin"), traj.final())
    _write_series(os.path.join(args.out, "series.csv"), traj.times, traj.l2_norms())
    with open(os.path.join(args.out, "certificate.json"), "w") as fh:
        json.dump(cert, fh, indent=2, sort_keys=True)
    _emit(cert)
    return 0


def cmd_fit_growth(args):
    psi = _datum(args)
    try:
        fit = fit_growth_exponent(psi, args.spec, _times(args), args.witness, args.x_step)
    except TailError as exc:
        _emit({"error": str(exc)})
        return 2
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm", "tail_fraction"])
            for row in zip(fit.times, fit.norms, fit.tail_fractions):
                w.writerow([repr(float(v)) for v in row])
    out = fit.to_dict()
    ok = True
    if args.lower is not None or args.upper is not None:
        lo = -math.inf if args.lower is None else args.lower
        hi = math.inf if args.upper is None else args.upper
        ok = lo <= fit.slope <= hi
        out["passed"] = ok
    _emit(out)
    return 0 if ok else 1


def cmd_smoothing_ratio(args):
    psi = _datum(args)
    p = math.inf if args.p == "inf" else float(args.p)
    q = math.inf if args.q == "inf" else float(args.q)
    res = smoothing_ratio(psi, p, q, args.s, args.gamma, _times(args), args.x_step)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "ratio"])
    for t, r in zip(res.times, res.ratios):
        w.writerow([repr(float(t)), repr(float(r))])
    print(json.dumps({"gamma": res.gamma, "max_ratio": res.max_ratio, "degenerate": res.degenerate}),
          file=sys.stderr)
    return 0


def cmd_run_suite(args):
    try:
        reports = run_suite(args.config, args.out)
    except (ConfigError, TailError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit([r.to_dict() for r in reports])
    return 0 if all(r.passed for r in reports) else 1


def cmd_dispersion_check(args):
    if args.input:
        psi = _load_with_dirac(args.input, args.dim, args.mass)
    else:
        lat = Lattice(args.dim, args.N, args.L)
        dset = build_dirac_matrices(args.dim, args.mass)
        psi = random_corpus(lat, 1, args.seed, dset.n, dset=dset)[0]
    times = np.linspace(0.0, args.t_max, args.steps + 1)
    res = dispersion_residuals(psi, times)
    xi = psi.lattice.xi_points()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow([f"k{a + 1}" for a in range(psi.lattice.d)] + ["residual"])
    for k, r in zip(xi, res):
        w.writerow([repr(float(v)) for v in k] + [repr(float(r))])
    return 0 if float(np.max(res)) < args.tol else 1


def _lattice_args(p, N=1024, L=64.0):
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--N", type=int, default=N)
    p.add_argument("--L", type=float, default=L)
    p.add_argument("--width", type=float, default=2.5)


def build_parser():
    ap = argparse.ArgumentParser(prog="diractfa", description="Dirac evolution and time-frequency norms")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clifford-check", help="verify a generated Dirac matrix set")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--mass", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_clifford_check)

    p = sub.add_parser("make-gaussian", help="write a Gaussian spinor snapshot")
    _lattice_args(p, 256, 16.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_make_gaussian)

    p = sub.add_parser("evolve", help="free evolution of a field snapshot")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--mass", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("norm", help="mixed norm of a field snapshot")
    p.add_argument("--spec", required=True, help="M:p:q:r:s or W:p:q:r:s")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["direct", "bupu"], default="direct")
    p.add_argument("--x-step", type=int, default=1)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("weyl-apply", help="apply a Weyl operator to a field")
    p.add_argument("--symbol", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_weyl_apply)

    p = sub.add_parser("solve", help="perturbed or nonlinear evolution")
    p.add_argument("--input", required=True)
    p.add_argument("--mass", type=float, default=None)
    p.add_argument("--potential", default="none", help="none | mult:file | weyl:file")
    p.add_argument("--nonlinearity", default="none", help="none | power:k | thirring | general:file.json")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--xnorm", default="M:2:1:0:0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    for name, func in (("fit-growth", cmd_fit_growth), ("smoothing-ratio", cmd_smoothing_ratio)):
        p = sub.add_parser(name)
        _lattice_args(p)
        p.add_argument("--input")
        p.add_argument("--t-min", type=float, default=1.0 if name == "fit-growth" else 2.0)
        p.add_argument("--t-max", type=float, default=50.0)
        p.add_argument("--t-count", type=int, default=50)
        p.add_argument("--x-step", type=int, default=1)
        if name == "fit-growth":
            p.add_argument("--spec", default="M:inf:inf:0:0")
            p.add_argument("--witness", choices=["refocus", "forward"], default="refocus")
            p.add_argument("--csv")
            p.add_argument("--lower", type=float)
            p.add_argument("--upper", type=float)
        else:
            p.add_argument("--p", default="inf")
            p.add_argument("--q", default="inf")
            p.add_argument("--s", type=float, default=1.0)
            p.add_argument("--gamma", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("run-suite", help="run an experiment suite from an INI config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_suite)

    p = sub.add_parser("dispersion-check", help="per-mode Klein-Gordon phase residuals as CSV")
    _lattice_args(p, 256, 16.0)
    p.add_argument("--input")
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_dispersion_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SnapshotError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
