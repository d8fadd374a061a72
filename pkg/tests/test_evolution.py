import json

import numpy as np
import pytest
import sympy as sp

from diractfa.clifford import build_dirac_matrices
from diractfa.evolution import (Certificate, ContractionError, ConvergenceError, EvolutionConfig,
                                MultiplicationPotential, NonlinearitySpec, WeylPotential, ZeroPotential,
                                as_potential, charge_drift, dyson_phillips_terms, eval_nonlinearity,
                                increment_ratios, solve_linear, solve_nonlinear)
from diractfa.experiments import gaussian_datum
from diractfa.lattice import Lattice, SpinorField
from diractfa.propagator import evolve_free_many
from diractfa.tfa import stft_norm
from diractfa.weyl import WeylSymbol

LAT = Lattice(1, 128, 16.0)
DS = build_dirac_matrices(1, 1.0)


def smooth_potential(lat, scale=1.0):
    x = lat.x_axes()[0]
    M = np.array([[1, 0.5 - 0.2j], [0.5 + 0.2j, -0.7]])
    return scale * np.exp(-x ** 2 / 4)[:, None, None] * M


@pytest.fixture(scope="module")
def psi0():
    return gaussian_datum(LAT, DS, 1.0, [1, 0.5j])


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(1.0, 2.0)
    with pytest.raises(ValueError):
        EvolutionConfig(-1.0, 0.1)
    with pytest.raises(ValueError):
        EvolutionConfig(1.0, 0.1, tol=0)
    cfg = EvolutionConfig(1.0, 0.1)
    assert cfg.steps == 10 and cfg.times()[-1] == 1.0
    half = cfg.with_horizon(0.5)
    assert half.steps == 5 and half.dt == pytest.approx(0.1)


def test_zero_potential_is_free(psi0):
    cfg = EvolutionConfig(1.0, 1e-2)
    traj = solve_linear(psi0, None, cfg)
    free = evolve_free_many(psi0, cfg.times())
    assert np.max(np.abs(traj.values - free)) < 1e-12
    assert traj.max_residual == 0.0


def test_constant_potential_phase(psi0):
    cfg = EvolutionConfig(1.0, 2.5e-4)
    c = 0.7
    traj = solve_linear(psi0, MultiplicationPotential(np.broadcast_to(c * np.eye(2), (128, 2, 2))), cfg)
    expected = np.exp(-1j * c * cfg.times())[:, None, None] * evolve_free_many(psi0, cfg.times())
    assert np.max(np.abs(traj.values - expected)) < 1e-8


def _rk4(psi0, Vvals, T, dt):
    from diractfa.lattice import forward_ft, inverse_ft
    xi = LAT.xi_axes()[0]
    G = DS.generator(xi[:, None])

    def rhs(u):
        d = inverse_ft(np.einsum("kab,kb->ka", G, forward_ft(u, LAT)), LAT) * 2 * np.pi
        return -1j * (d + np.einsum("kab,kb->ka", Vvals, u))
    u = psi0.values.copy()
    for _ in range(int(round(T / dt))):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def test_against_rk4_and_residual_order(psi0):
    V = smooth_potential(LAT)
    res = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        traj = solve_linear(psi0, V, EvolutionConfig(1.0, dt))
        res.append(traj.max_residual)
    assert res[0] / res[1] >= 3.5 and res[1] / res[2] >= 3.5
    ref = _rk4(psi0, V, 0.25, 1e-4)
    traj = solve_linear(psi0, V, EvolutionConfig(0.25, 2.5e-4))
    assert np.sqrt(np.sum(np.abs(traj.final().values - ref) ** 2) * LAT.cell) < 1e-6


def test_hermitian_potential_conserves_l2(psi0):
    traj = solve_linear(psi0, smooth_potential(LAT), EvolutionConfig(1.0, 5e-4))
    assert np.max(np.abs(traj.l2_norms() - psi0.norm())) < 1e-7


def test_time_dependent_and_weyl_potentials(psi0):
    lat = Lattice(1, 64, 8.0)
    p = gaussian_datum(lat, DS, 1.0, [1, 0.5j])
    Vx = smooth_potential(lat)
    cfg = EvolutionConfig(0.2, 1e-2)
    a = solve_linear(p, MultiplicationPotential(lambda t: Vx), cfg)
    b = solve_linear(p, Vx, cfg)
    assert np.max(np.abs(a.values - b.values)) < 1e-13
    # a symbol depending on x only quantizes to the same multiplication
    sym = WeylSymbol.from_function(lat, lambda xs, xis: np.exp(-xs[0] ** 2 / 4)[..., None, None]
                                   * np.array([[1, 0.5 - 0.2j], [0.5 + 0.2j, -0.7]]), 2)
    c = solve_linear(p, sym, cfg)
    assert np.max(np.abs(c.values - b.values)) < 1e-8
    d = solve_linear(p, WeylPotential(lambda t: sym), cfg)
    assert np.max(np.abs(d.values - c.values)) < 1e-12
    assert as_potential(None).bound([0.0]) == 0.0
    assert WeylPotential(sym).bound([0.0]) == pytest.approx(MultiplicationPotential(Vx).bound([0.0]), rel=1e-6)


def test_nonfinite_potential_rejected(psi0):
    with pytest.raises(ValueError):
        MultiplicationPotential(np.full((128, 2, 2), np.inf))
    bad = MultiplicationPotential(lambda t: np.full((128, 2, 2), np.nan))
    with pytest.raises(ValueError):
        solve_linear(psi0, bad, EvolutionConfig(0.1, 0.01))


def test_convergence_error(psi0):
    with pytest.raises(ConvergenceError) as err:
        solve_linear(psi0, smooth_potential(LAT, 5.0), EvolutionConfig(1.0, 1e-2, max_iter=3))
    assert err.value.iterations == 3 and err.value.residual > 0


def test_field_without_dirac_rejected():
    f = SpinorField(LAT, np.ones((128, 2)))
    with pytest.raises(ValueError):
        solve_linear(f, None, EvolutionConfig(1.0, 0.1))


def test_dyson_partial_sums_equal_picard_iterates(psi0):
    V = smooth_potential(LAT)
    cfg = EvolutionConfig(0.5, 5e-3)
    times, terms = dyson_phillips_terms(psi0, V, cfg, 4)
    # independent Picard iteration started at the free flow
    u = terms[0]
    from diractfa.evolution import _duhamel
    for k in range(1, 5):
        u = terms[0] + _duhamel(MultiplicationPotential(V).apply_many(times, u), times, LAT, DS)
        assert np.max(np.abs(u - sum(terms[:k + 1]))) < 1e-12
    ratios, sizes = increment_ratios(terms, LAT.cell)
    assert len(ratios) == 4 and np.all(sizes > 0)


def test_dyson_ratios_decrease(psi0):
    _, terms = dyson_phillips_terms(psi0, smooth_potential(LAT, 2.0), EvolutionConfig(1.0, 2e-3), 9)
    ratios, _ = increment_ratios(terms, LAT.cell)
    assert np.all(np.diff(ratios[1:]) < 0)


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------

def test_thirring_against_symbolic(rng):
    ds = build_dirac_matrices(3, 1.0)
    z = sp.symbols("z0:4")
    zc = [sp.conjugate(v) for v in z]
    a0 = sp.Matrix(ds.alpha0.real.astype(int))
    col = sp.Matrix(z)
    bil = (sp.Matrix(zc).T * a0 * col)[0]
    expr = bil * (a0 * col)
    vals = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
    lat = Lattice(1, 8, 1.0)
    field = np.zeros((8, 4), dtype=complex)
    field[:5] = vals
    out = eval_nonlinearity(SpinorField(lat, field, ds), NonlinearitySpec("thirring")).values
    for k in range(5):
        sub = dict(zip(z, [complex(v) for v in vals[k]]))
        expected = np.array([complex(sp.N(e.subs(sub))) for e in expr])
        assert np.allclose(out[k], expected, atol=1e-12)
    assert np.all(out[5:] == 0)


def test_power_and_general_agree(rng):
    lat = Lattice(1, 16, 2.0)
    vals = rng.normal(size=(16, 2)) + 1j * rng.normal(size=(16, 2))
    f = SpinorField(lat, vals, DS)
    power = eval_nonlinearity(f, NonlinearitySpec("power", 1)).values
    # |z|^2 z_j expanded into monomials z^alpha conj(z)^beta
    terms = []
    for j in range(2):
        for i in range(2):
            alpha = [0, 0]
            alpha[j] += 1
            alpha[i] += 1
            beta = [0, 0]
            beta[i] = 1
            terms.append((j, alpha, beta, 1.0))
    gen = NonlinearitySpec("general", terms=tuple(terms))
    assert np.allclose(eval_nonlinearity(f, gen).values, power, atol=1e-13)
    expected = np.sum(np.abs(vals) ** 2, axis=1, keepdims=True) * vals
    assert np.allclose(power, expected, atol=1e-13)


def test_general_spec_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        NonlinearitySpec("general", terms=((0, (0, 0), (0, 0), 1.0),))
    with pytest.raises(ValueError):
        NonlinearitySpec("power", 0)
    with pytest.raises(ValueError):
        NonlinearitySpec("cubic")
    spec = NonlinearitySpec("general", terms=((0, (2, 0), (1, 0), 1 - 2j), (1, (3, 2), (0, 0), 1.0)), degree=3)
    assert len(spec.terms) == 1  # the degree-5 term is truncated
    path = tmp_path / "nl.json"
    spec.to_json(path)
    back = NonlinearitySpec.parse(f"general:{path}")
    assert back == spec
    data = json.loads(path.read_text())
    assert data["terms"][0]["coeff"] == [1.0, -2.0]
    assert NonlinearitySpec.parse("power:2").k == 2
    assert NonlinearitySpec.parse("none").kind == "zero"
    assert not spec.conserves_charge()
    with pytest.raises(ValueError):
        NonlinearitySpec.parse("cubic")
    bad = NonlinearitySpec("general", terms=((3, (1, 0), (0, 0), 1.0),))
    with pytest.raises(ValueError):
        eval_nonlinearity(SpinorField(Lattice(1, 8, 1.0), np.ones((8, 2))), bad)


@pytest.mark.parametrize("kind", ["power", "thirring"])
def test_nonlinear_small_data_certificate(kind):
    p = gaussian_datum(LAT, DS, 1.0, [1, 0.5j], 0.3)
    F = NonlinearitySpec.parse(kind)
    traj, cert = solve_nonlinear(p, F, EvolutionConfig(2.0, 4e-3))
    assert isinstance(cert, Certificate) and cert.converged
    assert cert.restarts == 0 and cert.horizon_used == 2.0
    assert max(cert.contraction_factors) < 1
    assert charge_drift(traj) < 1e-6
    assert set(cert.to_dict()) >= {"contraction_factors", "horizon_used", "xnorm"}


@pytest.mark.parametrize("kind", ["power", "thirring"])
def test_lipschitz_ratio(kind):
    p = gaussian_datum(LAT, DS, 1.0, [1, 0.5j], 0.3)
    q = p.with_values(1.05 * p.values + 0.01 * gaussian_datum(LAT, DS, 0.7, [0, 1]).values)
    F = NonlinearitySpec.parse(kind)
    cfg = EvolutionConfig(2.0, 4e-3)
    a, _ = solve_nonlinear(p, F, cfg)
    b, _ = solve_nonlinear(q, F, cfg)
    num = max(stft_norm(a.values[i] - b.values[i], "M:2:1", lattice=LAT).value for i in range(0, len(a), 50))
    assert num / stft_norm(p - q, "M:2:1").value <= 2.2


def test_large_data_halves_horizon():
    big = gaussian_datum(LAT, DS, 1.0, None, 4.0)
    traj, cert = solve_nonlinear(big, NonlinearitySpec("power", 1), EvolutionConfig(2.0, 4e-3))
    assert cert.restarts > 0 and cert.horizon_used < 2.0
    assert traj.times[-1] == pytest.approx(cert.horizon_used)
    with pytest.raises(ContractionError) as err:
        solve_nonlinear(big, NonlinearitySpec("power", 1), EvolutionConfig(2.0, 4e-3), min_horizon=1.0)
    assert len(err.value.diagnostics) >= 1


def test_zero_nonlinearity_is_free(psi0):
    cfg = EvolutionConfig(1.0, 1e-2)
    traj, cert = solve_nonlinear(psi0, NonlinearitySpec("zero"), cfg)
    assert np.max(np.abs(traj.values - evolve_free_many(psi0, cfg.times()))) < 1e-14
    assert ZeroPotential().apply(0.0, psi0.values).sum() == 0
