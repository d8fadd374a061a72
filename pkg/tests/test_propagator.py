import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from diractfa.clifford import build_dirac_matrices
from diractfa.experiments import gaussian_datum, random_corpus
from diractfa.lattice import Lattice, SpinorField
from diractfa.propagator import (DegenerateNodeError, MultiplierSymbol, dispersion_residuals,
                                 energy_projectors, evolve_free, evolve_free_many, multiplier,
                                 plane_wave, projector_field)
from diractfa.tfa import stft_norm
from diractfa.weyl import cutoff


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 4), m=st.floats(0, 3), t=st.floats(-20, 20), seed=st.integers(0, 2 ** 31))
def test_multiplier_matches_expm(d, m, t, seed):
    ds = build_dirac_matrices(d, m)
    xi = np.random.default_rng(seed).normal(size=d) * 2
    mu = multiplier(xi, t, ds)
    oracle = sla.expm(-2j * np.pi * t * ds.generator(xi))
    assert np.max(np.abs(mu - oracle)) < 1e-12
    assert np.max(np.abs(mu.conj().T @ mu - np.eye(ds.n))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(s=st.floats(-5, 5), t=st.floats(-5, 5), seed=st.integers(0, 2 ** 31))
def test_group_law(s, t, seed):
    ds = build_dirac_matrices(2, 0.8)
    xi = np.random.default_rng(seed).normal(size=(10, 2))
    lhs = multiplier(xi, s + t, ds)
    rhs = multiplier(xi, s, ds) @ multiplier(xi, t, ds)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("d", [1, 2, 3])
def test_multiplier_eigenvalues(d, rng):
    ds = build_dirac_matrices(d, 1.0)
    t = 0.37
    for _ in range(10):
        xi = rng.normal(size=d)
        w = np.sqrt(1 + xi @ xi)
        ev = np.linalg.eigvals(multiplier(xi, t, ds))
        lo, hi = np.exp(-2j * np.pi * t * w), np.exp(2j * np.pi * t * w)
        assert np.sum(np.abs(ev - lo) < 1e-12) == ds.n // 2
        assert np.sum(np.abs(ev - hi) < 1e-12) == ds.n // 2


def test_massless_zero_mode_is_identity():
    ds = build_dirac_matrices(1, 0.0)
    assert np.allclose(multiplier(np.zeros(1), 3.0, ds), np.eye(2), atol=1e-15)


def test_table_cache():
    ds = build_dirac_matrices(1, 1.0)
    sym = MultiplierSymbol(ds)
    lat = Lattice(1, 16, 4.0)
    a = sym.table(0.5, lat)
    assert sym.table(0.5, lat) is a
    b = sym.table(0.5, Lattice(1, 32, 4.0))
    assert b.shape == (32, 2, 2)
    assert np.allclose(sym.table(0.5, lat), a)


def test_l2_conservation_and_time_reversal(backend):
    lat = Lattice(1, 256, 16.0)
    ds = build_dirac_matrices(1, 1.0)
    psi = random_corpus(lat, 1, seed=11, n=2, dset=ds)[0]
    times = np.linspace(0, 10, 21)
    traj = evolve_free_many(psi, times)
    norms = np.sqrt(np.sum(np.abs(traj) ** 2, axis=(1, 2)) * lat.cell)
    assert np.max(np.abs(norms - psi.norm())) < 1e-10
    back = evolve_free(evolve_free(psi, 7.3), -7.3)
    assert np.max(np.abs(back.values - psi.values)) < 1e-12


def test_dispersion_residuals():
    lat = Lattice(1, 256, 16.0)
    ds = build_dirac_matrices(1, 1.0)
    psi = random_corpus(lat, 1, seed=5, n=2, dset=ds)[0]
    res = dispersion_residuals(psi, np.linspace(0, 10, 11))
    assert res.shape == (256,) and np.max(res) < 1e-10


def test_plane_wave_phase():
    lat = Lattice(2, 16, 4.0)
    ds = build_dirac_matrices(2, 0.5)
    for branch in (+1, -1):
        f, k, lam = plane_wave(lat, ds, (3, 11), branch)
        assert lam == pytest.approx(branch * np.sqrt(0.25 + k @ k))
        out = evolve_free(f, 1.3)
        assert np.max(np.abs(out.values - np.exp(-2j * np.pi * 1.3 * lam) * f.values)) < 1e-12


def test_energy_projectors():
    ds = build_dirac_matrices(3, 1.0)
    P, M = energy_projectors(np.array([0.3, -1.0, 2.0]), ds)
    assert np.allclose(P + M, np.eye(4))
    assert np.allclose(P @ P, P) and np.allclose(P @ M, 0, atol=1e-15)
    assert np.isclose(np.trace(P).real, 2)
    with pytest.raises(DegenerateNodeError):
        energy_projectors(np.zeros(3), build_dirac_matrices(3, 0.0))
    Pf, Mf = projector_field(Lattice(1, 8, 2.0), build_dirac_matrices(1, 0.0))
    assert np.allclose(Pf[4], 0.5 * np.eye(2))  # zero mode


def test_requires_dirac_set():
    with pytest.raises(ValueError):
        evolve_free(SpinorField(Lattice(1, 8, 2.0), np.ones((8, 2))), 1.0)


def test_multiplier_sjostrand_growth_is_polynomial():
    # mu_t viewed as a matrix field of xi, localised by a smooth cutoff
    ds = build_dirac_matrices(1, 1.0)
    lat = Lattice(1, 4096, 32.0)
    xi = lat.x_axes()[0]
    chi = cutoff(np.abs(xi) / 5)[:, None, None]
    ts = np.array([1.0, 2, 5, 10, 20, 35, 50])
    vals = []
    for t in ts:
        r = stft_norm(multiplier(xi[:, None], t, ds) * chi, "M:inf:1:0:0", lattice=lat, x_step=16)
        assert np.isfinite(r.value) and not r.flagged
        vals.append(r.value)
    slope = np.polyfit(np.log1p(ts), np.log(vals), 1)[0]
    assert 0 < slope < 1.0


def test_gaussian_datum_normalised():
    lat = Lattice(1, 128, 16.0)
    ds = build_dirac_matrices(1, 1.0)
    psi = gaussian_datum(lat, ds, width=1.5, spinor=[1, 1j], amplitude=0.5)
    assert psi.norm() == pytest.approx(0.5, rel=1e-12)
