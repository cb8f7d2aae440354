import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from gibbslab.classical import (MASSIVE, Covariance, classical_moment, classical_moment_batches,
                                classical_pinsker, classical_relative_entropy,
                                classical_variational_value, density_fourier, estimate_partition,
                                make_ensemble, plain_interaction, renormalized_interaction,
                                sample_free_fields, thermal, wick_constant, wick_mean_interaction)
from gibbslab.spectral import InteractionSpec, build_mode_basis


@pytest.fixture(scope="module")
def single():
    return build_mode_basis(1, 1.0, 1.5)


def _radial(f):
    """Single mode, lambda = 1: |alpha|^2 ~ Exp(1), plain D = r^2 / 2."""
    return quad(lambda r: f(r) * math.exp(-r - r * r / 2), 0, np.inf, epsabs=1e-13)[0]


Z_ORACLE = _radial(lambda r: 1.0)


def test_radial_oracle_value():
    # the quoted five-digit value 0.65569 is a rounding of 0.6556795...
    assert Z_ORACLE == pytest.approx(0.65569, abs=2e-5)
    assert Z_ORACLE == pytest.approx(0.6556795424, abs=1e-9)


def test_free_moments(basis1d):
    a = sample_free_fields(basis1d, MASSIVE, 200000, 1)
    emp = a.T @ a.conj() / len(a)
    lam = basis1d.eigenvalues
    assert np.max(lam[None, :] * np.abs(emp - np.diag(1 / lam))) <= 0.02


def test_variance_scaling():
    b = build_mode_basis(1, 1e6, 1e6 + 1)
    a = sample_free_fields(b, MASSIVE, 50000, 3)
    assert np.mean(np.abs(a[:, 0]) ** 2) == pytest.approx(1e-6, rel=0.03)


def test_thermal_tends_to_massive(single, basis1d):
    T = 1e4
    np.testing.assert_allclose(thermal(T).variances(single), MASSIVE.variances(single), rtol=1e-4)
    # leading correction is lambda / (2T)
    rel = 1 - thermal(T).variances(basis1d) / MASSIVE.variances(basis1d)
    np.testing.assert_allclose(rel, basis1d.eigenvalues / (2 * T), rtol=1e-3)
    with pytest.raises(ValueError):
        Covariance("thermal", None)


def test_stream_is_chunk_independent(basis1d):
    full = sample_free_fields(basis1d, MASSIVE, 20000, 7)
    part = sample_free_fields(basis1d, MASSIVE, 5000, 7, start=9000)
    np.testing.assert_array_equal(full[9000:14000], part)
    assert not np.allclose(full[:100], sample_free_fields(basis1d, MASSIVE, 100, 8))


def test_density_fourier_examples(basis1d):
    # mode order: 0, -2pi, +2pi
    rho = density_fourier([2.0, 0, 0], basis1d)
    assert rho[(0,)] == 4 and rho[(1,)] == 0 and rho[(2,)] == 0
    rho = density_fourier([1.0, 0, 1j], basis1d)
    assert rho[(1,)] == pytest.approx(1j) and rho[(-1,)] == pytest.approx(-1j)
    assert rho[(0,)] == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_fourier_symmetry_and_positivity(x):
    basis = build_mode_basis(1, 1.0, 50.0)
    u = np.array(x[:3]) + 1j * np.array(x[3:])
    rho = density_fourier(u, basis)
    for k, v in rho.items():
        assert rho[tuple(-np.array(k))] == pytest.approx(np.conj(v), abs=1e-12)
    w = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5})
    assert plain_interaction(u, w, basis) >= 0
    assert renormalized_interaction(u, w, basis) >= 0


def test_interaction_examples(single, basis1d):
    w = InteractionSpec({0: 1.0})
    assert plain_interaction([0.0], w, single) == 0
    assert plain_interaction([1.0], w, single) == pytest.approx(0.5)
    assert plain_interaction([2.0], w, single) == pytest.approx(8.0)
    c0 = 1 + 2 / basis1d.eigenvalues[1]
    assert wick_constant(basis1d) == pytest.approx(c0, abs=1e-12)
    assert renormalized_interaction([2.0, 0, 0], w, basis1d) == pytest.approx(0.5 * (4 - c0) ** 2)
    assert renormalized_interaction([2.0, 0, 0], w, basis1d) == pytest.approx(4.3530, abs=5e-5)
    assert renormalized_interaction([1, 2, 3], InteractionSpec.zero(1), basis1d) == 0


def test_plain_interaction_direct_sum(basis1d, w1d):
    """Direct double sum over mode pairs as an independent route."""
    rng = np.random.default_rng(0)
    u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    n = [int(m[0]) for m in basis1d.modes]
    total = 0.0
    for k, wk in w1d.items():
        rk = sum(np.conj(u[i]) * u[j] for i in range(3) for j in range(3) if n[j] - n[i] == k[0])
        total += 0.5 * wk * abs(rk) ** 2
    assert plain_interaction(u, w1d, basis1d) == pytest.approx(total, rel=1e-12)


def test_wick_oracle(basis1d, w1d):
    lam = basis1d.eigenvalues
    oracle = 0.5 * np.sum(lam ** -2.0) + 0.5 * 0.5 * 4 / (lam[0] * lam[1])
    assert wick_mean_interaction(basis1d, w1d) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(0.52531, abs=5e-6)
    ens = make_ensemble(basis1d, w1d, 100000, 11)
    se = ens.energies.std(ddof=1) / math.sqrt(ens.n)
    assert abs(ens.energies.mean() - oracle) <= 3 * se


def test_partition_trivial_and_oracle(single):
    ens = make_ensemble(single, InteractionSpec.zero(1), 1000, 1)
    assert estimate_partition(ens).z == 1.0
    assert classical_relative_entropy(ens) == pytest.approx(0.0, abs=1e-12)
    ens = make_ensemble(single, InteractionSpec({0: 1.0}), 100000, 2, renormalized=False)
    est = estimate_partition(ens)
    assert np.all(np.exp(ens.logweights) <= 1)
    assert 1 <= est.ess <= ens.n
    assert abs(est.z - Z_ORACLE) <= 3 * est.stderr


def test_low_ess_flag(single):
    ens = make_ensemble(single, InteractionSpec({0: 1.0}), 40, 2, renormalized=False, beta=200.0)
    with pytest.warns(RuntimeWarning):
        assert estimate_partition(ens).unreliable


def test_moments(single, basis1d):
    ens = make_ensemble(basis1d, InteractionSpec.zero(1), 200000, 4)
    m1 = classical_moment(ens, 1).matrix
    lam = basis1d.eigenvalues
    assert np.max(lam[None, :] * np.abs(m1 - np.diag(1 / lam))) <= 0.02
    ens = make_ensemble(single, InteractionSpec.zero(1), 200000, 5)
    assert classical_moment(ens, 2).matrix[0, 0].real == pytest.approx(2.0, rel=0.03)
    with pytest.raises(ValueError):
        classical_moment(ens, 3)


def test_interacting_moment_vs_quadrature(single):
    ens = make_ensemble(single, InteractionSpec({0: 1.0}), 100000, 6, renormalized=False)
    oracle = _radial(lambda r: r) / Z_ORACLE
    b = classical_moment_batches(ens, 1)[:, 0, 0].real
    err = b.std(ddof=1) / math.sqrt(len(b))
    assert abs(classical_moment(ens, 1).matrix[0, 0].real - oracle) <= 3 * err
    M = classical_moment(ens, 1).matrix
    np.testing.assert_allclose(M, M.conj().T)


def test_relative_entropy_and_variational(single):
    ens = make_ensemble(single, InteractionSpec({0: 1.0}), 100000, 9, renormalized=False)
    z = estimate_partition(ens).z
    H = classical_relative_entropy(ens)
    p = ens.normalized_weights()
    assert H + p @ ens.energies == pytest.approx(-math.log(z), abs=1e-12)
    H_oracle = -_radial(lambda r: r * r / 2) / Z_ORACLE - math.log(Z_ORACLE)
    assert H == pytest.approx(H_oracle, abs=5e-3)
    vmin = classical_variational_value(1.0, ens)
    assert vmin == pytest.approx(-math.log(z), abs=1e-12)
    assert classical_variational_value(0.0, ens) == pytest.approx(ens.energies.mean())
    for beta in (0.0, 0.5, 2.0, 4.0):
        assert classical_variational_value(beta, ens) > vmin
    Hc, half = classical_pinsker(ens)
    assert Hc >= half


def test_ensemble_csv(tmp_path, basis1d, w1d):
    ens = make_ensemble(basis1d, w1d, 5, 1)
    ens.to_csv(tmp_path / "e.csv", {"seed": 1})
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and len(lines) == 7
    assert lines[1].split(",")[-1] == "logweight"
