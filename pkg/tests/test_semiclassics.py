import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbslab.fock import (FockBasis, FockState, build_hamiltonian, enumerate_fock_basis,
                           gibbs_state, pair_list, reduced_density_matrix)
from gibbslab.semiclassics import (QuadratureError, TruncationError, berezin_lieb_check,
                                   coherent_vector, definetti_gap, gaussian_symbol_entropy,
                                   husimi_density, localize, lower_symbol, lower_symbol_moment)
from gibbslab.spectral import InteractionSpec, build_mode_basis
from gibbslab.suites import random_density, single_mode_thermal


def _vacuum(M=1, n_max=20):
    f = FockBasis(M, n_max)
    rho = np.zeros((f.dim, f.dim))
    rho[0, 0] = 1.0
    return FockState(f, rho)


def _coherent_state(v, n_max):
    f = FockBasis(1, n_max)
    cv = coherent_vector([v], 1.0, f)
    a = cv.amplitudes / cv.norm
    return FockState(f, np.outer(a, a.conj()))


def test_coherent_vector_examples():
    f = FockBasis(1, 20)
    cv = coherent_vector([0.0], 0.3, f)
    assert cv.norm_defect == 0 and cv.amplitudes[0] == 1
    cv = coherent_vector([math.sqrt(0.5)], 0.5, f)
    tail = math.exp(-1) * sum(1 / math.factorial(n) for n in range(21))
    assert cv.norm ** 2 == pytest.approx(tail, abs=1e-15)
    assert cv.norm_defect == pytest.approx(2e-20, rel=0.1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.2, 1.2), min_size=8, max_size=8))
def test_coherent_overlap_oracle(x):
    f = FockBasis(2, 24)
    a = np.array(x[0:2]) + 1j * np.array(x[2:4])
    b = np.array(x[4:6]) + 1j * np.array(x[6:8])
    ca, cb = coherent_vector(a, 1.0, f), coherent_vector(b, 1.0, f)
    oracle = np.exp(-(np.vdot(a, a).real + np.vdot(b, b).real) / 2 + np.vdot(a, b))
    bound = math.sqrt(ca.norm_defect) + math.sqrt(cb.norm_defect) + 1e-13
    assert abs(ca.overlap(cb) - oracle) <= bound
    assert ca.norm <= 1 + 1e-14


def test_coherent_refusal():
    with pytest.raises(TruncationError) as e:
        coherent_vector([3.0], 1.0, FockBasis(1, 10))
    assert e.value.required_N_max == 18
    with pytest.raises(ValueError):
        coherent_vector([0.1], 0.0, FockBasis(1, 10))


def test_vacuum_husimi():
    vac = _vacuum()
    assert husimi_density(vac, [0], 1.0, [0.0]) == pytest.approx(1 / math.pi, abs=1e-15)
    u = np.array([0.3 + 0.4j])
    assert husimi_density(vac, [0], 1.0, u) == pytest.approx(math.exp(-0.25) / math.pi)
    est = lower_symbol(vac, [0], 1.0, half_widths=[6.0])
    assert est.mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(est.density >= 0)


def test_mass_refusal():
    with pytest.raises(QuadratureError) as e:
        lower_symbol(_vacuum(), [0], 1.0, half_widths=[1.0])
    assert e.value.suggested_half_width[0] == pytest.approx(1.5)


def test_lower_symbol_moments():
    vac = _vacuum()
    for eps in (1.0, 0.5, 0.25):
        m = lower_symbol_moment(vac, [0], eps, 1).matrix
        assert m[0, 0] == pytest.approx(eps, abs=1e-10)
    m2 = _vacuum(2, 6)
    np.testing.assert_allclose(lower_symbol_moment(m2, [0, 1], 1.0, 1).matrix, np.eye(2), atol=1e-8)
    T = 1.5
    th = single_mode_thermal(T, 80)
    q = math.exp(-1 / T)
    nbar = q / (1 - q)
    eps = 0.2
    m = lower_symbol_moment(th, [0], eps, 1).matrix[0, 0]
    assert m == pytest.approx(eps * (nbar + 1), rel=1e-8)
    # one-body moment = eps * (Gamma^(1) + 1) for any single-mode state
    rng = np.random.default_rng(3)
    st_ = FockState(FockBasis(1, 8), random_density(rng, 9))
    g1 = reduced_density_matrix(st_, 1).matrix[0, 0].real
    assert lower_symbol_moment(st_, [0], 0.5, 1).matrix[0, 0] == pytest.approx(0.5 * (g1 + 1), rel=1e-8)


def test_localization_matches_rdm_blocks():
    basis = build_mode_basis(1, 1.0, 50.0)
    w = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5})
    f = enumerate_fock_basis(3, 10, basis)
    st_ = gibbs_state(build_hamiltonian(f, basis, w, -1.0, 0.5), 2.0)
    P = [0, 2]
    loc = localize(st_, P)
    assert np.trace(loc.rho).real == pytest.approx(1.0, abs=1e-12)
    G1 = reduced_density_matrix(st_, 1).matrix
    np.testing.assert_allclose(reduced_density_matrix(loc, 1).matrix, G1[np.ix_(P, P)], atol=1e-13)
    pairs = pair_list(3)
    sub = [pairs.index((P[i], P[j])) for i, j in pair_list(2)]
    G2 = reduced_density_matrix(st_, 2).matrix
    np.testing.assert_allclose(reduced_density_matrix(loc, 2).matrix, G2[np.ix_(sub, sub)], atol=1e-13)
    with pytest.raises(ValueError):
        localize(st_, [0, 0])


def test_definetti_examples():
    for eps in (1.0, 0.3):
        g = definetti_gap(_vacuum(), [0], eps, 1)
        assert g.rhs == pytest.approx(eps) and g.lhs == pytest.approx(eps, abs=1e-9)
        assert g.scaled_error == pytest.approx(1.0, abs=1e-8)
        assert '"scaled_error"' in g.to_json()
    th = single_mode_thermal(2.0, 60)
    g = definetti_gap(th, [0], 0.25, 2)
    assert g.slack >= -1e-8
    lhs = []
    for N in (4, 16, 64):
        g = definetti_gap(_coherent_state(0.5 * math.sqrt(N), 2 * N), [0], 1.0 / N, 1)
        lhs.append(g.lhs)
        assert g.slack >= -1e-8
    assert lhs[0] > lhs[1] > lhs[2]
    assert lhs[2] == pytest.approx(1 / 64, rel=1e-6)


def _gaussian_kl(sa, sb):
    return math.log(sb / sa) + sa / sb - 1


def test_berezin_lieb_thermal_pair():
    a, b = single_mode_thermal(1.0, 80), single_mode_thermal(2.0, 80)
    eps = 1.0
    hq, hl, hc = berezin_lieb_check(a, b, [0], eps)
    assert hq == pytest.approx(hl, abs=1e-12)
    assert hl > hc > 0
    sa = eps * (1 / math.expm1(1.0) + 1)
    sb = eps * (1 / math.expm1(0.5) + 1)
    assert hc == pytest.approx(_gaussian_kl(sa, sb), abs=1e-4)


def _husimi_closed_form(rho, x, y):
    """(1/pi) exp(-|u|^2) sum_mn rho_mn conj(u)^m u^n / sqrt(m! n!) on a Cartesian mesh."""
    u = x + 1j * y
    n = np.arange(rho.shape[0])
    pw = u[..., None] ** n / np.sqrt([math.factorial(k) for k in n])
    val = np.einsum("...m,mn,...n->...", pw.conj(), rho, pw).real
    return np.exp(-np.abs(u) ** 2) * val / math.pi


def test_berezin_lieb_classical_term_vs_cartesian_quadrature():
    """Classical relative entropy of two Husimi densities by a Cartesian trapezoid rule."""
    rng = np.random.default_rng(1)
    f = FockBasis(1, 4)
    A, B = FockState(f, random_density(rng, 5)), FockState(f, random_density(rng, 5))
    hq, hl, hc = berezin_lieb_check(A, B, [0], 1.0)
    assert hq >= hl >= hc - 1e-4
    L, n = 9.0, 721
    x = np.linspace(-L, L, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    fa, fb = _husimi_closed_form(A.rho, X, Y), _husimi_closed_form(B.rho, X, Y)
    h = x[1] - x[0]
    assert np.sum(fa) * h * h == pytest.approx(1.0, abs=1e-8)
    oracle = np.sum(fa * np.log(fa / fb)) * h * h
    assert hc == pytest.approx(oracle, abs=1e-4)


def test_berezin_lieb_identical():
    th = single_mode_thermal(1.0, 40)
    assert berezin_lieb_check(th, th, [0], 0.5) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


def test_gaussian_symbol_entropy_decreases():
    vals = []
    for T in (4.0, 16.0, 64.0):
        n_max = int(40 * T)
        th = single_mode_thermal(T, n_max)
        vals.append(gaussian_symbol_entropy(th, [0], 1.0 / T, [1.0]))
    assert vals[0] > vals[1] > vals[2] > 0
    # closed form for Gaussian lower symbols
    T = 16.0
    s = (1 / math.expm1(1 / T) + 1) / T
    assert vals[1] == pytest.approx(_gaussian_kl(s, 1.0), abs=1e-4)
