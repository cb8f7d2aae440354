import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import tensor_index, tensor_ladder
from gibbslab.entropy import trace_distance
from gibbslab.fock import (BlockedOperator, BudgetExceeded, FockBasis, FockState,
                           build_hamiltonian, build_renormalized_hamiltonian, choose_n_max,
                           enumerate_fock_basis, fock_dimension, free_hamiltonian, gibbs_state,
                           literal_W_operator, number_statistics, quartic_terms, position_kernel,
                           reduced_density_matrix, symmetric_tensor_product)
from gibbslab.spectral import InteractionSpec, build_mode_basis, compute_N0, renormalized_nu


def test_enumeration_examples(basis1d):
    f = FockBasis(1, 3)
    assert f.dim == 4 and f.n_blocks == 4 and list(f.block_dims) == [1, 1, 1, 1]
    f = enumerate_fock_basis(3, 2, basis1d)
    assert f.dim == 10 == fock_dimension(3, 2)
    one = {k: d for k, d in f.block_sizes_by_key().items() if k[0] == 1}
    assert one == {(1, -1): 1, (1, 0): 1, (1, 1): 1}


@settings(max_examples=25, deadline=None)
@given(M=st.integers(1, 4), n_max=st.integers(0, 7))
def test_basis_invariants(M, n_max):
    f = FockBasis(M, n_max)
    assert f.dim == sum(math.comb(N + M - 1, M - 1) for N in range(n_max + 1))
    assert np.all(f.occ.sum(axis=1) <= n_max)
    assert len({tuple(r) for r in f.occ}) == f.dim
    for i in range(0, f.dim, max(1, f.dim // 7)):
        assert f.index(f.occ[i]) == i


def test_budget_refusal(monkeypatch):
    monkeypatch.setenv("GIBBSLAB_BUDGET_MB", "1")
    with pytest.raises(BudgetExceeded, match="states"):
        FockBasis(6, 30)


def test_single_mode_energy():
    b = build_mode_basis(1, 1.0, 1.5)
    f = enumerate_fock_basis(1, 5, b)
    H = build_hamiltonian(f, b, InteractionSpec({0: 1.0}), -1.0, 0.1)
    assert H.to_dense()[3, 3] == pytest.approx(3.3, abs=1e-14)


def test_free_hamiltonian_is_diagonal(basis1d):
    f = enumerate_fock_basis(3, 4, basis1d)
    H = free_hamiltonian(f, basis1d).to_dense()
    np.testing.assert_allclose(np.diag(H), f.occ @ basis1d.eigenvalues, atol=1e-12)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def _dense_oracle(basis, w, nu, lam, n_max):
    """Hamiltonian from explicit tensor-product ladder matrices, restricted to N <= n_max."""
    M = basis.size
    a = tensor_ladder(M, n_max)
    ad = [x.T for x in a]
    kin = basis.eigenvalues - basis.kappa
    H = sum((kin[j] - nu) * ad[j] @ a[j] for j in range(M))
    for kvec, wk in w.items():
        for p in range(M):
            pk = basis.index(basis.modes[p] + np.array(kvec))
            for q in range(M):
                qk = basis.index(basis.modes[q] - np.array(kvec))
                if pk < 0 or qk < 0:
                    continue
                H = H + 0.5 * lam * wk * ad[pk] @ ad[qk] @ a[q] @ a[p]
    return H


@pytest.mark.parametrize("n_max", [3, 6])
def test_hamiltonian_matches_tensor_oracle(basis1d, w1d, n_max):
    f = enumerate_fock_basis(3, n_max, basis1d)
    H = build_hamiltonian(f, basis1d, w1d, -0.7, 0.3)
    assert H.is_hermitian()
    full = _dense_oracle(basis1d, w1d, -0.7, 0.3, n_max)
    idx = tensor_index(f.occ, n_max)
    np.testing.assert_allclose(H.to_dense(), full[np.ix_(idx, idx)], atol=1e-12)
    np.testing.assert_allclose(np.sort(H.spectrum()),
                               np.sort(scipy.linalg.eigvalsh(full[np.ix_(idx, idx)])), atol=1e-10)


def test_no_cross_block_entries(basis1d, w1d):
    f = enumerate_fock_basis(3, 6, basis1d)
    S = f.operator(quartic_terms(basis1d, w1d, 1.0))
    r, c = S.nonzero()
    assert np.all(f.block_of[r] == f.block_of[c])


def test_two_level_gibbs():
    H = BlockedOperator.from_dense(np.diag([0.0, 1.0]))
    st = gibbs_state(H, 1.0)
    assert st.logZ == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-14)
    np.testing.assert_allclose(np.sort(st.weights())[::-1], [0.73106, 0.26894], atol=1e-5)


def test_single_mode_geometric():
    b = build_mode_basis(1, 1.0, 1.5)
    f = enumerate_fock_basis(1, 40, b)
    st = gibbs_state(free_hamiltonian(f, b), 1 / math.log(2))
    mean, var, _ = number_statistics(st, [0])
    # truncated geometric with q = 1/2
    n = np.arange(41)
    p = 0.5 ** n / np.sum(0.5 ** n)
    assert mean == pytest.approx(p @ n, abs=1e-12)
    assert mean == pytest.approx(1.0, abs=1e-9)
    assert var == pytest.approx(2.0, abs=1e-9)


def test_low_temperature_ground_projector(basis1d):
    f = enumerate_fock_basis(3, 3, basis1d)
    st = gibbs_state(free_hamiltonian(f, basis1d), 0.01)
    assert st.diagonal_probabilities()[0] == pytest.approx(1.0, abs=1e-12)


def test_free_one_body_matches_bose(basis1d):
    T = 4.0
    f = enumerate_fock_basis(3, 80, basis1d)
    st = gibbs_state(free_hamiltonian(f, basis1d), T)
    G = reduced_density_matrix(st, 1).matrix
    np.testing.assert_allclose(G, np.diag(1 / np.expm1(basis1d.eigenvalues / T)), atol=1e-8)


def test_free_two_body_is_symmetric_square():
    b = build_mode_basis(1, 1.0, 50.0)
    f = FockBasis(2, 60, mode_energies=b.eigenvalues[:2])
    H = BlockedOperator.from_sparse(f, f.operator([((j,), (j,), b.eigenvalues[j]) for j in range(2)]))
    st = gibbs_state(H, 2.0)
    G1 = reduced_density_matrix(st, 1).matrix
    G2 = reduced_density_matrix(st, 2).matrix
    np.testing.assert_allclose(G2, symmetric_tensor_product(G1, G1), atol=1e-8)


def test_rdm_invariants(basis1d, w1d):
    f = enumerate_fock_basis(3, 12, basis1d)
    st = gibbs_state(build_hamiltonian(f, basis1d, w1d, -1.0, 0.25), 4.0)
    assert np.all(st.weights() >= 0) and st.weights().sum() == pytest.approx(1.0, abs=1e-12)
    G1 = reduced_density_matrix(st, 1)
    G2 = reduced_density_matrix(st, 2)
    p = st.diagonal_probabilities()
    N = f.number_counts()
    assert G1.trace() == pytest.approx(p @ N, abs=1e-10)
    assert G2.trace() == pytest.approx(p @ (N * (N - 1)) / 2, abs=1e-10)
    for G in (G1.matrix, G2.matrix):
        np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
        assert scipy.linalg.eigvalsh(G).min() > -1e-10


def test_vacuum_rdms():
    f = FockBasis(2, 3)
    rho = np.zeros((f.dim, f.dim))
    rho[0, 0] = 1
    st = FockState(f, rho)
    assert np.all(reduced_density_matrix(st, 1).matrix == 0)
    assert np.all(reduced_density_matrix(st, 2).matrix == 0)
    with pytest.raises(ValueError):
        reduced_density_matrix(st, 3)


def test_renormalization_equivalence(basis1d, w1d):
    T = 4.0
    f = enumerate_fock_basis(3, 20, basis1d)
    Hw = build_renormalized_hamiltonian(f, basis1d, w1d, T)
    nu = renormalized_nu(basis1d, T, w1d) - 0.5 * w1d.w_at_origin / T
    Hn = build_hamiltonian(f, basis1d, w1d, nu, 1.0 / T)
    sw, sn = gibbs_state(Hw, T), gibbs_state(Hn, T)
    assert trace_distance(sw, sn) <= 1e-10
    shift = 0.5 * compute_N0(basis1d, T) ** 2 * w1d.zero_mode / T
    assert Hw.meta["energy_shift"] == pytest.approx(shift)
    np.testing.assert_allclose(Hw.spectrum() - Hn.spectrum(), shift, atol=1e-9)


def test_renormalized_free_limit(basis1d):
    f = enumerate_fock_basis(3, 5, basis1d)
    Hw = build_renormalized_hamiltonian(f, basis1d, InteractionSpec.zero(1), 3.0)
    np.testing.assert_allclose(Hw.to_dense(), free_hamiltonian(f, basis1d).to_dense(), atol=1e-14)


def test_W_expectation_wick(basis1d, w1d):
    """<W> in the free state: operator trace vs occupation-number moments.

    For a state diagonal in the occupation basis only pair contractions survive:
    <rho_k^* rho_k> = sum_p <n_p (n_{p+k} + 1)> for k != 0.
    """
    T = 4.0
    f = enumerate_fock_basis(3, 20, basis1d)
    st0 = gibbs_state(free_hamiltonian(f, basis1d), T)
    p = st0.diagonal_probabilities()
    occ = f.occ.astype(float)
    N0t = p @ occ.sum(axis=1)
    W = literal_W_operator(f, basis1d, w1d, N0t)
    val = np.real(np.sum(W.multiply(st0.to_dense().T)))
    oracle = 0.5 * w1d.zero_mode * (p @ (occ.sum(axis=1) - N0t) ** 2)
    for kvec, wk in w1d.items():
        if kvec == (0,):
            continue
        for pi in range(3):
            pk = basis1d.index(basis1d.modes[pi] + np.array(kvec))
            if pk >= 0:
                oracle += 0.5 * wk * (p @ (occ[:, pi] * (occ[:, pk] + 1)))
    assert val == pytest.approx(oracle, abs=1e-10)


def test_number_statistics_product_state(basis1d):
    T = 3.0
    f = enumerate_fock_basis(3, 30, basis1d)
    st = gibbs_state(free_hamiltonian(f, basis1d), T)
    assert number_statistics(st, []) == (0.0, 0.0, 0.0)
    mean, var, _ = number_statistics(st, [0, 1, 2])
    p = st.diagonal_probabilities()
    N = f.number_counts()
    assert var == pytest.approx(p @ (N - p @ N) ** 2, abs=1e-12)
    # untruncated product-state value, up to the N <= 30 cutoff
    q = np.exp(-basis1d.eigenvalues / T)
    assert var == pytest.approx(np.sum(q / (1 - q) ** 2), rel=1e-2)


def test_truncation_consistency(basis1d, w1d):
    T = 4.0
    n = choose_n_max(basis1d.eigenvalues, T, 1e-3)
    a = gibbs_state(build_hamiltonian(enumerate_fock_basis(3, n, basis1d), basis1d, w1d, -1, 1 / T), T)
    b = gibbs_state(build_hamiltonian(enumerate_fock_basis(3, n + 10, basis1d), basis1d, w1d, -1, 1 / T), T)
    assert a.tail["tail_weight"] < 1e-3
    assert abs(a.logZ - b.logZ) <= a.tail["logz_bound"]
    d = np.abs(reduced_density_matrix(a, 1).matrix - reduced_density_matrix(b, 1).matrix).max()
    assert d <= a.tail["rdm_bound"]


def test_position_kernel(basis1d, w1d):
    T = 4.0
    f = enumerate_fock_basis(3, 30, basis1d)
    st0 = gibbs_state(free_hamiltonian(f, basis1d), T)
    G0 = reduced_density_matrix(st0, 1)
    x = np.linspace(0, 1, 32, endpoint=False)
    K = position_kernel(G0, basis1d, x)
    np.testing.assert_allclose(np.diag(K), G0.trace(), atol=1e-12)
    np.testing.assert_allclose(K, K.conj().T, atol=1e-12)
    st = gibbs_state(build_hamiltonian(f, basis1d, w1d, -1, 1 / T), T)
    Kl = position_kernel(reduced_density_matrix(st, 1), basis1d, x)
    assert np.real(np.diag(Kl)).min() >= -1e-10
