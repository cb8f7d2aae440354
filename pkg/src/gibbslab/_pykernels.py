"""NumPy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``GIBBSLAB_PURE_PYTHON=1``.  Signatures and outputs match the Cython module
exactly; ``tests/test_kernels.py`` checks the two against each other.
"""
import numpy as np


def rank_states(occ, binom, n_max):
    """Lexicographic rank of each occupation vector among all with sum <= n_max."""
    occ = np.asarray(occ, dtype=np.int64)
    D, M = occ.shape
    r = np.zeros(D, dtype=np.int64)
    b = np.full(D, n_max, dtype=np.int64)
    for i in range(M):
        L = M - i
        r += binom[b + L, L] - binom[b - occ[:, i] + L, L]
        b -= occ[:, i]
    return r


def monomial_coo(occ, flat_of_rank, binom, n_max, cre, ann, coef):
    """COO triplets of ``sum_t coef[t] * adag(cre[t]) ... a(ann[t]) ...``.

    ``occ`` holds the basis in flat order, so the column of an input state is its
    row in ``occ``.  Entries whose image leaves the truncated space are dropped.
    """
    occ = np.asarray(occ, dtype=np.int64)
    cre = np.asarray(cre, dtype=np.int64)
    ann = np.asarray(ann, dtype=np.int64)
    coef = np.asarray(coef, dtype=np.float64)
    D = occ.shape[0]
    cols_all = np.arange(D, dtype=np.int64)
    rows_out, cols_out, vals_out = [], [], []
    for t in range(len(coef)):
        work = occ.copy()
        amp = np.full(D, coef[t])
        ok = np.ones(D, dtype=bool)
        for a in ann[t]:
            n = work[:, a]
            ok &= n > 0
            amp *= np.sqrt(np.maximum(n, 0))
            work[:, a] = n - 1
        for c in cre[t]:
            work[:, c] += 1
            amp *= np.sqrt(np.maximum(work[:, c], 0))
        ok &= work.sum(axis=1) <= n_max
        ok &= amp != 0
        if not ok.any():
            continue
        w = work[ok]
        rows_out.append(flat_of_rank[rank_states(w, binom, n_max)])
        cols_out.append(cols_all[ok])
        vals_out.append(amp[ok])
    if not vals_out:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float64))
    return (np.concatenate(rows_out), np.concatenate(cols_out), np.concatenate(vals_out))


def interaction_energies(alphas, pair_p, pair_q, pair_k, what_k, zero_k, c0):
    """Per-sample ``1/2 sum_k what_k |rho_k - delta_{k,0} c0|^2``.

    ``rho_k = sum conj(alpha_p) alpha_q`` over the listed pairs with ``pair_k == k``.
    """
    alphas = np.asarray(alphas, dtype=np.complex128)
    what_k = np.asarray(what_k, dtype=np.float64)
    n = alphas.shape[0]
    nk = len(what_k)
    prod = np.conj(alphas[:, pair_p]) * alphas[:, pair_q]
    rho = np.zeros((n, nk), dtype=np.complex128)
    for k in range(nk):
        sel = pair_k == k
        if sel.any():
            rho[:, k] = prod[:, sel].sum(axis=1)
    if zero_k >= 0:
        rho[:, zero_k] -= c0
    return 0.5 * (np.abs(rho) ** 2) @ what_k
