# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; see ``_pykernels`` for the reference NumPy versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline long long _rank(long long[::1] v, const long long[:, ::1] binom,
                            long long n_max, int M) noexcept nogil:
    cdef long long r = 0
    cdef long long b = n_max
    cdef int i, L
    for i in range(M):
        L = M - i
        r += binom[b + L, L] - binom[b - v[i] + L, L]
        b -= v[i]
    return r


def rank_states(occ, binom, long long n_max):
    cdef const long long[:, ::1] o = np.ascontiguousarray(occ, dtype=np.int64)
    cdef const long long[:, ::1] bt = np.ascontiguousarray(binom, dtype=np.int64)
    cdef Py_ssize_t D = o.shape[0], s
    cdef int M = o.shape[1], i, L
    out = np.empty(D, dtype=np.int64)
    cdef long long[::1] r = out
    cdef long long acc, b
    with nogil:
        for s in range(D):
            acc = 0
            b = n_max
            for i in range(M):
                L = M - i
                acc += bt[b + L, L] - bt[b - o[s, i] + L, L]
                b -= o[s, i]
            r[s] = acc
    return out


def monomial_coo(occ, flat_of_rank, binom, long long n_max, cre, ann, coef):
    cdef const long long[:, ::1] o = np.ascontiguousarray(occ, dtype=np.int64)
    cdef const long long[::1] fr = np.ascontiguousarray(flat_of_rank, dtype=np.int64)
    cdef const long long[:, ::1] bt = np.ascontiguousarray(binom, dtype=np.int64)
    cdef const long long[:, ::1] cr = np.ascontiguousarray(cre, dtype=np.int64).reshape(len(coef), -1)
    cdef const long long[:, ::1] an = np.ascontiguousarray(ann, dtype=np.int64).reshape(len(coef), -1)
    cdef const double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t D = o.shape[0], nt = cf.shape[0], s, t, nnz = 0
    cdef int M = o.shape[1], kc = cr.shape[1], ka = an.shape[1], i, j
    cdef long long tot
    cdef double amp
    rows_a = np.empty(D * max(nt, 1), dtype=np.int64)
    cols_a = np.empty(D * max(nt, 1), dtype=np.int64)
    vals_a = np.empty(D * max(nt, 1), dtype=np.float64)
    cdef long long[::1] rows = rows_a
    cdef long long[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    work_a = np.empty(M, dtype=np.int64)
    cdef long long[::1] w = work_a
    with nogil:
        for t in range(nt):
            if cf[t] == 0.0:
                continue
            for s in range(D):
                tot = 0
                for i in range(M):
                    w[i] = o[s, i]
                    tot += w[i]
                amp = cf[t]
                for j in range(ka):
                    i = an[t, j]
                    if w[i] <= 0:
                        amp = 0.0
                        break
                    amp *= sqrt(<double>w[i])
                    w[i] -= 1
                if amp == 0.0:
                    continue
                for j in range(kc):
                    i = cr[t, j]
                    w[i] += 1
                    amp *= sqrt(<double>w[i])
                tot += kc - ka
                if tot > n_max:
                    continue
                rows[nnz] = fr[_rank(w, bt, n_max, M)]
                cols[nnz] = s
                vals[nnz] = amp
                nnz += 1
    return rows_a[:nnz].copy(), cols_a[:nnz].copy(), vals_a[:nnz].copy()


def interaction_energies(alphas, pair_p, pair_q, pair_k, what_k, long zero_k, double c0):
    cdef const double complex[:, ::1] al = np.ascontiguousarray(alphas, dtype=np.complex128)
    cdef const long long[::1] pp = np.ascontiguousarray(pair_p, dtype=np.int64)
    cdef const long long[::1] pq = np.ascontiguousarray(pair_q, dtype=np.int64)
    cdef const long long[::1] pk = np.ascontiguousarray(pair_k, dtype=np.int64)
    cdef const double[::1] wk = np.ascontiguousarray(what_k, dtype=np.float64)
    cdef Py_ssize_t n = al.shape[0], s, j
    cdef int nk = wk.shape[0], k
    cdef Py_ssize_t npair = pp.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    rho_a = np.empty(max(nk, 1), dtype=np.complex128)
    cdef double complex[::1] rho = rho_a
    cdef double complex a, b
    cdef double acc, re, im
    with nogil:
        for s in range(n):
            for k in range(nk):
                rho[k] = 0
            for j in range(npair):
                a = al[s, pp[j]]
                b = al[s, pq[j]]
                rho[pk[j]] = rho[pk[j]] + (a.real - 1j * a.imag) * b
            if zero_k >= 0:
                rho[zero_k] = rho[zero_k] - c0
            acc = 0.0
            for k in range(nk):
                re = rho[k].real
                im = rho[k].imag
                acc += wk[k] * (re * re + im * im)
            res[s] = 0.5 * acc
    return out
