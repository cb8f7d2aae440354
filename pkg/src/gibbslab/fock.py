"""Truncated bosonic Fock space, second-quantized operators and thermal states.

States are occupation vectors with total particle number at most ``N_max``.
They are grouped into blocks of fixed ``(N, total momentum)``; every operator
built here conserves both, so Hamiltonians are stored block by block and
thermal states are obtained from dense per-block eigendecompositions.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import logsumexp

from . import kernels
from .spectral import InteractionSpec, ModeBasis, compute_N0, renormalized_nu

DEFAULT_BUDGET_MB = 2048
MAX_BLOCK_DIM = 8192


class BudgetExceeded(MemoryError):
    """Raised instead of allocating a Fock space above the memory budget."""


class BlockTooLargeError(ValueError):
    pass


def memory_budget_bytes() -> int:
    return int(float(os.environ.get("GIBBSLAB_BUDGET_MB", DEFAULT_BUDGET_MB)) * 2 ** 20)


def fock_dimension(M: int, N_max: int) -> int:
    return math.comb(N_max + M, M)


def _binom_table(n: int, m: int) -> np.ndarray:
    t = np.zeros((n + 1, m + 1), dtype=np.int64)
    for a in range(n + 1):
        for L in range(min(a, m) + 1):
            t[a, L] = math.comb(a, L)
    return t


def _enumerate_lex(M: int, N_max: int) -> np.ndarray:
    """All occupation vectors with sum <= N_max in lexicographic order."""
    occ = np.zeros((1, 0), dtype=np.int64)
    tot = np.zeros(1, dtype=np.int64)
    for _ in range(M):
        room = N_max - tot + 1
        rep = np.repeat(np.arange(len(occ)), room)
        starts = np.cumsum(room) - room
        v = np.arange(len(rep)) - np.repeat(starts, room)
        occ = np.hstack([occ[rep], v[:, None]])
        tot = tot[rep] + v
    order = np.lexsort(occ.T[::-1])
    return np.ascontiguousarray(occ[order])


class FockBasis:
    """Blocked enumeration of the truncated Fock space over ``M`` modes.

    Parameters
    ----------
    M : int
        Number of one-body modes.
    N_max : int
        Total particle-number cutoff.
    momenta : (M, d) int array, optional
        Integer wavevector of each mode.  When given, blocks are labelled by
        ``(N, P)`` with ``P`` the exact lattice sum; otherwise by ``N`` only.
    mode_energies : (M,) array, optional
        One-body energies of the free reference state, used for tail estimates.
    """

    def __init__(self, M: int, N_max: int, momenta=None, mode_energies=None):
        if M < 1 or N_max < 0:
            raise ValueError("need M >= 1 and N_max >= 0")
        D_est = fock_dimension(M, N_max)
        need = D_est * (8 * M + 48)
        if need > memory_budget_bytes():
            raise BudgetExceeded(
                f"Fock space M={M}, N_max={N_max} has {D_est} states "
                f"(~{need / 2**20:.0f} MB) over the budget of "
                f"{memory_budget_bytes() / 2**20:.0f} MB (GIBBSLAB_BUDGET_MB)")
        self.M = M
        self.N_max = N_max
        self.momenta = None if momenta is None else np.asarray(momenta, dtype=np.int64).reshape(M, -1)
        self.mode_energies = None if mode_energies is None else np.asarray(mode_energies, float)
        self.binom = _binom_table(N_max + M + 1, M)

        lex = _enumerate_lex(M, N_max)
        N = lex.sum(axis=1)
        keys = [np.arange(len(lex))]
        if self.momenta is not None:
            P = lex @ self.momenta
            keys += [P[:, c] for c in range(P.shape[1] - 1, -1, -1)]
        keys.append(N)
        order = np.lexsort(keys)
        self.occ = np.ascontiguousarray(lex[order])
        self.N = N[order]
        self.flat_of_rank = np.empty(len(order), dtype=np.int64)
        self.flat_of_rank[order] = np.arange(len(order))
        label = self.N[:, None]
        if self.momenta is not None:
            label = np.hstack([label, self.occ @ self.momenta])
        change = np.ones(len(label), dtype=bool)
        change[1:] = np.any(label[1:] != label[:-1], axis=1)
        starts = np.flatnonzero(change)
        self.block_starts = np.append(starts, len(label))
        self.block_keys = [tuple(int(x) for x in label[s]) for s in starts]
        self.block_of = np.cumsum(change) - 1
        self.block_dims = np.diff(self.block_starts)
        for arr in (self.occ, self.N, self.flat_of_rank, self.block_starts, self.block_of):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.occ)

    @property
    def n_blocks(self) -> int:
        return len(self.block_keys)

    def block_slice(self, b: int) -> slice:
        return slice(int(self.block_starts[b]), int(self.block_starts[b + 1]))

    def block_sizes_by_key(self) -> dict:
        return {k: int(d) for k, d in zip(self.block_keys, self.block_dims)}

    def index(self, occupation) -> int:
        v = np.asarray(occupation, dtype=np.int64).reshape(1, self.M)
        if v.min() < 0 or v.sum() > self.N_max:
            return -1
        return int(self.flat_of_rank[kernels.rank_states(v, self.binom, self.N_max)[0]])

    def monomial_coo(self, terms):
        """COO triplets of ``sum coef * adag(c1)..adag(ck) a(a1)..a(ak)``.

        ``terms`` is a sequence of ``(cre, ann, coef)`` with equal-length index
        tuples within one call.
        """
        terms = list(terms)
        if not terms:
            z = np.zeros(0, np.int64)
            return z, z, np.zeros(0)
        cre = np.array([t[0] for t in terms], dtype=np.int64).reshape(len(terms), -1)
        ann = np.array([t[1] for t in terms], dtype=np.int64).reshape(len(terms), -1)
        coef = np.array([t[2] for t in terms], dtype=np.float64)
        return kernels.monomial_coo(self.occ, self.flat_of_rank, self.binom, self.N_max,
                                    cre, ann, coef)

    def operator(self, terms) -> sp.csr_matrix:
        """Sparse matrix of a sum of monomials, grouped by shape automatically."""
        groups: dict = {}
        for cre, ann, coef in terms:
            groups.setdefault((len(cre), len(ann)), []).append((tuple(cre), tuple(ann), coef))
        D = self.dim
        out = sp.csr_matrix((D, D))
        for g in groups.values():
            r, c, v = self.monomial_coo(g)
            out = out + sp.csr_matrix((v, (r, c)), shape=(D, D))
        return out

    def annihilation(self, j: int) -> sp.csr_matrix:
        return self.operator([((), (j,), 1.0)])

    def number_counts(self, modes=None) -> np.ndarray:
        """Eigenvalue of ``N_Q`` on every basis state."""
        if modes is None:
            return self.N.astype(float)
        modes = list(modes)
        if not modes:
            return np.zeros(self.dim)
        return self.occ[:, modes].sum(axis=1).astype(float)


def enumerate_fock_basis(M: int, N_max: int, basis: ModeBasis | None = None) -> FockBasis:
    if basis is not None:
        if M != basis.size:
            raise ValueError(f"M={M} does not match the mode basis size {basis.size}")
        return FockBasis(M, N_max, momenta=basis.modes, mode_energies=basis.eigenvalues)
    return FockBasis(M, N_max)


# ---------------------------------------------------------------------------
# operators


@dataclass
class BlockedOperator:
    """Hermitian operator stored as one dense matrix per Fock block."""

    fock: FockBasis
    blocks: list
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_sparse(cls, fock: FockBasis, mat, meta=None, atol: float = 0.0):
        coo = sp.coo_matrix(mat)
        coo.sum_duplicates()
        r, c, v = coo.row, coo.col, coo.data
        bad = (fock.block_of[r] != fock.block_of[c]) & (np.abs(v) > atol)
        if bad.any():
            raise ValueError(f"operator couples different (N, P) blocks at {int(bad.sum())} entries")
        keep = fock.block_of[r] == fock.block_of[c]
        r, c, v = r[keep], c[keep], v[keep]
        dims = fock.block_dims
        offsets = np.concatenate([[0], np.cumsum(dims.astype(np.int64) ** 2)])
        b = fock.block_of[r]
        start = fock.block_starts[b]
        flat = np.zeros(int(offsets[-1]), dtype=v.dtype if v.size else float)
        np.add.at(flat, offsets[b] + (r - start) * dims[b] + (c - start), v)
        blocks = [flat[offsets[i]:offsets[i + 1]].reshape(dims[i], dims[i])
                  for i in range(fock.n_blocks)]
        return cls(fock, blocks, dict(meta or {}))

    @classmethod
    def from_dense(cls, mat, fock: FockBasis | None = None, meta=None):
        mat = np.asarray(mat)
        if fock is None:
            return cls(None, [mat], dict(meta or {}))
        return cls.from_sparse(fock, sp.csr_matrix(mat), meta)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.block_diag(self.blocks, format="csr")

    def to_dense(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks)

    def __add__(self, other: "BlockedOperator") -> "BlockedOperator":
        return BlockedOperator(self.fock, [a + b for a, b in zip(self.blocks, other.blocks)],
                               dict(self.meta))

    def scaled(self, s: float) -> "BlockedOperator":
        return BlockedOperator(self.fock, [s * a for a in self.blocks], dict(self.meta))

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(np.allclose(a, a.conj().T, atol=atol, rtol=0) for a in self.blocks)

    def spectrum(self) -> np.ndarray:
        return np.sort(np.concatenate([scipy.linalg.eigvalsh(a) for a in self.blocks if a.size]))


def quartic_terms(basis: ModeBasis, w: InteractionSpec, coupling: float):
    """Monomials of ``coupling/2 * sum_{k,p,q} what(k) adag(p+k) adag(q-k) a(q) a(p)``."""
    terms = []
    M = basis.size
    for kvec, wk in w.items():
        kvec = np.array(kvec)
        for p in range(M):
            pk = basis.index(basis.modes[p] + kvec)
            if pk < 0:
                continue
            for q in range(M):
                qk = basis.index(basis.modes[q] - kvec)
                if qk < 0:
                    continue
                terms.append(((pk, qk), (q, p), 0.5 * coupling * wk))
    return terms


def density_operator_terms(basis: ModeBasis, kvec):
    """Monomials of ``rho_k = sum_p adag(p+k) a(p)`` restricted to the basis."""
    kvec = np.atleast_1d(np.asarray(kvec))
    out = []
    for p in range(basis.size):
        pk = basis.index(basis.modes[p] + kvec)
        if pk >= 0:
            out.append(((pk,), (p,), 1.0))
    return out


def _one_body_diagonal(fock: FockBasis, energies) -> sp.csr_matrix:
    diag = fock.occ @ np.asarray(energies, dtype=float)
    return sp.diags(diag, format="csr")


def build_hamiltonian(fock: FockBasis, basis: ModeBasis, w: InteractionSpec,
                      nu: float, lam: float) -> BlockedOperator:
    """``sum_j (|k_j|^2 - nu) n_j + lam/2 sum what(k) adag adag a a`` in blocked form."""
    if lam < 0:
        raise ValueError("coupling lambda must be nonnegative")
    kinetic = basis.eigenvalues - basis.kappa
    eps = kinetic - nu
    H = _one_body_diagonal(fock, eps)
    if lam > 0 and not w.is_zero():
        H = H + fock.operator(quartic_terms(basis, w, lam))
    meta = {"nu": float(nu), "lambda": float(lam), "renormalized": False,
            "one_body": [float(x) for x in eps], "energy_shift": 0.0}
    return BlockedOperator.from_sparse(fock, H, meta)


def build_renormalized_hamiltonian(fock: FockBasis, basis: ModeBasis, w: InteractionSpec,
                                   T: float) -> BlockedOperator:
    """``H_0 + lam * W`` with ``lam = 1/T`` and the Wick-renormalized interaction ``W``.

    ``W`` is expanded in normal order as
    ``1/2 sum what(k) :rho_k^* rho_k: + (w(0)/2 - what(0) N0) N + what(0) N0^2 / 2``.
    The constant ``lam * what(0) * N0^2 / 2`` is kept in the spectrum and recorded in
    ``meta["energy_shift"]``; ``meta["nu_equivalent"]`` is the chemical potential of
    the plain Hamiltonian with the same Gibbs state.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    lam = 1.0 / T
    N0 = compute_N0(basis, T)
    w0 = w.zero_mode
    one_body_shift = lam * (0.5 * w.w_at_origin - w0 * N0)
    shift = 0.5 * lam * N0 ** 2 * w0
    eps = basis.eigenvalues + one_body_shift
    H = _one_body_diagonal(fock, eps)
    if not w.is_zero():
        H = H + fock.operator(quartic_terms(basis, w, lam))
    H = H + shift * sp.identity(fock.dim, format="csr")
    nu_eq = renormalized_nu(basis, T, w) - 0.5 * lam * w.w_at_origin
    meta = {"nu": float(nu_eq), "nu_equivalent": float(nu_eq), "lambda": lam,
            "renormalized": True, "N0": N0, "energy_shift": float(shift),
            "one_body": [float(x) for x in eps]}
    return BlockedOperator.from_sparse(fock, H, meta)


def literal_W_operator(fock: FockBasis, basis: ModeBasis, w: InteractionSpec, N0: float):
    """``1/2 sum_k what(k) (rho_k - delta_k0 N0)^* (rho_k - delta_k0 N0)`` as a product.

    Built from sparse one-body density operators without normal ordering; on a
    truncated mode set it differs from the normal-ordered form used in
    :func:`build_renormalized_hamiltonian` by the commutator defect of modes
    pushed out of the basis.
    """
    D = fock.dim
    out = sp.csr_matrix((D, D))
    zero = (0,) * basis.d
    for kvec, wk in w.items():
        X = fock.operator(density_operator_terms(basis, kvec))
        if kvec == zero:
            X = X - N0 * sp.identity(D, format="csr")
        out = out + 0.5 * wk * (X.conj().T @ X)
    return out


# ---------------------------------------------------------------------------
# thermal states


def free_tail(energies, T: float, N_max: int) -> dict:
    """Truncation diagnostics of the untruncated free product state.

    Returns the weight ``P(N > N_max)``, a bound on the resulting change of
    ``log Z`` and a bound on the trace-norm change of the one-body matrix.
    """
    e = np.asarray(energies, dtype=float)
    if np.any(e <= 0):
        return {"tail_weight": float("nan"), "logz_bound": float("nan"), "rdm_bound": float("nan")}
    q = np.exp(-e / T)
    qmax = float(q.max())
    extra = int(math.ceil(60.0 / max(-math.log(qmax), 1e-12))) + 10 if qmax > 0 else 1
    cap = N_max + min(extra, 200000)
    n = np.arange(cap + 1)
    pmf = np.zeros(cap + 1)
    pmf[0] = 1.0
    for qj in q:
        geo = (1 - qj) * qj ** n
        pmf = np.convolve(pmf, geo)[: cap + 1]
    tail = float(pmf[N_max + 1:].sum())
    mean_n = float(np.sum(q / (1 - q)))
    tail_n = float(np.sum(n[N_max + 1:] * pmf[N_max + 1:]))
    tail = min(tail, 1.0)
    logz = -math.log1p(-tail) if tail < 1 else float("inf")
    rdm = tail_n + (tail / (1 - tail)) * mean_n if tail < 1 else float("inf")
    return {"tail_weight": tail, "logz_bound": logz, "rdm_bound": rdm}


def choose_n_max(energies, T: float, tail_target: float = 1e-3, n_min: int = 1) -> int:
    """Smallest ``N_max`` whose free-state tail weight is below ``tail_target``."""
    e = np.asarray(energies, dtype=float)
    q = np.exp(-e / T)
    mean = float(np.sum(q / (1 - q)))
    hi = max(n_min, int(mean) + 1)
    while free_tail(e, T, hi)["tail_weight"] >= tail_target:
        hi *= 2
    lo = n_min
    while lo < hi:
        mid = (lo + hi) // 2
        if free_tail(e, T, mid)["tail_weight"] < tail_target:
            hi = mid
        else:
            lo = mid + 1
    return lo


class _ExpectationMixin:
    def expect_terms(self, terms) -> complex:
        r, c, v = self.fock.monomial_coo(terms)
        return self.expect_coo(r, c, v)

    def mean_number(self, modes=None) -> float:
        return float(self.diagonal_probabilities() @ self.fock.number_counts(modes))


@dataclass
class SpectralGibbsState(_ExpectationMixin):
    """Thermal state ``exp(-H/T)/Z`` stored through per-block eigendata."""

    fock: FockBasis
    T: float
    energies: list
    vectors: list
    logp: list
    logZ: float
    hamiltonian: BlockedOperator | None = None
    provenance: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)
    _rho_cache: tuple | None = field(default=None, repr=False)

    def weights(self) -> np.ndarray:
        return np.exp(np.concatenate(self.logp))

    def block_weights(self) -> np.ndarray:
        return np.array([np.exp(lp).sum() for lp in self.logp])

    def _rho_flat(self):
        if self._rho_cache is None:
            dims = np.array([len(e) for e in self.energies], dtype=np.int64)
            offsets = np.concatenate([[0], np.cumsum(dims ** 2)])
            dtype = np.result_type(*[v.dtype for v in self.vectors]) if self.vectors else float
            flat = np.zeros(int(offsets[-1]), dtype=dtype)
            for b, (V, lp) in enumerate(zip(self.vectors, self.logp)):
                p = np.exp(lp)
                if p.max() == 0.0:
                    continue
                flat[offsets[b]:offsets[b + 1]] = ((V * p) @ V.conj().T).ravel()
            self._rho_cache = (flat, offsets)
        return self._rho_cache

    def block_density(self, b: int) -> np.ndarray:
        flat, off = self._rho_flat()
        d = len(self.energies[b])
        return flat[off[b]:off[b + 1]].reshape(d, d)

    def expect_coo(self, rows, cols, vals) -> complex:
        """``Tr(rho O)`` for ``O`` given as COO triplets on the flat basis."""
        f = self.fock
        flat, off = self._rho_flat()
        br, bc = f.block_of[rows], f.block_of[cols]
        same = br == bc
        if not same.any():
            return 0.0
        r, c, v, b = rows[same], cols[same], vals[same], br[same]
        start = f.block_starts[b]
        d = f.block_dims[b]
        return complex(np.sum(v * flat[off[b] + (c - start) * d + (r - start)]))

    def diagonal_probabilities(self) -> np.ndarray:
        return np.concatenate([np.real(np.sum(np.abs(V) ** 2 * np.exp(lp), axis=1))
                               for V, lp in zip(self.vectors, self.logp)])

    def to_dense(self) -> np.ndarray:
        return scipy.linalg.block_diag(*[self.block_density(b) for b in range(len(self.energies))])

    def mean_energy(self) -> float:
        return float(sum(np.sum(np.exp(lp) * e) for lp, e in zip(self.logp, self.energies)))

    def entropy(self) -> float:
        return float(-sum(np.sum(np.exp(lp) * lp) for lp in self.logp))

    def summary(self) -> dict:
        N = self.fock.number_counts()
        p = self.diagonal_probabilities()
        mean = float(p @ N)
        return {
            "T": self.T,
            "nu": self.provenance.get("nu"),
            "renormalized": self.provenance.get("renormalized"),
            "logZ": self.logZ,
            "N_mean": mean,
            "N_var": float(p @ (N - mean) ** 2),
            "tail_weight": self.tail.get("tail_weight"),
            "block_dims": [int(x) for x in self.fock.block_dims],
        }


@dataclass
class FockState(_ExpectationMixin):
    """General density matrix on a (small) Fock basis, stored densely."""

    fock: FockBasis
    rho: np.ndarray

    def expect_coo(self, rows, cols, vals) -> complex:
        return complex(np.sum(vals * self.rho[cols, rows]))

    def diagonal_probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()

    def to_dense(self) -> np.ndarray:
        return self.rho


def gibbs_state(H: BlockedOperator, T: float) -> SpectralGibbsState:
    """Per-block eigendecomposition of ``exp(-H/T)/Z``."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    energies, vectors = [], []
    for b, block in enumerate(H.blocks):
        if block.shape[0] > MAX_BLOCK_DIM:
            raise BlockTooLargeError(
                f"block {b} has dimension {block.shape[0]} > {MAX_BLOCK_DIM}; reduce the truncation")
        try:
            e, V = scipy.linalg.eigh(block)
        except (np.linalg.LinAlgError, ValueError) as exc:
            key = H.fock.block_keys[b] if H.fock is not None else b
            raise RuntimeError(f"eigensolver failed on block {b} (key {key})") from exc
        energies.append(e)
        vectors.append(V)
    logZ = float(logsumexp(np.concatenate(energies) / -T)) if energies else 0.0
    logp = [-e / T - logZ for e in energies]
    fock = H.fock
    tail = {}
    if fock is not None and fock.mode_energies is not None:
        tail = free_tail(fock.mode_energies, T, fock.N_max)
    return SpectralGibbsState(fock, float(T), energies, vectors, logp, logZ,
                              hamiltonian=H, provenance=dict(H.meta), tail=tail)


def free_hamiltonian(fock: FockBasis, basis: ModeBasis) -> BlockedOperator:
    return build_hamiltonian(fock, basis, InteractionSpec.zero(basis.d), -basis.kappa, 0.0)


# ---------------------------------------------------------------------------
# reduced density matrices


def pair_list(M: int):
    return [(i, j) for i in range(M) for j in range(i, M)]


def sym_isometry(M: int) -> np.ndarray:
    """Columns are the orthonormal symmetric pair vectors, ordered as :func:`pair_list`."""
    pairs = pair_list(M)
    V = np.zeros((M * M, len(pairs)))
    for c, (i, j) in enumerate(pairs):
        if i == j:
            V[i * M + i, c] = 1.0
        else:
            V[i * M + j, c] = V[j * M + i, c] = 1.0 / math.sqrt(2.0)
    return V


def symmetric_tensor_product(A, B) -> np.ndarray:
    """``P_s (A x B) P_s`` written in the symmetric pair basis."""
    V = sym_isometry(A.shape[0])
    return V.T @ np.kron(A, B) @ V


RDM_CONVENTION = "k!^-1 normalization; k=2 on symmetric pairs (i<=j), weight sqrt(2) for i<j"


@dataclass
class ReducedDensityMatrix:
    k: int
    matrix: np.ndarray
    convention: str = RDM_CONVENTION

    @property
    def M(self) -> int:
        if self.k == 1:
            return self.matrix.shape[0]
        n = self.matrix.shape[0]
        return int(round((math.sqrt(8 * n + 1) - 1) / 2))

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def to_rows(self):
        """Row-major ``(i, j, re, im)`` records."""
        m = self.matrix
        return [(i, j, float(np.real(m[i, j])), float(np.imag(m[i, j])))
                for i in range(m.shape[0]) for j in range(m.shape[1])]

    def to_csv(self, path, header_extra: dict | None = None):
        with open(path, "w", newline="") as fh:
            if header_extra:
                fh.write("# " + json.dumps(header_extra, sort_keys=True) + "\n")
            wr = csv.writer(fh)
            wr.writerow(["i", "j", "re", "im"])
            for rec in self.to_rows():
                wr.writerow([rec[0], rec[1], repr(rec[2]), repr(rec[3])])


def _conserves(fock: FockBasis, cre, ann) -> bool:
    if fock.momenta is None:
        return True
    P = fock.momenta
    return np.array_equal(P[list(cre)].sum(axis=0), P[list(ann)].sum(axis=0))


def reduced_density_matrix(state, k: int) -> ReducedDensityMatrix:
    """One- or two-body density matrix of a Fock-space state.

    ``k=1``: ``G[i, j] = <adag_j a_i>``.  ``k=2``: on the symmetric pair basis,
    ``G[(i,j), (m,n)] = c_ij c_mn / 2 * <adag_m adag_n a_j a_i>`` with
    ``c = sqrt(2)`` off the diagonal, so that ``Tr G = <N(N-1)>/2``.
    """
    if k not in (1, 2):
        raise ValueError(f"k={k} not supported (k must be 1 or 2)")
    fock = state.fock
    M = fock.M
    # block-diagonal states have zero expectation on momentum-changing monomials
    skip = isinstance(state, SpectralGibbsState)
    if k == 1:
        G = np.zeros((M, M), dtype=complex)
        for i in range(M):
            for j in range(i, M):
                if skip and not _conserves(fock, (j,), (i,)):
                    continue
                val = state.expect_terms([((j,), (i,), 1.0)])
                G[i, j] = val
                G[j, i] = np.conj(val)
        return ReducedDensityMatrix(1, _maybe_real(G))
    pairs = pair_list(M)
    npairs = len(pairs)
    G = np.zeros((npairs, npairs), dtype=complex)
    for a, (i, j) in enumerate(pairs):
        cij = 1.0 if i == j else math.sqrt(2.0)
        for b in range(a, npairs):
            m, n = pairs[b]
            if skip and not _conserves(fock, (m, n), (j, i)):
                continue
            cmn = 1.0 if m == n else math.sqrt(2.0)
            val = 0.5 * cij * cmn * state.expect_terms([((m, n), (j, i), 1.0)])
            G[a, b] = val
            G[b, a] = np.conj(val)
    return ReducedDensityMatrix(2, _maybe_real(G))


def _maybe_real(G):
    return G.real.copy() if np.all(G.imag == 0) else G


def number_statistics(state, modes) -> tuple[float, float, float]:
    """Mean, variance and third central moment of ``N_Q`` for the mode subset ``Q``."""
    modes = list(modes)
    if not modes:
        return 0.0, 0.0, 0.0
    n = state.fock.number_counts(modes)
    p = state.diagonal_probabilities()
    mean = float(p @ n)
    dev = n - mean
    return mean, float(p @ dev ** 2), float(p @ dev ** 3)


def position_kernel(rdm: ReducedDensityMatrix, basis: ModeBasis, grid_points) -> np.ndarray:
    """``G(x; y) = sum_ij G_ij exp(i k_i x) exp(-i k_j y)`` on a list of points in ``[0,1)^d``."""
    if rdm.k != 1:
        raise ValueError("position kernel needs a one-body density matrix")
    x = np.asarray(grid_points, dtype=float).reshape(-1, basis.d)
    E = np.exp(2j * math.pi * (x @ basis.modes.T))
    return E @ rdm.matrix @ E.conj().T


def free_one_body(basis: ModeBasis, T: float) -> np.ndarray:
    """Untruncated free one-body matrix ``diag(1/(exp(lam_j/T)-1))``."""
    from .spectral import free_occupation
    return np.diag(free_occupation(basis.eigenvalues, T))
