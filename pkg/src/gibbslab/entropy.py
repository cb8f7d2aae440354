"""Relative entropy, Schatten norms, Gibbs variational values and s-variances."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import roots_legendre

from .fock import BlockedOperator, FockState, SpectralGibbsState, gibbs_state

ZERO_EIG = 1e-14
SUPPORT_TOL = 1e-12
INF = float("inf")


def _dense(state) -> np.ndarray:
    if isinstance(state, np.ndarray):
        return state
    return state.to_dense()


def _same_fock(a, b) -> bool:
    fa, fb = getattr(a, "fock", None), getattr(b, "fock", None)
    if fa is None or fb is None:
        return fa is fb
    return fa is fb or (fa.dim == fb.dim and fa.M == fb.M and fa.N_max == fb.N_max
                        and np.array_equal(fa.occ, fb.occ))


def _check_compatible(a, b):
    if hasattr(a, "fock") and hasattr(b, "fock") and not _same_fock(a, b):
        raise ValueError("states live on different Fock bases")
    da = a.shape[0] if isinstance(a, np.ndarray) else a.fock.dim
    db = b.shape[0] if isinstance(b, np.ndarray) else b.fock.dim
    if da != db:
        raise ValueError(f"dimension mismatch: {da} vs {db}")


def relative_entropy(a, b) -> float:
    """``Tr a (log a - log b)``, or ``inf`` when ``a`` has weight on the kernel of ``b``.

    Blocked thermal states on a common basis are handled block by block; anything
    else is compared as dense matrices in the two eigenbases.
    """
    _check_compatible(a, b)
    if isinstance(a, SpectralGibbsState) and isinstance(b, SpectralGibbsState):
        total = 0.0
        for Va, la, Vb, lb in zip(a.vectors, a.logp, b.vectors, b.logp):
            pa = np.exp(la)
            if pa.max() == 0.0:
                continue
            overlap = np.abs(Va.conj().T @ Vb) ** 2
            total += float(pa @ la - pa @ (overlap @ lb))
        return max(total, 0.0) if total > -SUPPORT_TOL else total
    A, B = _dense(a), _dense(b)
    pa, Va = scipy.linalg.eigh(A)
    pb, Vb = scipy.linalg.eigh(B)
    pa = np.where(pa < ZERO_EIG, 0.0, pa)
    null = pb < ZERO_EIG
    overlap = np.abs(Va.conj().T @ Vb) ** 2
    if null.any() and float(pa @ overlap[:, null].sum(axis=1)) > SUPPORT_TOL:
        return INF
    logpa = np.log(np.where(pa > 0, pa, 1.0))
    logpb = np.log(np.where(null, 1.0, pb))
    total = float(pa @ logpa - pa @ (overlap[:, ~null] @ logpb[~null]))
    return max(total, 0.0) if total > -SUPPORT_TOL else total


def schatten_norm(mat, p: float = 1.0) -> float:
    """p-norm of the singular values; ``p=np.inf`` gives the operator norm."""
    if p < 1:
        raise ValueError("Schatten norms need p >= 1")
    s = scipy.linalg.svdvals(np.atleast_2d(np.asarray(mat)))
    if s.size == 0:
        return 0.0
    if math.isinf(p):
        return float(s.max())
    return float(np.sum(s ** p) ** (1.0 / p))


def trace_distance(a, b) -> float:
    """``Tr|a - b|`` (no factor 1/2)."""
    _check_compatible(a, b)
    if isinstance(a, SpectralGibbsState) and isinstance(b, SpectralGibbsState):
        return float(sum(np.abs(scipy.linalg.eigvalsh(a.block_density(i) - b.block_density(i))).sum()
                         for i in range(len(a.energies))))
    return float(np.abs(scipy.linalg.eigvalsh(_dense(a) - _dense(b))).sum())


def pinsker_check(a, b) -> tuple[float, float]:
    """``(H(a, b), (Tr|a - b|)^2 / 2)``; the first never falls below the second."""
    return relative_entropy(a, b), 0.5 * trace_distance(a, b) ** 2


def _trace_with(H: BlockedOperator, state) -> float:
    if isinstance(state, SpectralGibbsState) and state.hamiltonian is H:
        return state.mean_energy()
    if isinstance(state, SpectralGibbsState) and H.fock is not None and _same_fock(state, H):
        return float(sum(np.real(np.sum(h * state.block_density(i).T))
                         for i, h in enumerate(H.blocks)))
    return float(np.real(np.sum(H.to_dense() * _dense(state).T)))


def _neg_entropy(state) -> float:
    if isinstance(state, SpectralGibbsState):
        return -state.entropy()
    p = scipy.linalg.eigvalsh(_dense(state))
    p = p[p > ZERO_EIG]
    return float(p @ np.log(p))


def free_energy_value(trial, H: BlockedOperator, T: float, reference_state=None) -> float:
    """Gibbs free-energy functional of a trial state.

    Without ``reference_state``: ``Tr[H G]/T + Tr[G log G]``, minimized by the Gibbs
    state with value ``-log Z``.  With a thermal ``reference_state`` of Hamiltonian
    ``H_ref``: ``H(G, G_ref) + Tr[(H - H_ref) G]/T``, minimized with value
    ``-log(Z/Z_ref)``; for ``H = H_0 + W/T`` the second term is ``Tr[W G]/T^2``.
    """
    if reference_state is None:
        return _trace_with(H, trial) / T + _neg_entropy(trial)
    H_ref = reference_state.hamiltonian
    if H_ref is None:
        raise ValueError("reference state does not carry its Hamiltonian")
    diff = BlockedOperator(H.fock, [a - b for a, b in zip(H.blocks, H_ref.blocks)], {})
    return relative_entropy(trial, reference_state) + _trace_with(diff, trial) / T


# ---------------------------------------------------------------------------
# s-variance and linear response


def _blocks_of(A, state):
    if isinstance(A, BlockedOperator):
        blocks = A.blocks
    elif isinstance(A, (list, tuple)):
        blocks = list(A)
    else:
        blocks = [np.asarray(A)]
    if len(blocks) != len(state.energies):
        raise ValueError("observable blocking does not match the state")
    return blocks


def _rotated(A, state):
    return [V.conj().T @ a @ V for a, V in zip(_blocks_of(A, state), state.vectors)]


def s_variance(state: SpectralGibbsState, A, s) -> float | np.ndarray:
    """``Tr[A G^s A G^(1-s)] - (Tr[A G])^2`` evaluated in the eigenbasis of ``G``."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any((s_arr < 0) | (s_arr > 1)):
        raise ValueError("s must lie in [0, 1]")
    rot = _rotated(A, state)
    out = _s_variance_rotated(rot, state.logp, s_arr)
    return float(out[0]) if np.ndim(s) == 0 else out


def _s_variance_rotated(rot, logp, s_arr):
    mean = sum(float(np.real(np.diag(a)) @ np.exp(lp)) for a, lp in zip(rot, logp))
    out = np.zeros(len(s_arr))
    for a, lp in zip(rot, logp):
        a2 = np.abs(a) ** 2
        for i, s in enumerate(s_arr):
            out[i] += float(np.sum(a2 * np.exp(s * lp[:, None] + (1 - s) * lp[None, :])))
    return out - mean ** 2


def _response_mean(H_blocks, A_blocks, T, eps):
    """``Tr(A exp(-(H - eps A)/T)) / Tr(exp(-(H - eps A)/T))``."""
    es, means = [], []
    for h, a in zip(H_blocks, A_blocks):
        e, V = scipy.linalg.eigh(h - eps * a)
        es.append(e)
        means.append(np.real(np.einsum("ij,ik,kj->j", V.conj(), a, V)))
    e = np.concatenate(es)
    m = np.concatenate(means)
    w = np.exp(-(e - e.min()) / T)
    return float(w @ m / w.sum())


@dataclass
class VarianceReport:
    observable: str
    T: float
    s_grid: list
    var_s: list
    var0: float
    quadrature: float
    fd_response: float
    commutator_term: float
    fd_step: float
    nodes: int
    chain_slack: float
    meta: dict = field(default_factory=dict)

    @property
    def relative_gap(self) -> float:
        return abs(self.fd_response - self.quadrature) / max(abs(self.quadrature), 1e-300)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def gauss_legendre_unit(nodes: int):
    x, w = roots_legendre(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def linear_response_check(H: BlockedOperator, A, T: float, fd_step: float = 1e-4,
                          nodes: int = 32, richardson: bool = False,
                          s_grid=None, observable: str = "A") -> VarianceReport:
    """Compare the finite-difference response with the s-averaged variance.

    The response ``T * d/d eps <A>`` at ``eps = 0`` for the state ``exp(-(H - eps A)/T)``
    equals ``int_0^1 Var^(s) ds`` of ``G = exp(-H/T)/Z``.  The inequality chain
    ``0 <= Var^(s) <= Var^(0) <= Var^(s) + c`` with ``c = -Tr([A, H/T]^2 G)/2`` is
    summarized by its smallest slack over ``s_grid`` and the quadrature nodes.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    state = gibbs_state(H, T)
    A_blocks = _blocks_of(A, state)
    rot = _rotated(A_blocks, state)
    xs, ws = gauss_legendre_unit(nodes)
    var_nodes = _s_variance_rotated(rot, state.logp, xs)
    quad = float(ws @ var_nodes)
    if s_grid is None:
        s_grid = np.linspace(0.0, 1.0, 11)
    s_grid = np.asarray(s_grid, dtype=float)
    var_grid = _s_variance_rotated(rot, state.logp, s_grid)
    var0 = float(_s_variance_rotated(rot, state.logp, np.array([0.0]))[0])
    comm = 0.0
    for a, e, lp in zip(rot, state.energies, state.logp):
        de = (e[None, :] - e[:, None]) / T
        comm += 0.5 * float(np.sum(np.exp(lp)[:, None] * np.abs(a) ** 2 * de ** 2))

    def central(h):
        return T * (_response_mean(H.blocks, A_blocks, T, h)
                    - _response_mean(H.blocks, A_blocks, T, -h)) / (2 * h)

    fd = central(fd_step)
    if richardson:
        fd = (4.0 * central(fd_step / 2) - fd) / 3.0
    allv = np.concatenate([var_grid, var_nodes])
    slack = min(float(allv.min()), float((var0 - allv).min()), float((allv + comm - var0).min()))
    return VarianceReport(observable, float(T), s_grid.tolist(), var_grid.tolist(), var0, quad,
                          float(fd), comm, fd_step, nodes, slack,
                          meta={"richardson": richardson})


def feynman_hellmann_defect(state_lambda, state_free, alpha: float,
                            T: float | None = None, energies=None) -> float:
    """``Tr| h^a (G1_lambda - G1_free) h^a | / T`` for one-body matrices.

    Arguments may be states (then ``T`` and the one-body energies ``h`` come from
    the first state) or one-body matrices with ``T`` and ``energies`` given.
    """
    from .fock import ReducedDensityMatrix, reduced_density_matrix
    if not 0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 1/2]")

    def one_body(x):
        if isinstance(x, ReducedDensityMatrix):
            return x.matrix
        if isinstance(x, np.ndarray):
            return x
        return reduced_density_matrix(x, 1).matrix

    if T is None:
        T = state_lambda.T
    if energies is None:
        energies = state_lambda.fock.mode_energies
    ha = np.asarray(energies, dtype=float) ** alpha
    diff = (one_body(state_lambda) - one_body(state_free)) / T
    return schatten_norm(ha[:, None] * diff * ha[None, :], 1)


def as_state(rho, fock) -> FockState:
    return FockState(fock, np.asarray(rho))
