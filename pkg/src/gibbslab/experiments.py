"""Convergence drivers comparing rescaled quantum density matrices with classical moments.

Every driver returns a report with one row per temperature.  Classical error bars
come from 8-way batch means; a trend counts as decreasing only when each step
exceeds three combined error bars.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .classical import (MASSIVE, N_BATCHES, classical_moment, classical_moment_batches,
                        make_ensemble, sample_free_fields, thermal)
from .config import RunConfig
from .entropy import feynman_hellmann_defect, schatten_norm
from .fock import (MAX_BLOCK_DIM, BlockTooLargeError, BudgetExceeded, build_hamiltonian,
                   build_renormalized_hamiltonian, choose_n_max, enumerate_fock_basis,
                   fock_dimension, free_hamiltonian, free_one_body, gibbs_state,
                   memory_budget_bytes, pair_list, position_kernel, quartic_terms, reduced_density_matrix,
                   symmetric_tensor_product)
from .spectral import InteractionSpec, ModeBasis, build_mode_basis

SIGMA = 3.0


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    """Rows of scalar results keyed by temperature, with provenance."""

    kind: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> list:
        return [r["T"] for r in self.rows]

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def columns(self) -> list:
        keys = []
        for r in self.rows:
            keys += [k for k in r if k not in keys]
        return keys

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.meta, sort_keys=True, default=str) + "\n")
            cols = self.columns()
            wr = csv.writer(fh)
            wr.writerow(cols)
            for r in self.rows:
                wr.writerow([_fmt(r.get(c)) for c in cols])

    def to_json(self, path=None) -> str:
        text = json.dumps({"kind": self.kind, "meta": self.meta, "rows": self.rows},
                          sort_keys=True, default=_jsonable, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def plot(self, path, columns, logy: bool = True):
        """Log-log line plot of the given columns against ``T``; needs matplotlib."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for c in columns:
            err = self.column(c + "_err") if c + "_err" in self.columns() else None
            ax.errorbar(self.T, self.column(c), yerr=err, marker="o", label=c)
        ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("T")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


@dataclass
class TrendCheck:
    column: str
    passed: bool
    detail: str


def decreasing_trend(values, errors=None, sigma: float = SIGMA, strict: bool = True) -> tuple[bool, str]:
    """Each step must drop by more than ``sigma`` combined error bars (or just drop when ``errors`` is None)."""
    v = np.asarray(values, dtype=float)
    e = np.zeros_like(v) if errors is None else np.asarray(errors, dtype=float)
    bad = []
    for i in range(len(v) - 1):
        margin = sigma * math.hypot(e[i], e[i + 1])
        drop = v[i] - v[i + 1]
        ok = drop > margin if strict else drop >= -margin
        if not ok:
            bad.append(f"step {i}->{i + 1}: {v[i]:.6g} -> {v[i + 1]:.6g} (margin {margin:.3g})")
    return not bad, "; ".join(bad) if bad else "ok"


class ConvergenceReport(Report):
    def trend(self, col: str, halving: bool = False) -> TrendCheck:
        err = self.column(col + "_err") if col + "_err" in self.columns() else None
        ok, detail = decreasing_trend(self.column(col), err)
        if halving and len(self.rows) > 1:
            v = self.column(col)
            if not v[-1] < v[0] / 2:
                ok = False
                detail += f"; last {v[-1]:.6g} is not below half of first {v[0]:.6g}"
        return TrendCheck(col, ok, detail)


# ---------------------------------------------------------------------------
# shared pieces


def basis_from_config(cfg: RunConfig) -> ModeBasis:
    return build_mode_basis(cfg.d, cfg.kappa, cfg.K)


def _covariance(cfg: RunConfig, T: float):
    return thermal(T) if cfg.covariance == "thermal" else MASSIVE


def estimate_build_bytes(M: int, N_max: int, n_terms: int) -> int:
    """Rough peak memory of enumerating the basis and assembling the quartic part."""
    D = fock_dimension(M, N_max)
    return D * (8 * M + 48) + D * max(n_terms, 1) * 24


def quantum_pair(basis: ModeBasis, w: InteractionSpec, T: float, cfg: RunConfig,
                 renormalized: bool | None = None, check_truncation: bool = True):
    """Interacting and free thermal states at ``T`` on an adaptively truncated Fock space.

    Returns ``(state_lambda, state_0, info)`` where ``info`` records ``N_max``, the free
    tail bounds and the truncation-consistency verdict.
    """
    renormalized = cfg.renormalized if renormalized is None else renormalized
    N_max = cfg.n_max or choose_n_max(basis.eigenvalues, T, cfg.tail_target)
    n_terms = len(quartic_terms(basis, w, 1.0))
    need = estimate_build_bytes(basis.size, N_max, n_terms)
    if need > memory_budget_bytes():
        raise BudgetExceeded(f"T={T:g} needs N_max={N_max} (~{need / 2**20:.0f} MB estimated), "
                             "over the memory budget; lower the largest temperature")

    def build(n):
        fock = enumerate_fock_basis(basis.size, n, basis)
        if fock.block_dims.max() > MAX_BLOCK_DIM:
            raise BlockTooLargeError(f"T={T:g}: largest block {fock.block_dims.max()} exceeds "
                                     f"{MAX_BLOCK_DIM}; lower the largest temperature")
        if renormalized:
            H = build_renormalized_hamiltonian(fock, basis, w, T)
        else:
            H = build_hamiltonian(fock, basis, w, cfg.nu, 1.0 / T)
        return fock, gibbs_state(H, T)

    fock, st = build(N_max)
    st0 = gibbs_state(free_hamiltonian(fock, basis), T)
    info = {"N_max": int(N_max), "dim": int(fock.dim), "max_block": int(fock.block_dims.max())}
    info.update(st.tail)
    if check_truncation:
        info.update(truncation_consistency(st, lambda n: build(n)[1], basis.size))
    return st, st0, info


def truncation_consistency(state, rebuild, M: int) -> dict:
    """Compare ``log Z`` and the one-body matrix against a larger cutoff.

    The cutoff grows by 10 for ``M <= 3`` and by 2 otherwise (cost).  Passing means
    both changes stay within the free-state tail bounds at the original cutoff.
    """
    delta = 10 if M <= 3 else 2
    bigger = rebuild(state.fock.N_max + delta)
    dlogz = abs(bigger.logZ - state.logZ)
    drdm = float(np.max(np.abs(reduced_density_matrix(bigger, 1).matrix
                               - reduced_density_matrix(state, 1).matrix)))
    tb = state.tail
    ok = dlogz <= tb["logz_bound"] + 1e-12 and drdm <= tb["rdm_bound"] + 1e-12
    return {"trunc_delta": delta, "trunc_dlogz": dlogz, "trunc_drdm": drdm, "truncation_ok": bool(ok)}


def _distance_with_error(target, est, batches, p=1.0):
    d = schatten_norm(target - est, p)
    per = [schatten_norm(target - b, p) for b in batches]
    return d, float(np.std(per, ddof=1) / math.sqrt(len(per)))


def _rescaled(state, T):
    G1 = reduced_density_matrix(state, 1).matrix / T
    G2 = 2.0 * reduced_density_matrix(state, 2).matrix / T ** 2
    return G1, G2


def kernel_ratio(st, st0, basis: ModeBasis, n_points: int = 8) -> float:
    """``max_x G_lambda(x; x) / G_0(x; x)`` on a uniform grid (a diagnostic, no bound asserted)."""
    axes = [np.arange(n_points) / n_points] * basis.d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, basis.d)
    num = np.real(np.diag(position_kernel(reduced_density_matrix(st, 1), basis, pts)))
    den = np.real(np.diag(position_kernel(reduced_density_matrix(st0, 1), basis, pts)))
    return float(np.max(num / den))


def _provenance(cfg: RunConfig, **extra) -> dict:
    meta = cfg.provenance()
    meta.update({"seed": cfg.seed, "samples": cfg.samples, "covariance": cfg.covariance,
                 "batches": N_BATCHES})
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# drivers


def run_free_correspondence(basis: ModeBasis, T_grid, samples: int, seed: int = 1,
                            covariance: str = "massive", cfg: RunConfig | None = None) -> ConvergenceReport:
    """Analytic ``k! T^-k G0^(k)`` against moments of free Gaussian samples (k = 1, 2)."""
    rows = []
    for T in T_grid:
        cov = thermal(T) if covariance == "thermal" else MASSIVE
        alphas = sample_free_fields(basis, cov, samples, seed)
        G1 = free_one_body(basis, T) / T
        # Wick: the free two-body matrix is the symmetrized square of the one-body one
        G2 = 2.0 * symmetric_tensor_product(G1, G1)
        ens = _FreeSamples(basis, alphas)
        m1, m2 = classical_moment(ens, 1).matrix, classical_moment(ens, 2).matrix
        b1 = classical_moment_batches(ens, 1)
        b2 = classical_moment_batches(ens, 2)
        d1, e1 = _distance_with_error(G1, m1, b1)
        d2, e2 = _distance_with_error(G2, m2, b2)
        rows.append({"T": float(T), "d1": d1, "d1_err": e1, "d2": d2, "d2_err": e2,
                     "inconclusive": bool(d1 <= SIGMA * e1)})
    meta = {"version": __version__, "seed": seed, "samples": samples, "covariance": covariance,
            "M": basis.size}
    if cfg is not None:
        meta.update(cfg.provenance())
    return ConvergenceReport("free-correspondence", rows, meta)


class _FreeSamples:
    """Minimal ensemble view with uniform weights."""

    def __init__(self, basis, alphas):
        self.basis = basis
        self.alphas = alphas
        self.energies = np.zeros(len(alphas))

    @property
    def n(self):
        return len(self.alphas)

    @property
    def logweights(self):
        return -self.energies

    def normalized_weights(self):
        return np.full(self.n, 1.0 / self.n)

    def batches(self, n_batches=N_BATCHES):
        edges = np.linspace(0, self.n, n_batches + 1).astype(int)
        return [slice(edges[i], edges[i + 1]) for i in range(n_batches)]


def run_1d_convergence(cfg: RunConfig) -> ConvergenceReport:
    """``d_k(T) = Tr|k! T^-k G_lambda^(k) - int |u^k><u^k| dmu|`` for k = 1, 2 with ``lambda = 1/T``."""
    if cfg.d != 1:
        raise ValueError("run_1d_convergence needs d = 1")
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    rows, skipped = [], []
    for T in sorted(cfg.T_grid):
        try:
            st, st0, info = quantum_pair(basis, w, T, cfg)
        except (BudgetExceeded, BlockTooLargeError) as exc:
            skipped.append({"T": T, "reason": str(exc)})
            continue
        G1, G2 = _rescaled(st, T)
        ens = make_ensemble(basis, w, cfg.samples, cfg.seed, _covariance(cfg, T),
                            renormalized=cfg.renormalized)
        d1, e1 = _distance_with_error(G1, classical_moment(ens, 1).matrix,
                                      classical_moment_batches(ens, 1))
        d2, e2 = _distance_with_error(G2, classical_moment(ens, 2).matrix,
                                      classical_moment_batches(ens, 2))
        rows.append({"T": float(T), "d1": d1, "d1_err": e1, "d2": d2, "d2_err": e2,
                     "kernel_ratio": kernel_ratio(st, st0, basis), **info})
    return ConvergenceReport("converge-1d", rows, _provenance(cfg, skipped=skipped, M=basis.size))


def run_2d_renormalized(cfg: RunConfig) -> ConvergenceReport:
    """Difference observable and two-body moment distances for the Wick-renormalized 2D model.

    ``diff_p = || T^-1 (G_lambda^(1) - G_0^(1)) - int |u><u| (dmu - dmu0) ||_p`` with the
    free one-body matrix taken untruncated and both classical integrals estimated on
    the same free samples.
    """
    if cfg.d != 2:
        raise ValueError("run_2d_renormalized needs d = 2")
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    rows, skipped = [], []
    for T in sorted(cfg.T_grid):
        try:
            st, st0, info = quantum_pair(basis, w, T, cfg, renormalized=True)
        except (BudgetExceeded, BlockTooLargeError) as exc:
            skipped.append({"T": T, "reason": str(exc)})
            continue
        G1, G2 = _rescaled(st, T)
        G0 = free_one_body(basis, T) / T
        ens = make_ensemble(basis, w, cfg.samples, cfg.seed, _covariance(cfg, T), renormalized=True)
        m1 = classical_moment(ens, 1).matrix - classical_moment(ens, 1, weighted=False).matrix
        b1 = classical_moment_batches(ens, 1) - classical_moment_batches(ens, 1, weighted=False)
        row = {"T": float(T)}
        for p in (1, 2):
            row[f"diff_s{p}"], row[f"diff_s{p}_err"] = _distance_with_error(G1 - G0, m1, b1, p)
        m2, b2 = classical_moment(ens, 2).matrix, classical_moment_batches(ens, 2)
        for p in (1, 2):
            row[f"d2_s{p}"], row[f"d2_s{p}_err"] = _distance_with_error(G2, m2, b2, p)
        row["kernel_ratio"] = kernel_ratio(st, st0, basis)
        row.update(info)
        rows.append(row)
    meta = _provenance(cfg, skipped=skipped, M=basis.size)
    if skipped:
        meta["suggested_T_max"] = max([r["T"] for r in rows], default=None)
    return ConvergenceReport("converge-2d", rows, meta)


def high_modes(basis: ModeBasis, k_split: float) -> list:
    return [int(j) for j in np.flatnonzero(basis.eigenvalues > k_split)]


def run_correlation_diagnostics(cfg: RunConfig, Q=None) -> ConvergenceReport:
    """Number fluctuations of the high modes ``Q`` measured against the free state.

    Columns: ``var_Q = <(N_Q - <N_Q>_0)^2>_lambda / T^2`` and
    ``shift_Q = |<N_Q>_lambda - <N_Q>_0| / T``; the same for ``Q`` = all modes, and the
    weighted one-body defect with exponent 1/2 for reference.
    """
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    Q = high_modes(basis, cfg.k_split) if Q is None else list(Q)
    allm = list(range(basis.size))
    rows, skipped = [], []
    for T in sorted(cfg.T_grid):
        try:
            st, st0, info = quantum_pair(basis, w, T, cfg)
        except (BudgetExceeded, BlockTooLargeError) as exc:
            skipped.append({"T": T, "reason": str(exc)})
            continue
        p, p0 = st.diagonal_probabilities(), st0.diagonal_probabilities()
        row = {"T": float(T)}
        for name, modes in (("Q", Q), ("all", allm)):
            n = st.fock.number_counts(modes)
            m0 = float(p0 @ n)
            row[f"var_{name}"] = float(p @ (n - m0) ** 2) / T ** 2
            row[f"shift_{name}"] = abs(float(p @ n) - m0) / T
        row["fh_defect"] = feynman_hellmann_defect(st, st0, 0.5)
        row.update(info)
        rows.append(row)
    return ConvergenceReport("correlations", rows, _provenance(cfg, Q=Q, skipped=skipped))


def _pair_restriction(G2, modes, M):
    idx = [a for a, (i, j) in enumerate(pair_list(M)) if i in modes and j in modes]
    out = np.zeros_like(G2)
    out[np.ix_(idx, idx)] = G2[np.ix_(idx, idx)]
    return out


def _restrict(G, modes):
    out = np.zeros_like(G)
    out[np.ix_(modes, modes)] = G[np.ix_(modes, modes)]
    return out


def two_body_terms(st, st0, P, Q, T):
    """Left side ``T^-2 (G2_lambda - G2_0)`` and the six right-hand terms, pair basis.

    Tensor products are symmetrized so that for a state without P-Q correlations
    the decomposition is exact.
    """
    M = st.fock.M
    G1, G10 = reduced_density_matrix(st, 1).matrix, reduced_density_matrix(st0, 1).matrix
    G2, G20 = reduced_density_matrix(st, 2).matrix, reduced_density_matrix(st0, 2).matrix
    D1 = G1 - G10
    D2 = G2 - G20
    sym = symmetric_tensor_product
    PG, QD, PD, QG0 = _restrict(G1, P), _restrict(D1, Q), _restrict(D1, P), _restrict(G10, Q)
    terms = [_pair_restriction(D2, P, M), _pair_restriction(D2, Q, M),
             sym(PG, QD), sym(QD, PG), sym(PD, QG0), sym(QG0, PD)]
    return D2 / T ** 2, [t / T ** 2 for t in terms]


def two_body_decomposition_residual(cfg: RunConfig) -> ConvergenceReport:
    """Trace-norm residual of the P/Q decomposition of the two-body difference."""
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    Q = high_modes(basis, cfg.k_split)
    P = [j for j in range(basis.size) if j not in Q]
    rows, skipped = [], []
    for T in sorted(cfg.T_grid):
        try:
            st, st0, info = quantum_pair(basis, w, T, cfg)
        except (BudgetExceeded, BlockTooLargeError) as exc:
            skipped.append({"T": T, "reason": str(exc)})
            continue
        lhs, terms = two_body_terms(st, st0, P, Q, T)
        res = schatten_norm(lhs - sum(terms), 1)
        lhs1 = schatten_norm(lhs, 1)
        rows.append({"T": float(T), "residual": res, "lhs_s1": lhs1,
                     "relative_residual": res / lhs1 if lhs1 > 0 else 0.0,
                     "term5_s2": schatten_norm(terms[4], 2), "term6_s2": schatten_norm(terms[5], 2),
                     **info})
    return ConvergenceReport("decomposition", rows, _provenance(cfg, P=P, Q=Q, skipped=skipped))
