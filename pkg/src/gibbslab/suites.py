"""Seeded instance generators and inequality suites with pass/fail records."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .classical import (classical_pinsker, classical_variational_value, make_ensemble, MASSIVE)
from .entropy import free_energy_value, linear_response_check, pinsker_check
from .fock import (BlockedOperator, FockBasis, FockState, build_renormalized_hamiltonian,
                   enumerate_fock_basis, free_hamiltonian, gibbs_state)
from .semiclassics import berezin_lieb_check, coherent_vector, definetti_gap
from .spectral import InteractionSpec, build_mode_basis

SLACK_TOL = {"pinsker": -1e-12, "classical-pinsker": -1e-12, "berezin-lieb": -1e-4,
             "definetti": -1e-8, "variational": -1e-10, "classical-variational": -1e-10,
             "variance-chain": -1e-10}


@dataclass
class SuiteRecord:
    suite: str
    instance: int
    slack: float
    passed: bool
    detail: str = ""


def write_records(records, path, header_extra: dict | None = None):
    with open(path, "w", newline="") as fh:
        if header_extra:
            fh.write("# " + json.dumps(header_extra, sort_keys=True) + "\n")
        wr = csv.writer(fh)
        wr.writerow(["suite", "instance", "slack", "passed", "detail"])
        for r in records:
            wr.writerow([r.suite, r.instance, repr(float(r.slack)), int(r.passed), r.detail])


def _record(suite, i, slack, detail=""):
    return SuiteRecord(suite, i, float(slack), bool(slack >= SLACK_TOL[suite]), detail)


# ---------------------------------------------------------------------------
# instances


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None,
                   complex_: bool = True) -> np.ndarray:
    rank = dim if rank is None else rank
    X = rng.standard_normal((dim, rank))
    if complex_:
        X = X + 1j * rng.standard_normal((dim, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def random_two_mode_instance(seed: int, N_max: int = 8):
    """Two modes with on-site repulsion, hopping and pair exchange; blocks by ``N`` only.

    Returns ``(H, A, T)`` with ``A`` the number operator of the second mode, which
    does not commute with ``H``.
    """
    rng = np.random.default_rng(seed)
    fock = FockBasis(2, N_max)
    e = rng.uniform(0.5, 3.0, size=2)
    g = rng.uniform(0.05, 0.5)
    t = rng.uniform(0.1, 1.0)
    u = rng.uniform(0.0, 0.3)
    terms = [((0,), (0,), e[0]), ((1,), (1,), e[1]),
             ((0, 0), (0, 0), 0.5 * g), ((1, 1), (1, 1), 0.5 * g),
             ((0,), (1,), t), ((1,), (0,), t),
             ((0, 0), (1, 1), u), ((1, 1), (0, 0), u)]
    H = BlockedOperator.from_sparse(fock, fock.operator(terms))
    A = BlockedOperator.from_sparse(fock, fock.operator([((1,), (1,), 1.0)]))
    T = float(rng.uniform(0.5, 3.0))
    return H, A, T


def single_mode_thermal(T: float, N_max: int = 60, energy: float = 1.0) -> FockState:
    fock = FockBasis(1, N_max)
    p = np.exp(-energy * np.arange(N_max + 1) / T)
    return FockState(fock, np.diag(p / p.sum()))


# ---------------------------------------------------------------------------
# suites


def variance_suite(n: int = 50, seed: int = 0, fd_step: float = 1e-4, nodes: int = 32):
    """Linear-response identity and inequality chain on random two-mode instances."""
    records, reports = [], []
    for i in range(n):
        H, A, T = random_two_mode_instance(seed + i)
        rep = linear_response_check(H, A, T, fd_step=fd_step, nodes=nodes, observable="N_1")
        reports.append(rep)
        records.append(_record("variance-chain", i, rep.chain_slack,
                               f"rel_gap={rep.relative_gap:.3e}"))
    return records, reports


def pinsker_suite(n: int = 20, seed: int = 0, dim: int = 10):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        a, b = random_density(rng, dim), random_density(rng, dim)
        H, half = pinsker_check(a, b)
        records.append(_record("pinsker", i, H - half))
    return records


def berezin_lieb_suite(n: int = 20, seed: int = 0, N_max: int = 8, epsilon: float = 1.0):
    """Random full-rank single-mode pairs; the chain ``H_q >= H_loc >= H_cl``."""
    rng = np.random.default_rng(seed)
    fock = FockBasis(1, N_max)
    records = []
    for i in range(n):
        a = FockState(fock, random_density(rng, fock.dim))
        b = FockState(fock, random_density(rng, fock.dim))
        hq, hl, hc = berezin_lieb_check(a, b, [0], epsilon)
        slack = min(hq - hl, hl - hc)
        records.append(_record("berezin-lieb", i, slack, f"H=({hq:.6g},{hl:.6g},{hc:.6g})"))
    return records


def definetti_suite(seed: int = 0):
    """Quantitative de Finetti bound on vacuum, thermal, coherent and random states."""
    rng = np.random.default_rng(seed)
    records = []
    cases = []
    f1 = FockBasis(1, 30)
    vac = np.zeros((f1.dim, f1.dim))
    vac[0, 0] = 1.0
    cases.append(("vacuum", FockState(f1, vac), [0], 0.5))
    cases.append(("thermal", single_mode_thermal(1.5, 60), [0], 0.25))
    cv = coherent_vector([1.2], 0.5, f1)
    amp = cv.amplitudes / cv.norm
    cases.append(("coherent", FockState(f1, np.outer(amp, amp.conj())), [0], 0.5))
    f2 = FockBasis(2, 6)
    for j in range(3):
        cases.append((f"random2-{j}", FockState(f2, random_density(rng, f2.dim)), [0, 1], 0.5))
    basis = build_mode_basis(1, 1.0, 50)
    fk = enumerate_fock_basis(3, 10, basis)
    w = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5}, d=1)
    st = gibbs_state(build_renormalized_hamiltonian(fk, basis, w, 2.0), 2.0)
    cases.append(("gibbs-P02", st, [0, 2], 0.5))
    i = 0
    for name, state, P, eps in cases:
        for k in (1, 2):
            gap = definetti_gap(state, P, eps, k)
            records.append(_record("definetti", i, gap.slack, f"{name} k={k} lhs={gap.lhs:.6g} rhs={gap.rhs:.6g}"))
            i += 1
    return records


def quantum_variational_suite(n: int = 20, seed: int = 0, T: float = 2.0):
    """Plain and relative free-energy functionals over perturbed trials of a small model."""
    rng = np.random.default_rng(seed)
    basis = build_mode_basis(1, 1.0, 50)
    fock = enumerate_fock_basis(3, 6, basis)
    w = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5}, d=1)
    H = build_renormalized_hamiltonian(fock, basis, w, T)
    st = gibbs_state(H, T)
    st0 = gibbs_state(free_hamiltonian(fock, basis), T)
    plain_min = -st.logZ
    rel_min = -(st.logZ - st0.logZ)
    records = []
    rho = st.to_dense()
    for i in range(n):
        t = rng.uniform(1e-3, 0.05)
        X = rng.standard_normal((fock.dim, fock.dim)) + 1j * rng.standard_normal((fock.dim, fock.dim))
        U = scipy.linalg.expm(1j * t * (X + X.conj().T) / 2)
        mix = rng.uniform(0.0, 0.05)
        trial = (1 - mix) * U @ rho @ U.conj().T + mix * random_density(rng, fock.dim)
        trial = FockState(fock, 0.5 * (trial + trial.conj().T))
        fp = free_energy_value(trial, H, T)
        fr = free_energy_value(trial, H, T, reference_state=st0)
        records.append(_record("variational", i, min(fp - plain_min, fr - rel_min),
                               f"plain={fp:.10g} relative={fr:.10g}"))
    return records


def classical_suite(n: int = 20, seed: int = 0, samples: int = 20000):
    """Classical variational principle over ``exp(-beta D)`` trials and classical Pinsker."""
    basis = build_mode_basis(1, 1.0, 50)
    w = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5}, d=1)
    ens = make_ensemble(basis, w, samples, seed, MASSIVE, renormalized=True)
    vmin = classical_variational_value(1.0, ens)
    records = []
    for i, beta in enumerate(np.linspace(0.0, 2.0, n + 1)):
        if np.isclose(beta, 1.0):
            continue
        records.append(_record("classical-variational", i,
                               classical_variational_value(beta, ens) - vmin, f"beta={beta:.3f}"))
    H, half = classical_pinsker(ens)
    records.append(_record("classical-pinsker", 0, H - half, f"H_cl={H:.6g}"))
    return records


def entropy_suite(seed: int = 0, trials: int = 20):
    recs = []
    recs += pinsker_suite(trials, seed)
    recs += berezin_lieb_suite(trials, seed)
    recs += definetti_suite(seed)
    recs += quantum_variational_suite(trials, seed)
    recs += classical_suite(trials, seed)
    return recs
