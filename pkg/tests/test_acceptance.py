"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from gibbslab.classical import MASSIVE, estimate_partition, make_ensemble, sample_free_fields
from gibbslab.config import RunConfig
from gibbslab.entropy import linear_response_check, trace_distance
from gibbslab.experiments import (basis_from_config, run_1d_convergence, run_2d_renormalized,
                                  run_correlation_diagnostics)
from gibbslab.fock import (BlockedOperator, FockBasis, build_hamiltonian,
                           build_renormalized_hamiltonian, enumerate_fock_basis,
                           free_hamiltonian, gibbs_state, reduced_density_matrix,
                           symmetric_tensor_product)
from gibbslab.spectral import InteractionSpec, build_mode_basis, compute_N0, renormalized_nu
from gibbslab.suites import entropy_suite, variance_suite

W1D = InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5})

# collected here and echoed in the terminal summary (see conftest.py)
LINES = {}


def announce(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}"
    LINES[number] = line
    print(line, flush=True)
    assert passed, line


def test_01_free_gaussian_moments():
    t0 = time.perf_counter()
    basis = build_mode_basis(1, 1.0, 50.0)
    a = sample_free_fields(basis, MASSIVE, 200000, 1)
    emp = a.T @ a.conj() / len(a)
    lam = basis.eigenvalues
    err = float(np.max(lam[None, :] * np.abs(emp - np.diag(1 / lam))))
    dt = time.perf_counter() - t0
    announce(1, "free Gaussian moments", err <= 0.02 and dt < 10,
             f"max error {err:.4g} (<= 0.02), {dt:.2f}s (< 10s)")


def test_02_free_quantum_formula():
    f = FockBasis(1, 40)
    H = BlockedOperator.from_sparse(f, f.operator([((0,), (0,), 1.0)]))
    g = reduced_density_matrix(gibbs_state(H, 1.0), 1).matrix[0, 0].real
    # 0.581977 is 1/(e - 1) to six figures; the 1e-9 tolerance applies to the exact value
    e1 = abs(g - 1 / math.expm1(1.0))
    six = round(g, 6) == 0.581977
    f2 = FockBasis(2, 60)
    H2 = BlockedOperator.from_sparse(f2, f2.operator([((0,), (0,), 1.0), ((1,), (1,), 1.7)]))
    st = gibbs_state(H2, 2.0)
    G1 = reduced_density_matrix(st, 1).matrix
    e2 = float(np.max(np.abs(reduced_density_matrix(st, 2).matrix - symmetric_tensor_product(G1, G1))))
    announce(2, "free quantum formula", six and e1 <= 1e-9 and e2 <= 1e-8,
             f"G1 = {g:.10f}, |G1 - 1/(e-1)| = {e1:.3g} (<= 1e-9), "
             f"two-body deviation {e2:.3g} (<= 1e-8)")


def test_03_renormalization_equivalence():
    T = 4.0
    basis = build_mode_basis(1, 1.0, 50.0)
    f = enumerate_fock_basis(3, 20, basis)
    Hw = build_renormalized_hamiltonian(f, basis, W1D, T)
    nu = renormalized_nu(basis, T, W1D) - 0.5 * W1D.w_at_origin / T
    Hn = build_hamiltonian(f, basis, W1D, nu, 1 / T)
    td = trace_distance(gibbs_state(Hw, T), gibbs_state(Hn, T))
    shift = Hw.meta["energy_shift"]
    dev = float(np.max(np.abs(Hw.spectrum() - Hn.spectrum() - shift)))
    expected = 0.5 * compute_N0(basis, T) ** 2 * W1D.zero_mode / T
    ok = td <= 1e-10 and dev <= 1e-9 and math.isclose(shift, expected, rel_tol=1e-12)
    announce(3, "renormalization equivalence", ok,
             f"trace distance {td:.3g} (<= 1e-10), spectral offset deviation {dev:.3g} (<= 1e-9)")


def test_04_wick_ordered_interaction():
    basis = build_mode_basis(1, 1.0, 50.0)
    ens = make_ensemble(basis, W1D, 100000, 1, MASSIVE, renormalized=True)
    mean = float(ens.energies.mean())
    se = float(ens.energies.std(ddof=1) / math.sqrt(ens.n))
    announce(4, "Wick-ordered interaction", abs(mean - 0.52531) <= 3 * se,
             f"MC {mean:.5f} +- {se:.2g} vs 0.52531 (3 stderr)")


def test_05_partition_oracle():
    basis = build_mode_basis(1, 1.0, 1.5)
    ens = make_ensemble(basis, InteractionSpec({0: 1.0}), 100000, 1, MASSIVE, renormalized=False)
    est = estimate_partition(ens)
    announce(5, "partition oracle", abs(est.z - 0.65569) <= 3 * est.stderr,
             f"z = {est.z:.5f} +- {est.stderr:.2g} vs 0.65569 (3 stderr)")


def test_06_s_variance_linear_response():
    records, reports = variance_suite(50, seed=0)
    gap = max(r.relative_gap for r in reports)
    slack = min(r.slack for r in records)
    basis = build_mode_basis(1, 1.0, 50.0)
    f = enumerate_fock_basis(3, 12, basis)
    A = BlockedOperator.from_sparse(f, f.operator([((1,), (1,), 1.0), ((2,), (2,), 1.0)]))
    rep = linear_response_check(free_hamiltonian(f, basis), A, 8.0)
    comm = abs(rep.quadrature - rep.var0)
    ok = gap <= 1e-6 and slack >= -1e-10 and comm <= 1e-10
    announce(6, "s-variance / linear response", ok,
             f"max relative gap {gap:.3g} (<= 1e-6), min chain slack {slack:.3g} (>= -1e-10), "
             f"commuting case {comm:.3g} (<= 1e-10)")


def test_07_inequality_suites():
    t0 = time.perf_counter()
    recs = entropy_suite(seed=0, trials=20)
    dt = time.perf_counter() - t0
    bad = [r for r in recs if not r.passed]
    suites = sorted({r.suite for r in recs})
    counts = {s: sum(r.suite == s for r in recs) for s in suites}
    ok = not bad and dt < 300 and counts["variational"] == 20 and counts["classical-variational"] == 20
    announce(7, "inequality suites", ok,
             f"{len(bad)} violations in {len(recs)} records over {len(suites)} suites, {dt:.1f}s (< 300s)")


def test_08_1d_convergence():
    t0 = time.perf_counter()
    cfg = RunConfig()
    rep = run_1d_convergence(cfg)
    dt = time.perf_counter() - t0
    d1 = rep.column("d1")
    t1, t2 = rep.trend("d1", halving=True), rep.trend("d2")
    ok = (rep.T == [2.0, 4.0, 8.0, 16.0] and basis_from_config(cfg).size == 3
          and all(r["truncation_ok"] for r in rep.rows) and t1.passed and t2.passed and dt < 900)
    announce(8, "1D convergence", ok,
             "d1 = " + " ".join(f"{x:.4g}" for x in d1)
             + f"; d1 trend {t1.detail}; d2 trend {t2.detail}; {dt:.1f}s (< 900s)")


def test_09_2d_renormalized_convergence():
    t0 = time.perf_counter()
    cfg = RunConfig.from_dict({"d": 2})
    rep = run_2d_renormalized(cfg)
    dt = time.perf_counter() - t0
    tr = rep.trend("diff_s1")
    ok = (basis_from_config(cfg).size == 5 and rep.T == [1.0, 2.0, 4.0]
          and all(r["tail_weight"] < 1e-3 and r["truncation_ok"] for r in rep.rows)
          and tr.passed and dt <= 1800)
    announce(9, "2D renormalized convergence", ok,
             "difference observable = " + " ".join(f"{x:.4g}" for x in rep.column("diff_s1"))
             + f"; trend {tr.detail}; {dt:.1f}s (<= 1800s)")


def test_10_correlation_diagnostics():
    rep = run_correlation_diagnostics(RunConfig())
    cols = {c: rep.column(c) for c in ("var_Q", "shift_Q")}
    ok = len(rep.rows) >= 2 and all(np.all(np.diff(v) <= 0) for v in cols.values())
    announce(10, "correlation diagnostics", ok,
             "; ".join(f"{c} = " + " ".join(f"{x:.3g}" for x in v) for c, v in cols.items())
             + " (both nonincreasing required)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
