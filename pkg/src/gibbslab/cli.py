"""Command-line entry point: ``gibbslab SUBCOMMAND [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 when every check of the subcommand passes, 2 when a check fails,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .classical import (MASSIVE, classical_moment, ensemble_summary, estimate_partition,
                        make_ensemble, sample_free_fields, thermal, wick_mean_interaction)
from .config import ConfigError, RunConfig, parse_config
from .experiments import (basis_from_config, quantum_pair, run_1d_convergence,
                          run_2d_renormalized, run_correlation_diagnostics,
                          run_free_correspondence, two_body_decomposition_residual)
from .fock import reduced_density_matrix
from .semiclassics import definetti_gap
from .suites import entropy_suite, variance_suite, write_records

log = logging.getLogger("gibbslab")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
SUBCOMMANDS = ("free-check", "classical", "quantum", "definetti", "entropy-suite",
               "variance-suite", "converge-1d", "converge-2d", "correlations", "decomposition")


class Outcome:
    """Named checks of one run plus the files written."""

    def __init__(self, cfg: RunConfig, out_dir: str, plots: bool):
        self.cfg = cfg
        self.out_dir = out_dir
        self.plots = plots
        self.checks = []

    def check(self, name: str, passed: bool, detail: str = ""):
        self.checks.append((name, bool(passed), detail))

    def path(self, name):
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)

    def header(self) -> dict:
        return self.cfg.provenance()

    @property
    def passed(self) -> bool:
        return all(p for _, p, _ in self.checks)


def _save_report(out: Outcome, rep, stem, plot_cols=()):
    rep.meta.update(out.header())
    rep.to_csv(out.path(stem + ".csv"))
    rep.to_json(out.path(stem + ".json"))
    if out.plots and plot_cols and rep.rows:
        try:
            rep.plot(out.path(stem + ".svg"), plot_cols)
        except ImportError:
            log.info("matplotlib not installed; skipping %s.svg", stem)


def _write_json(out: Outcome, name, payload):
    payload = dict(payload)
    payload.update(out.header())
    with open(out.path(name), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, default=float)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_free_check(out: Outcome):
    cfg = out.cfg
    basis = basis_from_config(cfg)
    alphas = sample_free_fields(basis, MASSIVE, cfg.samples, cfg.seed)
    emp = (alphas.T @ alphas.conj()) / len(alphas)
    lam = basis.eigenvalues
    err = float(np.max(lam[None, :] * np.abs(emp - np.diag(1.0 / lam))))
    out.check("free Gaussian moments", err <= 0.02, f"max lambda_j |E - delta/lambda| = {err:.4g}")
    rep = run_free_correspondence(basis, cfg.T_grid, cfg.samples, cfg.seed, "massive", cfg)
    tr = rep.trend("d1")
    out.check("free correspondence d1 decreasing", tr.passed, tr.detail)
    _write_json(out, "free_check.json", {"moment_error": err, "M": basis.size})
    _save_report(out, rep, "free_correspondence", ["d1", "d2"])


def cmd_classical(out: Outcome):
    cfg = out.cfg
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    T = cfg.T_grid[0]
    cov = thermal(T) if cfg.covariance == "thermal" else MASSIVE
    ens = make_ensemble(basis, w, cfg.samples, cfg.seed, cov, renormalized=cfg.renormalized)
    summary = ensemble_summary(ens)
    est = estimate_partition(ens)
    out.check("effective sample size", not est.unreliable, f"ESS = {est.ess:.1f}")
    if cfg.renormalized:
        oracle = wick_mean_interaction(basis, w, cov)
        mc = float(ens.energies.mean())
        se = float(ens.energies.std(ddof=1) / np.sqrt(ens.n))
        summary.update({"wick_oracle": oracle, "mc_mean": mc, "mc_stderr": se})
        out.check("Wick mean within 3 stderr", abs(mc - oracle) <= 3 * se,
                  f"{mc:.6g} +- {se:.2g} vs {oracle:.6g}")
    _write_json(out, "classical.json", summary)
    classical_moment(ens, 1).to_csv(out.path("classical_moment_k1.csv"), out.header())


def cmd_quantum(out: Outcome):
    cfg = out.cfg
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    rows = []
    for T in cfg.T_grid:
        st, _, info = quantum_pair(basis, w, T, cfg)
        s = st.summary()
        s.update(info)
        rows.append(s)
        out.check(f"truncation consistency T={T:g}", info["truncation_ok"],
                  f"dlogZ={info['trunc_dlogz']:.2g} dG1={info['trunc_drdm']:.2g}")
        reduced_density_matrix(st, 1).to_csv(out.path(f"gamma1_T{T:g}.csv"), out.header())
    _write_json(out, "quantum.json", {"states": rows})


def cmd_definetti(out: Outcome):
    cfg = out.cfg
    basis = basis_from_config(cfg)
    w = cfg.interaction()
    gaps = []
    for T in cfg.T_grid:
        st, _, _ = quantum_pair(basis, w, T, cfg, check_truncation=False)
        eps = cfg.epsilon or 1.0 / T
        for k in (1, 2):
            g = definetti_gap(st, cfg.P, eps, k)
            d = json.loads(g.to_json())
            d["T"] = T
            gaps.append(d)
            out.check(f"de Finetti bound T={T:g} k={k}", g.slack >= -1e-8, f"slack {g.slack:.3g}")
    _write_json(out, "definetti.json", {"gaps": gaps})


def cmd_entropy_suite(out: Outcome):
    recs = entropy_suite(out.cfg.seed, out.cfg.trials)
    write_records(recs, out.path("entropy_suite.csv"), out.header())
    bad = [r for r in recs if not r.passed]
    out.check("inequality suites", not bad, f"{len(bad)} violations of {len(recs)}")


def cmd_variance_suite(out: Outcome):
    cfg = out.cfg
    recs, reps = variance_suite(max(cfg.trials, 1), cfg.seed, cfg.fd_step, cfg.nodes)
    write_records(recs, out.path("variance_suite.csv"), out.header())
    with open(out.path("variance_reports.json"), "w") as fh:
        json.dump({"reports": [json.loads(r.to_json()) for r in reps], **out.header()}, fh,
                  sort_keys=True, indent=1)
        fh.write("\n")
    worst = max(r.relative_gap for r in reps)
    out.check("linear response identity", worst <= 1e-6, f"max relative gap {worst:.3g}")
    out.check("variance inequality chain", all(r.passed for r in recs),
              f"min slack {min(r.slack for r in recs):.3g}")


def cmd_converge_1d(out: Outcome):
    rep = run_1d_convergence(out.cfg)
    _save_report(out, rep, "converge_1d", ["d1", "d2"])
    if len(rep.rows) < 2:
        out.check("attainable T grid", False, "fewer than two temperatures attained")
        return
    for tc in (rep.trend("d1", halving=True), rep.trend("d2")):
        out.check(f"{tc.column} decreasing", tc.passed, tc.detail)


def cmd_converge_2d(out: Outcome):
    rep = run_2d_renormalized(out.cfg)
    _save_report(out, rep, "converge_2d", ["diff_s1", "diff_s2", "d2_s2"])
    if len(rep.rows) < 2:
        out.check("attainable T grid", False, "fewer than two temperatures attained")
        return
    tc = rep.trend("diff_s1")
    out.check("difference observable decreasing", tc.passed, tc.detail)


def cmd_correlations(out: Outcome):
    rep = run_correlation_diagnostics(out.cfg)
    _save_report(out, rep, "correlations", ["var_Q", "shift_Q"])
    for col in ("var_Q", "shift_Q"):
        v = rep.column(col)
        ok = bool(np.all(np.diff(v) <= 0))
        out.check(f"{col} nonincreasing", ok, " ".join(f"{x:.4g}" for x in v))


def cmd_decomposition(out: Outcome):
    rep = two_body_decomposition_residual(out.cfg)
    _save_report(out, rep, "decomposition", ["relative_residual", "term5_s2"])
    v = rep.column("relative_residual")
    out.check("relative residual decreasing", bool(np.all(np.diff(v) < 0)),
              " ".join(f"{x:.4g}" for x in v))


COMMANDS = {
    "free-check": cmd_free_check, "classical": cmd_classical, "quantum": cmd_quantum,
    "definetti": cmd_definetti, "entropy-suite": cmd_entropy_suite,
    "variance-suite": cmd_variance_suite, "converge-1d": cmd_converge_1d,
    "converge-2d": cmd_converge_2d, "correlations": cmd_correlations,
    "decomposition": cmd_decomposition,
}


def dispatch(subcommand: str, cfg: RunConfig, out_dir: str | None = None,
             plots: bool = True, stream=None) -> int:
    """Run one subcommand and print a pass/fail line per check."""
    stream = sys.stdout if stream is None else stream
    if subcommand not in COMMANDS:
        print(f"unknown subcommand '{subcommand}'; choose from: {', '.join(SUBCOMMANDS)}",
              file=sys.stderr)
        return EXIT_USAGE
    out = Outcome(cfg, out_dir or cfg.out_dir, plots)
    t0 = time.perf_counter()
    try:
        COMMANDS[subcommand](out)
    except ValueError as exc:
        print(f"{subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, ok, detail in out.checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}", file=stream)
    print(f"{subcommand}: {'pass' if out.passed else 'FAIL'} "
          f"({time.perf_counter() - t0:.1f}s, config {cfg.config_hash()})", file=stream)
    return EXIT_OK if out.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbslab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads")
    p.add_argument("--no-plots", action="store_true", help="skip SVG plots")
    p.add_argument("--version", action="version", version=f"gibbslab {__version__}")
    return p


def _limit_threads(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; --threads ignored")
        return
    threadpool_limits(n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    if args.subcommand not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"unknown subcommand '{args.subcommand}'", file=sys.stderr)
        return EXIT_USAGE
    if args.threads:
        _limit_threads(args.threads)
    try:
        cfg = parse_config(args.config) if args.config else RunConfig.from_dict({})
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except (OSError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    return dispatch(args.subcommand, cfg, args.out, plots=not args.no_plots)


if __name__ == "__main__":
    sys.exit(main())
