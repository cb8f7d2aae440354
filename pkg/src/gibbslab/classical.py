"""Gaussian free-field sampling and importance-weighted nonlinear Gibbs measures.

A field ``u`` is represented by its mode coefficients ``alpha_j``.  Samples are
drawn from the free Gaussian measure and reweighted by ``exp(-D[u])``, with
``D`` either the plain quartic interaction or its Wick-renormalized form.

Random streams: sample ``i`` belongs to chunk ``i // CHUNK``; chunk ``c`` draws
from ``Philox(key=(seed, c))`` and sample ``i`` uses row ``i % CHUNK`` of that
chunk's standard normals.  Results therefore depend only on ``(seed, i)``.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .fock import ReducedDensityMatrix, pair_list
from .spectral import InteractionSpec, ModeBasis, free_occupation

CHUNK = 8192
ESS_WARN = 10.0
N_BATCHES = 8


@dataclass(frozen=True)
class Covariance:
    """Per-mode variance ``1/lam_j`` (massive) or ``1/(T (exp(lam_j/T) - 1))`` (thermal)."""

    kind: str = "massive"
    T: float | None = None

    def __post_init__(self):
        if self.kind not in ("massive", "thermal"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "thermal" and not (self.T and self.T > 0):
            raise ValueError("thermal covariance needs a positive temperature")

    def variances(self, basis: ModeBasis) -> np.ndarray:
        lam = basis.eigenvalues
        if self.kind == "massive":
            return 1.0 / lam
        return free_occupation(lam, self.T) / self.T

    def label(self) -> str:
        return "massive" if self.kind == "massive" else f"thermal(T={self.T:g})"


MASSIVE = Covariance("massive")


def thermal(T: float) -> Covariance:
    return Covariance("thermal", float(T))


def wick_constant(basis: ModeBasis, covariance: Covariance = MASSIVE) -> float:
    """``<rho_0>`` under the free measure, i.e. the sum of mode variances."""
    return float(np.sum(covariance.variances(basis)))


def _philox(seed: int, chunk: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_free_field(basis: ModeBasis, covariance: Covariance, rng: np.random.Generator):
    """One field with independent complex Gaussian coefficients, ``E|alpha_j|^2 = sigma_j^2``."""
    sigma = np.sqrt(covariance.variances(basis))
    g = rng.standard_normal((basis.size, 2))
    return (g[:, 0] + 1j * g[:, 1]) * sigma / math.sqrt(2.0)


def sample_free_fields(basis: ModeBasis, covariance: Covariance, n: int, seed: int,
                       start: int = 0) -> np.ndarray:
    """Samples ``start .. start+n-1`` of the seeded stream as an ``(n, M)`` array."""
    sigma = np.sqrt(covariance.variances(basis))
    M = basis.size
    out = np.empty((n, M), dtype=np.complex128)
    i = start
    while i < start + n:
        c, off = divmod(i, CHUNK)
        take = min(CHUNK - off, start + n - i)
        g = _philox(seed, c).standard_normal((off + take, M, 2))[off:]
        out[i - start:i - start + take] = (g[..., 0] + 1j * g[..., 1]) * (sigma / math.sqrt(2.0))
        i += take
    return out


# ---------------------------------------------------------------------------
# interactions


def _difference_vectors(basis: ModeBasis):
    ks = {tuple(int(x) for x in (basis.modes[q] - basis.modes[p]))
          for p in range(basis.size) for q in range(basis.size)}
    return sorted(ks, key=lambda k: (sum(x * x for x in k), k))


def _pair_tables(basis: ModeBasis, kvecs):
    index = {k: i for i, k in enumerate(kvecs)}
    pp, pq, pk = [], [], []
    for p in range(basis.size):
        for q in range(basis.size):
            k = tuple(int(x) for x in (basis.modes[q] - basis.modes[p]))
            if k in index:
                pp.append(p)
                pq.append(q)
                pk.append(index[k])
    return (np.array(pp, dtype=np.int64), np.array(pq, dtype=np.int64),
            np.array(pk, dtype=np.int64))


def density_fourier(u, basis: ModeBasis) -> dict:
    """``rho_k = sum_p conj(alpha_p) alpha_{p+k}`` over in-basis pairs, keyed by integer ``k``."""
    u = np.asarray(u, dtype=complex)
    kvecs = _difference_vectors(basis)
    pp, pq, pk = _pair_tables(basis, kvecs)
    prod = np.conj(u[pp]) * u[pq]
    rho = np.zeros(len(kvecs), dtype=complex)
    np.add.at(rho, pk, prod)
    return dict(zip(kvecs, rho))


def _energies(alphas, w: InteractionSpec, basis: ModeBasis, c0: float) -> np.ndarray:
    alphas = np.atleast_2d(np.asarray(alphas, dtype=np.complex128))
    items = [(k, v) for k, v in w.items()]
    if not items:
        return np.zeros(alphas.shape[0])
    kvecs = [k for k, _ in items]
    what_k = np.array([v for _, v in items])
    zero = (0,) * basis.d
    zero_k = kvecs.index(zero) if zero in kvecs else -1
    pp, pq, pk = _pair_tables(basis, kvecs)
    return kernels.interaction_energies(alphas, pp, pq, pk, what_k, zero_k, float(c0))


def plain_interaction(u, w: InteractionSpec, basis: ModeBasis):
    """``D[u] = 1/2 sum_k what(k) |rho_k|^2``; accepts one field or an ``(n, M)`` batch."""
    out = _energies(u, w, basis, 0.0)
    return float(out[0]) if np.ndim(u) == 1 else out


def renormalized_interaction(u, w: InteractionSpec, basis: ModeBasis,
                             c0: float | None = None, covariance: Covariance = MASSIVE):
    """Wick-ordered ``D_K[u]``: the zero mode enters as ``(rho_0 - c0)^2``.

    ``c0`` defaults to the free expectation of ``rho_0`` under ``covariance``.
    """
    if c0 is None:
        c0 = wick_constant(basis, covariance)
    out = _energies(u, w, basis, c0)
    return float(out[0]) if np.ndim(u) == 1 else out


def wick_mean_interaction(basis: ModeBasis, w: InteractionSpec,
                          covariance: Covariance = MASSIVE, renormalized: bool = True) -> float:
    """Closed-form free expectation of ``D_K`` (or of plain ``D``)."""
    s = covariance.variances(basis)
    out = 0.0
    zero = (0,) * basis.d
    for k, wk in w.items():
        pair_sum = 0.0
        for p in range(basis.size):
            q = basis.index(basis.modes[p] + np.array(k))
            if q >= 0:
                pair_sum += s[p] * s[q]
        if k == zero and not renormalized:
            pair_sum += s.sum() ** 2
        out += 0.5 * wk * pair_sum
    return out


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class ClassicalEnsemble:
    basis: ModeBasis
    alphas: np.ndarray
    energies: np.ndarray
    seed: int
    covariance: Covariance
    renormalized: bool
    c0: float
    w: InteractionSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def logweights(self) -> np.ndarray:
        return -self.energies

    @property
    def n(self) -> int:
        return len(self.energies)

    def normalized_weights(self) -> np.ndarray:
        lw = self.logweights
        return np.exp(lw - logsumexp(lw))

    def batches(self, n_batches: int = N_BATCHES):
        edges = np.linspace(0, self.n, n_batches + 1).astype(int)
        return [slice(edges[i], edges[i + 1]) for i in range(n_batches)]

    def to_csv(self, path, header_extra: dict | None = None):
        M = self.basis.size
        with open(path, "w", newline="") as fh:
            if header_extra:
                fh.write("# " + json.dumps(header_extra, sort_keys=True) + "\n")
            wr = csv.writer(fh)
            wr.writerow([f"{p}{j}" for j in range(M) for p in ("re", "im")] + ["logweight"])
            for a, lw in zip(self.alphas, self.logweights):
                row = []
                for x in a:
                    row += [repr(float(x.real)), repr(float(x.imag))]
                wr.writerow(row + [repr(float(lw))])


def make_ensemble(basis: ModeBasis, w: InteractionSpec, n: int, seed: int,
                  covariance: Covariance = MASSIVE, renormalized: bool = True,
                  beta: float = 1.0) -> ClassicalEnsemble:
    """Free-field samples with log-weights ``-beta * D_K`` (or ``-beta * D``)."""
    if n < 1:
        raise ValueError("ensemble needs at least one sample")
    alphas = sample_free_fields(basis, covariance, n, seed)
    c0 = wick_constant(basis, covariance) if renormalized else 0.0
    e = _energies(alphas, w, basis, c0) * beta
    return ClassicalEnsemble(basis, alphas, e, int(seed), covariance, renormalized, c0, w,
                             meta={"beta": beta})


class PartitionEstimate(NamedTuple):
    z: float
    stderr: float
    ess: float
    unreliable: bool


def effective_sample_size(logweights) -> float:
    lw = np.asarray(logweights, dtype=float)
    return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))


def estimate_partition(ensemble: ClassicalEnsemble) -> PartitionEstimate:
    """``z = mean(exp(-D))`` with its standard error and effective sample size."""
    if ensemble.n == 0:
        raise ValueError("empty ensemble")
    w = np.exp(ensemble.logweights)
    z = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(len(w))) if len(w) > 1 else float("inf")
    ess = effective_sample_size(ensemble.logweights)
    bad = ess < ESS_WARN
    if bad:
        warnings.warn(f"effective sample size {ess:.1f} < {ESS_WARN:g}: estimate unreliable",
                      RuntimeWarning, stacklevel=2)
    return PartitionEstimate(z, se, ess, bad)


def _moment_vectors(alphas, k: int):
    if k == 1:
        return alphas
    M = alphas.shape[1]
    cols = []
    for i, j in pair_list(M):
        c = 1.0 if i == j else math.sqrt(2.0)
        cols.append(c * alphas[:, i] * alphas[:, j])
    return np.stack(cols, axis=1)


def _weighted_moment(alphas, weights, k: int, chunk: int = 65536):
    dim = alphas.shape[1] if k == 1 else alphas.shape[1] * (alphas.shape[1] + 1) // 2
    acc = np.zeros((dim, dim), dtype=complex)
    for s in range(0, len(weights), chunk):
        v = _moment_vectors(alphas[s:s + chunk], k)
        acc += (v * weights[s:s + chunk, None]).T @ v.conj()
    return acc


def classical_moment(ensemble: ClassicalEnsemble, k: int, weighted: bool = True):
    """Self-normalized estimate of ``int |u^{(x)k}><u^{(x)k}| dmu``.

    With ``weighted=False`` the importance weights are ignored, giving the moment of
    the free measure from the same samples.
    """
    if k not in (1, 2):
        raise ValueError("classical moments are implemented for k = 1, 2")
    if ensemble.n == 0:
        raise ValueError("empty ensemble")
    wts = ensemble.normalized_weights() if weighted else np.full(ensemble.n, 1.0 / ensemble.n)
    m = _weighted_moment(ensemble.alphas, wts, k)
    m = 0.5 * (m + m.conj().T)
    return ReducedDensityMatrix(k, m, convention="classical moment, symmetric pair basis")


def classical_moment_batches(ensemble: ClassicalEnsemble, k: int, weighted: bool = True,
                             n_batches: int = N_BATCHES):
    """Moment estimate from each of ``n_batches`` contiguous sample batches."""
    out = []
    for sl in ensemble.batches(n_batches):
        lw = ensemble.logweights[sl]
        wts = np.exp(lw - logsumexp(lw)) if weighted else np.full(len(lw), 1.0 / len(lw))
        m = _weighted_moment(ensemble.alphas[sl], wts, k)
        out.append(0.5 * (m + m.conj().T))
    return np.array(out)


def classical_relative_entropy(ensemble: ClassicalEnsemble) -> float:
    """``H_cl(mu, mu0) = -<D>_mu - log z`` from the importance estimates."""
    z = float(np.mean(np.exp(ensemble.logweights)))
    if not z > 0 or not math.isfinite(z):
        raise ValueError("degenerate partition-function estimate")
    p = ensemble.normalized_weights()
    return float(-(p @ ensemble.energies) - math.log(z))


def classical_variational_value(beta: float, ensemble: ClassicalEnsemble) -> float:
    """``H_cl(mu_beta, mu0) + int D dmu_beta`` for the trial ``mu_beta ~ exp(-beta D) dmu0``.

    Computed on the same samples; equals ``-log z`` at ``beta = 1`` and is never smaller
    for other ``beta`` since the empirical measure obeys the variational principle.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    D = ensemble.energies
    lw = -beta * D
    logz_b = float(logsumexp(lw) - math.log(len(D)))
    p = np.exp(lw - logsumexp(lw))
    mean_D = float(p @ D)
    return (1.0 - beta) * mean_D - logz_b


def classical_pinsker(ensemble: ClassicalEnsemble) -> tuple[float, float]:
    """``(H_cl(mu, mu0), |mu - mu0|^2 / 2)`` with the total variation estimated on the samples."""
    p = ensemble.normalized_weights()
    tv = float(np.sum(np.abs(p - 1.0 / ensemble.n)))
    return classical_relative_entropy(ensemble), 0.5 * tv ** 2


def ensemble_summary(ensemble: ClassicalEnsemble) -> dict:
    est = estimate_partition(ensemble) if ensemble.n > 1 else PartitionEstimate(
        float(np.exp(ensemble.logweights).mean()), float("inf"), 1.0, True)
    return {
        "z_est": est.z,
        "stderr": est.stderr,
        "ESS": est.ess,
        "c0": ensemble.c0,
        "seed": ensemble.seed,
        "covariance": ensemble.covariance.label(),
        "renormalized": ensemble.renormalized,
        "n": ensemble.n,
    }
