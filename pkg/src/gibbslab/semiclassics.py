"""Coherent states, Husimi lower symbols and de Finetti / Berezin-Lieb comparisons.

Phase-space integrals over the modes in ``P`` (at most two) use tensor-product polar
grids: Gauss-Legendre in the radius and a uniform angular rule per complex mode.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln, roots_legendre

from . import kernels
from .fock import (FockBasis, FockState, ReducedDensityMatrix, SpectralGibbsState,
                   pair_list, reduced_density_matrix)
from .entropy import relative_entropy

MASS_TOL = 1e-3
N_RADIAL = 64
N_ANGULAR = 64
GRID_CHUNK = 8192
LOG_ZERO = -1e30


class TruncationError(ValueError):
    """Coherent vector too large for the Fock truncation."""

    def __init__(self, msg, required_N_max: int):
        super().__init__(msg)
        self.required_N_max = required_N_max


class QuadratureError(ValueError):
    def __init__(self, msg, suggested_half_width):
        super().__init__(msg)
        self.suggested_half_width = suggested_half_width


# ---------------------------------------------------------------------------
# coherent vectors


def _coherent_log_amplitudes(v, occ):
    """log|c| and phase of ``exp(-|v|^2/2) prod v_j^n_j / sqrt(n_j!)`` for rows of ``v``."""
    v = np.atleast_2d(v)
    absv = np.abs(v)
    logabs = np.where(absv > 0, np.log(np.where(absv > 0, absv, 1.0)), LOG_ZERO)
    occf = occ.astype(float)
    logfact = 0.5 * gammaln(occf + 1.0).sum(axis=1)
    logmag = logabs @ occf.T - 0.5 * np.sum(absv ** 2, axis=1)[:, None] - logfact[None, :]
    phase = np.angle(v) @ occf.T
    return logmag, phase


def coherent_amplitudes(v, fock: FockBasis) -> np.ndarray:
    """Fock coefficients of the coherent vector with amplitudes ``v`` (one row per point)."""
    logmag, phase = _coherent_log_amplitudes(v, fock.occ)
    out = np.exp(logmag + 1j * phase)
    return out[0] if np.ndim(v) == 1 else out


@dataclass
class CoherentVector:
    u: np.ndarray
    epsilon: float
    fock: FockBasis
    amplitudes: np.ndarray
    norm_defect: float

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "CoherentVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def _check_size(v, N_max):
    s = float(np.sum(np.abs(v) ** 2))
    if s > N_max / 2:
        need = int(math.ceil(2 * s))
        raise TruncationError(
            f"|u/sqrt(eps)|^2 = {s:.3g} exceeds N_max/2; the truncation needs N_max >= {need}", need)


def coherent_vector(u, epsilon: float, fock: FockBasis) -> CoherentVector:
    """Truncated coherent vector at ``u / sqrt(epsilon)``; the norm is not restored."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    u = np.asarray(u, dtype=complex).reshape(fock.M)
    v = u / math.sqrt(epsilon)
    _check_size(v, fock.N_max)
    amp = coherent_amplitudes(v, fock)
    return CoherentVector(u, float(epsilon), fock, amp, max(0.0, float(1.0 - np.vdot(amp, amp).real)))


# ---------------------------------------------------------------------------
# localization


def localize(state, P) -> FockState:
    """Partial trace over the modes outside ``P``; the result lives on ``F(P)``."""
    fock = state.fock
    P = [int(p) for p in P]
    if not P or len(set(P)) != len(P) or min(P) < 0 or max(P) >= fock.M:
        raise ValueError(f"invalid mode subset {P}")
    mom = None if fock.momenta is None else fock.momenta[P]
    en = None if fock.mode_energies is None else fock.mode_energies[P]
    sub = FockBasis(len(P), fock.N_max, momenta=mom, mode_energies=en)
    occP = np.ascontiguousarray(fock.occ[:, P])
    pidx = sub.flat_of_rank[kernels.rank_states(occP, sub.binom, sub.N_max)]
    Q = [j for j in range(fock.M) if j not in P]
    if Q:
        _, qkey = np.unique(fock.occ[:, Q], axis=0, return_inverse=True)
        qkey = qkey.ravel()
    else:
        qkey = np.zeros(fock.dim, dtype=np.int64)
    out = np.zeros((sub.dim, sub.dim), dtype=complex)
    if isinstance(state, SpectralGibbsState):
        bw = state.block_weights()
        for b in range(fock.n_blocks):
            if bw[b] == 0.0:
                continue
            sl = fock.block_slice(b)
            _accumulate(out, state.block_density(b), pidx[sl], qkey[sl])
    else:
        _accumulate(out, state.to_dense(), pidx, qkey)
    if np.all(out.imag == 0):
        out = out.real
    return FockState(sub, out)


def _accumulate(out, rho, pidx, qkey):
    # within one Q-configuration the P-indices are distinct, so plain fancy += is safe
    order = np.argsort(qkey, kind="stable")
    bounds = np.flatnonzero(np.diff(qkey[order])) + 1
    for g in np.split(order, bounds):
        out[np.ix_(pidx[g], pidx[g])] += rho[np.ix_(g, g)]


# ---------------------------------------------------------------------------
# lower symbols


def _as_local(state, P):
    if isinstance(state, FockState) and P is None:
        return state
    return localize(state, P)


def _density_values(local: FockState, epsilon: float, points) -> np.ndarray:
    """``(eps pi)^-n <xi(u/sqrt eps), G_P xi(u/sqrt eps)>`` at each row of ``points``."""
    fock = local.fock
    rho = local.rho
    n = fock.M
    pts = np.asarray(points, dtype=complex).reshape(-1, n)
    diag = np.count_nonzero(rho - np.diag(np.diag(rho))) == 0
    pdiag = np.real(np.diag(rho))
    out = np.empty(len(pts))
    for s in range(0, len(pts), GRID_CHUNK):
        v = pts[s:s + GRID_CHUNK] / math.sqrt(epsilon)
        logmag, phase = _coherent_log_amplitudes(v, fock.occ)
        if diag:
            out[s:s + GRID_CHUNK] = np.exp(2 * logmag) @ pdiag
        else:
            C = np.exp(logmag + 1j * phase)
            out[s:s + GRID_CHUNK] = np.real(np.sum(C.conj() * (C @ rho.T), axis=1))
    return np.maximum(out, 0.0) / (epsilon * math.pi) ** n


def husimi_density(state, P, epsilon: float, u) -> float | np.ndarray:
    """Lower symbol of the state localized to ``P``, evaluated at one or many points ``u``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    local = _as_local(state, P)
    pts = np.asarray(u, dtype=complex).reshape(-1, local.fock.M)
    for row in pts:
        _check_size(row / math.sqrt(epsilon), local.fock.N_max)
    vals = _density_values(local, epsilon, pts)
    return float(vals[0]) if np.asarray(u).ndim <= 1 and len(vals) == 1 else vals


@dataclass
class PolarGrid:
    points: np.ndarray
    weights: np.ndarray
    half_widths: np.ndarray

    def __len__(self):
        return len(self.weights)


def polar_grid(half_widths, n_radial: int = N_RADIAL, n_angular: int = N_ANGULAR) -> PolarGrid:
    """Product of per-mode polar rules on the discs ``|u_j| <= R_j``."""
    half_widths = np.atleast_1d(np.asarray(half_widths, dtype=float))
    x, wx = roots_legendre(n_radial)
    pts_1d, w_1d = [], []
    theta = 2 * math.pi * np.arange(n_angular) / n_angular
    for R in half_widths:
        r = 0.5 * R * (x + 1.0)
        wr = 0.5 * R * wx * r * (2 * math.pi / n_angular)
        pts_1d.append((r[:, None] * np.exp(1j * theta)[None, :]).ravel())
        w_1d.append(np.repeat(wr, n_angular))
    pts = np.array(np.meshgrid(*pts_1d, indexing="ij")).reshape(len(half_widths), -1).T
    wts = np.prod(np.array(np.meshgrid(*w_1d, indexing="ij")).reshape(len(half_widths), -1), axis=0)
    return PolarGrid(pts, wts, half_widths)


def default_half_widths(local: FockState, epsilon: float) -> np.ndarray:
    p = local.diagonal_probabilities()
    mean_n = p @ local.fock.occ
    return 6.0 * np.sqrt(epsilon * (1.0 + mean_n))


@dataclass
class LowerSymbolEstimate:
    P: list
    epsilon: float
    rule: str
    mass: float
    moments: dict = field(default_factory=dict)
    grid: PolarGrid | None = field(default=None, repr=False)
    density: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self, path, header_extra: dict | None = None):
        with open(path, "w", newline="") as fh:
            if header_extra:
                fh.write("# " + json.dumps(header_extra, sort_keys=True) + "\n")
            wr = csv.writer(fh)
            n = len(self.P)
            wr.writerow([f"{p}{j}" for j in range(n) for p in ("re_u", "im_u")] + ["weight", "density"])
            for u, w, f in zip(self.grid.points, self.grid.weights, self.density):
                row = []
                for x in u:
                    row += [repr(float(x.real)), repr(float(x.imag))]
                wr.writerow(row + [repr(float(w)), repr(float(f))])


def lower_symbol(state, P, epsilon: float, half_widths=None, n_radial: int | None = None,
                 n_angular: int | None = None, check_mass: bool = True) -> LowerSymbolEstimate:
    """Tabulate the lower symbol on a polar grid and record its mass."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    local = _as_local(state, P)
    n = local.fock.M
    if n > 2:
        raise ValueError("grid quadrature supports at most two modes")
    if n_radial is None:
        n_radial = N_RADIAL if n == 1 else 32
    if n_angular is None:
        n_angular = N_ANGULAR if n == 1 else 24
    if half_widths is None:
        half_widths = default_half_widths(local, epsilon)
    grid = polar_grid(half_widths, n_radial, n_angular)
    dens = _density_values(local, epsilon, grid.points)
    mass = float(grid.weights @ dens)
    if check_mass and mass < 1.0 - MASS_TOL:
        raise QuadratureError(
            f"lower-symbol mass {mass:.6f} on the grid is below {1 - MASS_TOL}; "
            f"increase the half-width to {1.5 * np.max(grid.half_widths):.3g}",
            1.5 * grid.half_widths)
    return LowerSymbolEstimate(list(P) if P is not None else list(range(n)), float(epsilon),
                               "polar grid quadrature", mass, {}, grid, dens)


def _grid_moment(grid: PolarGrid, dens, k: int) -> np.ndarray:
    u = grid.points
    if k == 1:
        vec = u
    else:
        cols = []
        for i, j in pair_list(u.shape[1]):
            c = 1.0 if i == j else math.sqrt(2.0)
            cols.append(c * u[:, i] * u[:, j])
        vec = np.stack(cols, axis=1)
    m = (vec * (grid.weights * dens)[:, None]).T @ vec.conj()
    return 0.5 * (m + m.conj().T)


def lower_symbol_moment(state, P, epsilon: float, k: int, **grid_kw) -> ReducedDensityMatrix:
    """``int |u^{(x)k}><u^{(x)k}| dmu`` of the lower symbol (k = 1, 2), symmetric pair basis for k = 2."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    est = lower_symbol(state, P, epsilon, **grid_kw)
    m = _grid_moment(est.grid, est.density, k)
    return ReducedDensityMatrix(k, _real_if_close(m), convention="lower-symbol moment")


def _real_if_close(m):
    return m.real.copy() if np.max(np.abs(m.imag), initial=0.0) < 1e-14 else m


# ---------------------------------------------------------------------------
# de Finetti gap


@dataclass
class DeFinettiGap:
    k: int
    n: int
    epsilon: float
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def scaled_error(self) -> float:
        """``lhs * N / n`` with ``N = 1/epsilon``; recorded, no bound asserted."""
        return self.lhs / (self.epsilon * self.n)

    def to_json(self) -> str:
        d = asdict(self)
        d["slack"] = self.slack
        d["scaled_error"] = self.scaled_error
        return json.dumps(d, sort_keys=True)


def definetti_rhs(local: FockState, epsilon: float, k: int) -> float:
    n = local.fock.M
    N = local.fock.N.astype(float)
    p = local.diagonal_probabilities()
    total = 0.0
    for ell in range(k):
        comb = math.comb(k, ell) ** 2
        fac = math.factorial(k - ell + n - 1) / math.factorial(n - 1)
        total += comb * fac * float(p @ N ** ell)
    return epsilon ** k * total


def definetti_gap(state, P, epsilon: float, k: int, **grid_kw) -> DeFinettiGap:
    """Trace-norm gap between ``k! eps^k G_P^(k)`` and the lower-symbol moment, with its bound."""
    from .entropy import schatten_norm
    local = _as_local(state, P)
    lhs_mat = math.factorial(k) * epsilon ** k * reduced_density_matrix(local, k).matrix
    mom = lower_symbol_moment(local, None, epsilon, k, **grid_kw).matrix
    lhs = schatten_norm(lhs_mat - mom, 1)
    return DeFinettiGap(k, local.fock.M, float(epsilon), lhs, definetti_rhs(local, epsilon, k))


# ---------------------------------------------------------------------------
# classical relative entropies


def _symbol_entropy(grid: PolarGrid, f, g) -> float:
    pos = f > 0
    if np.any(pos & (g <= 0)):
        return float("inf")
    return float(np.sum(grid.weights[pos] * f[pos] * np.log(f[pos] / g[pos])))


def classical_symbol_entropy(stateA, stateB, P, epsilon: float, **grid_kw) -> float:
    """``H_cl`` between the two lower symbols on a common grid."""
    a, b = _as_local(stateA, P), _as_local(stateB, P)
    if "half_widths" not in grid_kw:
        grid_kw["half_widths"] = np.maximum(default_half_widths(a, epsilon),
                                            default_half_widths(b, epsilon))
    ea = lower_symbol(a, None, epsilon, **grid_kw)
    fb = _density_values(b, epsilon, ea.grid.points)
    return _symbol_entropy(ea.grid, ea.density, fb)


def berezin_lieb_check(stateA, stateB, P, epsilon: float, **grid_kw) -> tuple[float, float, float]:
    """``(H(G, G'), H(G_P, G'_P), H_cl(mu_P, mu'_P))``; the values are nonincreasing."""
    hq = relative_entropy(stateA, stateB)
    a, b = localize(stateA, P), localize(stateB, P)
    hl = relative_entropy(a, b)
    hc = classical_symbol_entropy(a, b, None, epsilon, **grid_kw)
    return hq, hl, hc


def gaussian_symbol_entropy(state, P, epsilon: float, variances, **grid_kw) -> float:
    """``H_cl`` of the lower symbol against the centred Gaussian with the given mode variances."""
    local = _as_local(state, P)
    var = np.atleast_1d(np.asarray(variances, dtype=float))
    if "half_widths" not in grid_kw:
        grid_kw["half_widths"] = np.maximum(default_half_widths(local, epsilon), 6.0 * np.sqrt(var))
    est = lower_symbol(local, None, epsilon, **grid_kw)
    u2 = np.abs(est.grid.points) ** 2
    g = np.exp(-(u2 / var).sum(axis=1)) / np.prod(math.pi * var)
    return _symbol_entropy(est.grid, est.density, g)
