"""Plane-wave mode lattice on the unit torus and free-gas occupation numbers.

Wavevectors are stored in integer units: a mode ``n`` in ``Z^d`` carries the
physical momentum ``k = 2*pi*n`` and the one-body energy ``|k|^2 + kappa``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI_SQ = (2.0 * math.pi) ** 2
UNDERFLOW_FLOOR = 1e-300


class EmptyBasisError(ValueError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ModeBasis:
    """Modes ``k`` with ``|k|^2 + kappa <= K``, sorted by energy.

    Attributes
    ----------
    modes : (M, d) int array
        Integer wavevectors; physical momentum is ``2*pi*modes``.
    eigenvalues : (M,) float array
        ``|k_j|^2 + kappa``, nondecreasing.
    neg : (M,) int array
        Index of ``-k_j``.
    add : (M, M) int array
        Index of ``k_i + k_j`` or -1 when the sum leaves the basis.
    """

    d: int
    kappa: float
    K: float
    modes: np.ndarray
    eigenvalues: np.ndarray
    neg: np.ndarray
    add: np.ndarray
    _index: dict = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.modes)

    def __len__(self) -> int:
        return len(self.modes)

    def index(self, n) -> int:
        """Index of integer wavevector ``n`` or -1 if it is not in the basis."""
        return self._index.get(tuple(int(x) for x in np.atleast_1d(n)), -1)

    def momenta(self) -> np.ndarray:
        return 2.0 * math.pi * self.modes

    def trace_inverse_h(self, power: float = 1.0) -> float:
        return float(np.sum(self.eigenvalues ** (-power)))

    def summary(self) -> dict:
        return {
            "d": self.d,
            "kappa": self.kappa,
            "K": self.K,
            "modes": self.modes.tolist(),
            "eigenvalues": [float(x) for x in self.eigenvalues],
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _lattice_energy(n: np.ndarray, kappa: float) -> np.ndarray:
    return TWO_PI_SQ * np.sum(np.asarray(n, dtype=float) ** 2, axis=-1) + kappa


def build_mode_basis(d: int, kappa: float, K: float) -> ModeBasis:
    if d not in (1, 2):
        raise UnsupportedDimensionError(f"dimension d={d} not supported (d must be 1 or 2)")
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if K < kappa:
        raise EmptyBasisError(f"cutoff K={K} below the gap kappa={kappa}: no modes")

    nmax = int(math.floor(math.sqrt(max(K - kappa, 0.0) / TWO_PI_SQ))) + 1
    cand = []
    for n in itertools.product(range(-nmax, nmax + 1), repeat=d):
        lam = TWO_PI_SQ * sum(x * x for x in n) + kappa
        # small slack so that K = |k|^2 + kappa exactly keeps the mode
        if lam <= K * (1 + 1e-14):
            cand.append((lam, n))
    cand.sort()
    modes = np.array([n for _, n in cand], dtype=np.int64).reshape(-1, d)
    eig = _lattice_energy(modes, kappa)
    index = {tuple(int(x) for x in n): j for j, n in enumerate(modes)}
    M = len(modes)
    neg = np.array([index[tuple(int(-x) for x in n)] for n in modes], dtype=np.int64)
    add = np.full((M, M), -1, dtype=np.int64)
    for i in range(M):
        for j in range(M):
            add[i, j] = index.get(tuple(int(x) for x in modes[i] + modes[j]), -1)
    for arr in (modes, eig, neg, add):
        arr.setflags(write=False)
    return ModeBasis(d, float(kappa), float(K), modes, eig, neg, add, index)


class InteractionSpec:
    """Fourier coefficients ``what(k) >= 0`` of a real, even, positive-type potential.

    Keys are integer wavevectors (tuples of length ``d``).
    """

    def __init__(self, coefficients, d: int | None = None):
        coeffs = {}
        for k, v in dict(coefficients).items():
            key = tuple(int(x) for x in np.atleast_1d(k))
            if key in coeffs:
                raise ValueError(f"duplicate wavevector {key}")
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"what{key} is not finite")
            if v < 0:
                raise ValueError(
                    f"what{key} = {v} < 0: the interaction must be of positive type")
            coeffs[key] = v
        dims = {len(k) for k in coeffs}
        if d is None:
            d = dims.pop() if dims else 1
        if any(len(k) != d for k in coeffs):
            raise ValueError(f"wavevector dimension mismatch, expected d={d}")
        for k, v in coeffs.items():
            mk = tuple(-x for x in k)
            if abs(coeffs.get(mk, 0.0) - v) > 1e-14 * max(1.0, abs(v)):
                raise ValueError(f"what is not even: what{k}={v}, what{mk}={coeffs.get(mk, 0.0)}")
        self.d = d
        self._c = {k: v for k, v in coeffs.items() if v != 0.0}

    @classmethod
    def zero(cls, d: int) -> "InteractionSpec":
        return cls({}, d=d)

    def __call__(self, k) -> float:
        return self._c.get(tuple(int(x) for x in np.atleast_1d(k)), 0.0)

    def items(self):
        return sorted(self._c.items())

    @property
    def zero_mode(self) -> float:
        return self._c.get((0,) * self.d, 0.0)

    @property
    def w_at_origin(self) -> float:
        """``w(0) = sum_k what(k)`` for the unit-volume torus."""
        return float(sum(self._c.values()))

    def is_zero(self) -> bool:
        return not self._c

    def to_list(self):
        return [[list(k), v] for k, v in self.items()]

    def __repr__(self):
        return f"InteractionSpec({dict(self.items())!r})"


def free_occupation(lam, T):
    """Bose occupation ``1/(exp(lam/T) - 1)``; values below 1e-300 are set to 0."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("one-body energies must be positive")
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T}")
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(lam / T)
    occ = np.where(occ < UNDERFLOW_FLOOR, 0.0, occ)
    return float(occ) if occ.ndim == 0 else occ


def first_omitted_shell(basis: ModeBasis) -> tuple[float, int]:
    """Energy and multiplicity of the lowest lattice shell above the cutoff."""
    nmax = int(math.ceil(math.sqrt(max(basis.K - basis.kappa, 0.0) / TWO_PI_SQ))) + 2
    shells = {}
    for n in itertools.product(range(-nmax, nmax + 1), repeat=basis.d):
        sq = sum(x * x for x in n)
        lam = TWO_PI_SQ * sq + basis.kappa
        if lam > basis.K * (1 + 1e-14):
            shells[sq] = shells.get(sq, 0) + 1
    sq = min(shells)
    return TWO_PI_SQ * sq + basis.kappa, shells[sq]


def compute_N0(basis: ModeBasis, T: float) -> float:
    """Free density summed over the truncated basis."""
    return float(np.sum(free_occupation(basis.eigenvalues, T)))


def N0_tail_estimate(basis: ModeBasis, T: float) -> float:
    """Occupation of the first omitted shell times its multiplicity."""
    lam, mult = first_omitted_shell(basis)
    return mult * free_occupation(lam, T)


def renormalized_nu(basis: ModeBasis, T: float, w: InteractionSpec) -> float:
    """Chemical potential ``what(0) * N0 / T - kappa`` of the Wick-renormalized gas."""
    return w.zero_mode * compute_N0(basis, T) / T - basis.kappa
