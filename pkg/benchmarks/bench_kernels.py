"""Time the compiled kernels against the NumPy fallback on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N wall time of each backend and the
speedup; also checks that both backends return identical results.
"""
import argparse
import time

import numpy as np

from gibbslab import _pykernels
from gibbslab.classical import _pair_tables, _difference_vectors, sample_free_fields, MASSIVE
from gibbslab.fock import enumerate_fock_basis, quartic_terms
from gibbslab.spectral import InteractionSpec, build_mode_basis

try:
    from gibbslab import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the NumPy backend is available")
        return

    basis = build_mode_basis(2, 1.0, 50.0)
    w = InteractionSpec({(0, 0): 1.0, (1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25})
    fock = enumerate_fock_basis(basis.size, 16, basis)
    terms = quartic_terms(basis, w, 0.5)
    cre = np.array([t[0] for t in terms], dtype=np.int64)
    ann = np.array([t[1] for t in terms], dtype=np.int64)
    coef = np.array([t[2] for t in terms])

    alphas = sample_free_fields(basis, MASSIVE, 200000, 1)
    kvecs = _difference_vectors(basis)
    p, q, k = _pair_tables(basis, kvecs)
    what = np.array([w(kv) for kv in kvecs])
    zero = next(i for i, kv in enumerate(kvecs) if not any(kv))

    cases = {
        "rank_states": lambda m: m.rank_states(fock.occ, fock.binom, fock.N_max),
        "monomial_coo": lambda m: m.monomial_coo(fock.occ, fock.flat_of_rank, fock.binom,
                                                 fock.N_max, cre, ann, coef),
        "interaction_energies": lambda m: m.interaction_energies(alphas, p, q, k, what, zero, 1.3),
    }
    print(f"Fock dim {fock.dim}, {len(terms)} quartic monomials, {len(alphas)} field samples")
    for name, fn in cases.items():
        tp, op = best_of(lambda: fn(_pykernels), args.repeat)
        tc, oc = best_of(lambda: fn(_ckernels), args.repeat)
        if isinstance(op, tuple):
            same = all(np.allclose(a, b) for a, b in zip(op, oc))
        else:
            same = np.allclose(op, oc)
        print(f"{name:22s} numpy {tp * 1e3:9.2f} ms   cython {tc * 1e3:9.2f} ms   "
              f"speedup {tp / tc:6.1f}x   match {same}")


if __name__ == "__main__":
    main()
