"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting the environment
variable ``GIBBSLAB_PURE_PYTHON=1`` forces the NumPy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GIBBSLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

rank_states = _impl.rank_states
monomial_coo = _impl.monomial_coo
interaction_energies = _impl.interaction_energies

__all__ = ["BACKEND", "rank_states", "monomial_coo", "interaction_energies"]
