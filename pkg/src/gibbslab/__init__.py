"""Finite-truncation numerics for the mean-field correspondence between quantum Bose
gases at high temperature and nonlinear classical Gibbs measures."""

__version__ = "0.1.0"

from .spectral import (InteractionSpec, ModeBasis, build_mode_basis, compute_N0,  # noqa: E402
                       renormalized_nu)
from .fock import (BlockedOperator, FockBasis, FockState, ReducedDensityMatrix,  # noqa: E402
                   SpectralGibbsState, build_hamiltonian, build_renormalized_hamiltonian,
                   enumerate_fock_basis, gibbs_state, reduced_density_matrix)
from .classical import (Covariance, MASSIVE, classical_moment, estimate_partition,  # noqa: E402
                        make_ensemble, thermal)
from .entropy import (linear_response_check, relative_entropy, s_variance,  # noqa: E402
                      schatten_norm, trace_distance)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "__version__", "BACKEND",
    "InteractionSpec", "ModeBasis", "build_mode_basis", "compute_N0", "renormalized_nu",
    "BlockedOperator", "FockBasis", "FockState", "ReducedDensityMatrix", "SpectralGibbsState",
    "build_hamiltonian", "build_renormalized_hamiltonian", "enumerate_fock_basis",
    "gibbs_state", "reduced_density_matrix",
    "Covariance", "MASSIVE", "classical_moment", "estimate_partition", "make_ensemble", "thermal",
    "linear_response_check", "relative_entropy", "s_variance", "schatten_norm", "trace_distance",
]
