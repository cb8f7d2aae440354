import sys

import numpy as np
import pytest

from gibbslab.spectral import InteractionSpec, build_mode_basis


@pytest.fixture(scope="session")
def basis1d():
    return build_mode_basis(1, 1.0, 50.0)


@pytest.fixture(scope="session")
def w1d():
    return InteractionSpec({0: 1.0, 1: 0.5, -1: 0.5})


def tensor_ladder(M, cutoff):
    """Annihilators on the tensor product of single-mode spaces truncated at ``cutoff``."""
    a1 = np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1)
    eye = np.eye(cutoff + 1)
    ops = []
    for j in range(M):
        mats = [eye] * M
        mats[j] = a1
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        ops.append(out)
    return ops


def tensor_index(occ, cutoff):
    M = occ.shape[1]
    weights = (cutoff + 1) ** np.arange(M - 1, -1, -1)
    return occ @ weights


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
