import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meqkraus import LindbladGenerator, build_basis, generator_to_matrix  # noqa: E402
from oracles import random_hermitian  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240515)


def random_lindblad(N, rng, norm=1.0):
    """Random constant Lindblad generator, rescaled so that ||L||_F = norm."""
    H = random_hermitian(N, rng)
    jumps = []
    for _ in range(2):
        C = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        jumps.append((C, float(rng.uniform(0.1, 1.0))))
    L = generator_to_matrix(LindbladGenerator(N, H, jumps), build_basis(N))
    scale = norm / np.linalg.norm(L)
    return LindbladGenerator(N, scale * H, [(C, scale * g) for C, g in jumps])


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
