import numpy as np
import pytest
from hypothesis import settings

from cemschrod import (
    WeightFunction,
    assemble_hamiltonian,
    assemble_mass,
    assemble_weighted_mass,
    build_auxiliary_space,
    build_grid,
    make_potential,
)

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def checker_small():
    """2D checkerboard on a 6x6 coarse mesh with r = 4, eps = 1/8."""
    eps = 1 / 8
    grid = build_grid(2, (0.0, 1.0), 6, 4)
    V = make_potential("checkerboard2d")
    a = assemble_hamiltonian(grid, eps, V)
    M = assemble_mass(grid)
    S = assemble_weighted_mass(grid, WeightFunction(eps))
    aux = build_auxiliary_space(grid, a, S, 3)
    return dict(eps=eps, grid=grid, V=V, a=a, M=M, S=S, aux=aux)


@pytest.fixture(scope="session")
def smooth_1d():
    eps = 1 / 8
    grid = build_grid(1, (0.0, 2.0), 8, 4)
    V = make_potential("smooth1d")
    a = assemble_hamiltonian(grid, eps, V)
    M = assemble_mass(grid)
    S = assemble_weighted_mass(grid, WeightFunction(eps))
    aux = build_auxiliary_space(grid, a, S, 2)
    return dict(eps=eps, grid=grid, V=V, a=a, M=M, S=S, aux=aux)


def neumann_p1_eigenvalues(r: int, h: float) -> np.ndarray:
    """Closed-form eigenvalues of the P1 Neumann pencil (K, M) on a chain of r elements."""
    theta = np.arange(r + 1) * np.pi / r
    return np.sort(6.0 / h**2 * (1.0 - np.cos(theta)) / (2.0 + np.cos(theta)))


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion, then assert it."""

    def report(number: int, ok: bool, detail: str):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
