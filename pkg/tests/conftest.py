"""
Shared fixtures: initial laws with known equilibria and random atomic measures.
"""
import numpy as np
import pytest

from equilibrium import solve
from measures import FiniteAtomicMeasure, beta23, point_mass


def random_atomic_measure(rng: np.random.Generator, max_atoms: int = 20, with_zero: bool = False,
                          mass: float = 1.0) -> FiniteAtomicMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    locations = rng.uniform(0.05, 3.0, size=n)
    if with_zero:
        locations[0] = 0.0
    weights = rng.uniform(0.1, 1.0, size=n)
    return FiniteAtomicMeasure.from_atoms(locations, mass * weights / weights.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def unit_atom():
    return point_mass(1.0)


@pytest.fixture
def half_zero_half_one():
    return FiniteAtomicMeasure([0.0, 1.0], [0.5, 0.5])


@pytest.fixture
def wide_pair():
    """1/2 at 0.25 and 1/2 at 1.75: the equilibrium has two density pieces."""
    return FiniteAtomicMeasure([0.25, 1.75], [0.5, 0.5])


@pytest.fixture
def narrow_pair():
    """1/2 at 0.7 and 1/2 at 1.3: dominated by U[0, 2]."""
    return FiniteAtomicMeasure([0.7, 1.3], [0.5, 0.5])


@pytest.fixture(scope='session')
def beta_law():
    return beta23()


@pytest.fixture(scope='session')
def beta_solution():
    law, report = solve(beta23(), tol=1e-6, max_level=14)
    return law, report


@pytest.fixture(params=['unit_atom', 'half_zero_half_one', 'wide_pair'])
def atomic_fixture(request):
    return request.getfixturevalue(request.param)
