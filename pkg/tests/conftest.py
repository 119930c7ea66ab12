import numpy as np
import pytest

from condcap import KernelSpec, PlateSpec, SphereShell, assemble_matrix, discretize, solve_capacity
from condcap.solver import SolveOptions

ORIGIN = (0.0, 0.0, 0.0)


def concentric_specs(n=400, r=1.0, R=2.0):
    return [PlateSpec(1, 1, SphereShell(ORIGIN, r), n, 1.0), PlateSpec(2, -1, SphereShell(ORIGIN, R), n, 1.0)]


@pytest.fixture(scope="session")
def concentric():
    c = discretize(concentric_specs())
    rep, res, K = solve_capacity(c, opts=SolveOptions(gap_tolerance=1e-10))
    return c, K, res, rep


@pytest.fixture(scope="session")
def single_shell():
    c = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 400, 1.0)])
    rep, res, K = solve_capacity(c, opts=SolveOptions(gap_tolerance=1e-10))
    return c, K, res, rep


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
