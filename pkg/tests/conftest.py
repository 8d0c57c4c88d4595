import numpy as np
import pytest

from homogjump.examples import diag2d, harmonic_1d, levy_atoms_2d, periodic_jump_1d, sine_drift_1d


@pytest.fixture(scope="session")
def harmonic():
    return harmonic_1d()


@pytest.fixture(scope="session")
def jump1d():
    return periodic_jump_1d()


@pytest.fixture(scope="session")
def levy2d():
    return levy_atoms_2d()


@pytest.fixture(scope="session")
def diag2():
    return diag2d()


@pytest.fixture(scope="session")
def sinedrift():
    return sine_drift_1d()


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture(scope="session")
def harmonic_pi():
    """Grid-oracle invariant law of the harmonic model at resolution 256."""
    from homogjump.torus import TorusGrid, grid_generator, stationary_solve

    m = harmonic_1d()
    grid = TorusGrid(m.period, (256,))
    return stationary_solve(grid_generator(m, grid), grid)
