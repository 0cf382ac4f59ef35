import numpy as np
import pytest

from qconnect.grid import GridManifold, MatrixFormField


def trig_field(grid: GridManifold, degree: int, rows: int, cols: int, rng: np.random.Generator, modes: int = 2, max_k: int = 2):
    """Random trigonometric polynomial form; periodic on every axis of a 2*pi box."""
    comps = []
    X = grid.coords()
    for _ in range(grid.ncomp(degree)):
        acc = np.zeros(grid.shape + (rows, cols))
        for _ in range(modes):
            k = rng.integers(-max_k, max_k + 1, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.normal(size=(rows, cols))
            arg = sum(kk * x for kk, x in zip(k, X)) + phase
            acc += np.cos(arg)[..., None, None] * amp
        comps.append(acc)
    return MatrixFormField(grid, degree, np.stack(comps, axis=grid.dim))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
