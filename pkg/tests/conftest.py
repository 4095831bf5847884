import numpy as np
import pytest

from gravpursuit.forward import build_design_matrix, height_to_radius, reuter_grid


@pytest.fixture(scope="session")
def r500():
    return height_to_radius(500.0)


@pytest.fixture(scope="session")
def small_matrix(r500):
    """Degree-10 operator on the 502-point Reuter grid."""
    return build_design_matrix(reuter_grid(20, r500), 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_directions(rng, k):
    v = rng.standard_normal((k, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def gauss_grid(n_lat=60, n_lon=120):
    """Gauss-Legendre x equiangular quadrature nodes and weights on the sphere."""
    x, w = np.polynomial.legendre.leggauss(n_lat)
    phi = 2 * np.pi * np.arange(n_lon) / n_lon
    ct = np.repeat(x, n_lon)
    st = np.sqrt(1 - ct ** 2)
    ph = np.tile(phi, n_lat)
    dirs = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    weights = np.repeat(w, n_lon) * (2 * np.pi / n_lon)
    return dirs / np.linalg.norm(dirs, axis=1)[:, None], weights


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
