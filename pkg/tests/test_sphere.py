import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gravpursuit.errors import InputError
from gravpursuit.sphere import (HarmonicModel, SobolevWeights, eval_sh, flat_index,
                                index_of, l2_inner, l2_norm, num_coeffs, sh_matrix,
                                sobolev_inner, sobolev_norm)

from conftest import gauss_grid, random_directions


@given(st.integers(0, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(-n, n))))
def test_flat_index_roundtrip(nj):
    n, j = nj
    assert index_of(flat_index(n, j)) == (n, j)


def test_flat_index_layout():
    assert flat_index(0, 0) == 0
    assert flat_index(1, -1) == 1
    assert flat_index(2, 2) == 8
    assert num_coeffs(100) == 101 ** 2
    with pytest.raises(InputError):
        flat_index(2, 3)


def test_constant_harmonic(rng):
    for d in random_directions(rng, 5):
        assert eval_sh(0, 0, d) == pytest.approx(0.2820948, abs=1e-7)
        assert eval_sh(0, 0, d) == pytest.approx((4 * np.pi) ** -0.5, rel=1e-15)


@pytest.mark.parametrize("n", [3, 10, 20])
def test_addition_theorem(rng, n):
    dirs = random_directions(rng, 100)
    Y = sh_matrix(dirs, n)
    block = Y[:, n * n:(n + 1) ** 2]
    np.testing.assert_allclose((block ** 2).sum(axis=1), (2 * n + 1) / (4 * np.pi),
                               rtol=0, atol=1e-10)


def test_quadrature_orthonormality():
    dirs, w = gauss_grid()
    Y = sh_matrix(dirs, 5)
    G = (Y * w[:, None]).T @ Y
    assert np.abs(G - np.eye(G.shape[0])).max() < 1e-10
    k = flat_index(2, 1)
    assert abs(np.sum(w * Y[:, k] ** 2) - 1.0) < 1e-10


def test_high_degree_is_finite(rng):
    Y = sh_matrix(random_directions(rng, 20), 150)
    assert np.all(np.isfinite(Y))


def test_sh_matrix_rejects_non_unit():
    with pytest.raises(InputError):
        sh_matrix(np.array([[1.0, 1.0, 0.0]]), 3)


def test_sobolev_examples():
    w = SobolevWeights(10)
    a = HarmonicModel.delta(10, 0, 0)
    assert sobolev_inner(a, a, w) == pytest.approx(0.0625, rel=1e-15)
    b = HarmonicModel.delta(10, 5, 2)
    assert sobolev_inner(b, b, w) == 915.0625
    assert sobolev_inner(a, b, w) == 0.0
    assert w.a[5] == 5.5 ** 2


def test_sobolev_matches_loop(rng):
    N = 12
    A = HarmonicModel(N, rng.standard_normal(num_coeffs(N)))
    B = HarmonicModel(N, rng.standard_normal(num_coeffs(N)))
    total = 0.0
    for k in range(num_coeffs(N)):
        n, _ = index_of(k)
        total += (n + 0.5) ** 4 * A.coeffs[k] * B.coeffs[k]
    assert sobolev_inner(A, B) == total
    assert sobolev_norm(A) == pytest.approx(np.sqrt(sobolev_inner(A, A)))


def test_l2_examples():
    assert l2_norm(HarmonicModel(4)) == 0.0
    assert l2_norm(HarmonicModel.delta(4, 3, -1, 2.0)) == 2.0


def test_l2_inner_matches_quadrature(rng):
    N = 5
    A = HarmonicModel(N, rng.standard_normal(num_coeffs(N)))
    B = HarmonicModel(N, rng.standard_normal(num_coeffs(N)))
    dirs, w = gauss_grid(30, 60)
    quad = np.sum(w * A.evaluate(dirs) * B.evaluate(dirs))
    assert abs(quad - l2_inner(A, B)) < 1e-8


def test_model_arithmetic_and_validation():
    a = HarmonicModel.delta(3, 2, 1, 1.5)
    b = HarmonicModel.delta(3, 2, 1, 0.5)
    assert (a + b)[2, 1] == 2.0
    assert (a - b)[2, 1] == 1.0
    assert (2 * a)[2, 1] == 3.0
    assert a.truncate(1).max_degree == 1
    with pytest.raises(InputError):
        HarmonicModel(3, np.zeros(5))
    with pytest.raises(InputError):
        a + HarmonicModel(4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2 ** 31 - 1))
def test_sobolev_norm_dominates_l2(N, seed):
    c = np.random.default_rng(seed).standard_normal(num_coeffs(N))
    m = HarmonicModel(N, c)
    # a_n >= a_0 = 1/4
    assert sobolev_norm(m) >= 0.25 * l2_norm(m) - 1e-12
